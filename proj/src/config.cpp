// Copyright 2026 The Minima Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "minima/config.hpp"

#include <algorithm>
#include <initializer_list>
#include <string>
#include <type_traits>

#include "minima/errors.hpp"
#include "minima/io.hpp"

namespace minima {
namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw ConfigError("'" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown key '" + key + "' in " + section);
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    const json& v = obj.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(section + "." + key + " must be a non-negative integer");
    }
  }
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(section + "." + key + " has the wrong type");
  }
}

void read_path(const json& obj, const char* key, std::filesystem::path& out, const std::string& section) {
  std::string s = out.string();
  read(obj, key, s, section);
  out = s;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

const json& section(const json& doc, const char* name) {
  static const json empty = json::object();
  return doc.contains(name) ? doc.at(name) : empty;
}

std::string family_list_error() { return "analyze.families must be a non-empty subset of tucker, tt, tr"; }

}  // namespace

std::filesystem::path Paths::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : dir / p;
}

RunConfig parse_config(const json& doc) {
  RunConfig c;
  check_keys(doc, "config",
             {"seeds", "synth", "analyze", "plan", "compress", "heal", "eval", "specdec", "paths"});

  const json& s = section(doc, "seeds");
  check_keys(s, "seeds", {"synth", "analyze", "calibration", "held_out", "specdec"});
  read(s, "synth", c.seeds.synth, "seeds");
  read(s, "analyze", c.seeds.analyze, "seeds");
  read(s, "calibration", c.seeds.calibration, "seeds");
  read(s, "held_out", c.seeds.held_out, "seeds");
  read(s, "specdec", c.seeds.specdec, "seeds");

  const json& sy = section(doc, "synth");
  check_keys(sy, "synth", {"layers", "hidden", "ffn", "vocab", "block", "fragile_layers", "min_tucker_rank",
                           "max_tucker_rank", "min_decay", "max_decay", "noise", "dtype"});
  SynthOptions& so = c.synth;
  read(sy, "layers", so.layers, "synth");
  read(sy, "hidden", so.hidden, "synth");
  read(sy, "ffn", so.ffn, "synth");
  read(sy, "vocab", so.vocab, "synth");
  read(sy, "block", so.block, "synth");
  read(sy, "fragile_layers", so.fragile_layers, "synth");
  read(sy, "min_tucker_rank", so.min_tucker_rank, "synth");
  read(sy, "max_tucker_rank", so.max_tucker_rank, "synth");
  read(sy, "min_decay", so.min_decay, "synth");
  read(sy, "max_decay", so.max_decay, "synth");
  read(sy, "noise", so.noise, "synth");
  std::string dtype = so.dtype == DType::F32 ? "f32" : "f64";
  read(sy, "dtype", dtype, "synth");
  require(dtype == "f32" || dtype == "f64", "synth.dtype must be f32 or f64");
  so.dtype = dtype == "f32" ? DType::F32 : DType::F64;
  require(so.layers >= 1, "synth.layers must be at least 1");
  require(so.hidden >= 16 && so.ffn >= 16 && so.vocab >= 16, "synth dimensions must be at least 16");
  require(so.block >= 16 && so.block <= so.hidden, "synth.block must lie in [16, hidden]");
  for (std::size_t f : so.fragile_layers) require(f < so.layers, "synth.fragile_layers entries must be < layers");
  require(so.min_tucker_rank >= 1 && so.min_tucker_rank <= so.max_tucker_rank,
          "synth Tucker ranks must satisfy 1 <= min <= max");
  require(so.min_decay > 0.0 && so.min_decay <= so.max_decay, "synth decays must satisfy 0 < min <= max");
  require(so.noise >= 0.0, "synth.noise must be non-negative");
  so.seed = c.seeds.synth;

  const json& an = section(doc, "analyze");
  check_keys(an, "analyze", {"patch_size", "families", "ratio_grid", "degradation_cap", "probe_stride",
                             "calib_samples", "hooi_iters", "epochs", "learning_rate"});
  AnalyzeOptions& ao = c.analyze;
  std::vector<std::size_t> patch{ao.patch_rows, ao.patch_cols};
  read(an, "patch_size", patch, "analyze");
  require(patch.size() == 2 && patch[0] >= 16 && patch[1] >= 16, "analyze.patch_size must be two values >= 16");
  ao.patch_rows = patch[0];
  ao.patch_cols = patch[1];
  if (an.contains("families")) {
    std::vector<std::string> names;
    read(an, "families", names, "analyze");
    require(!names.empty(), family_list_error());
    ao.families.clear();
    for (const auto& n : names) {
      Family f = Family::Dense;
      try {
        f = parse_family(n);
      } catch (const InvalidArgument&) {
        throw ConfigError(family_list_error());
      }
      require(f != Family::Dense, family_list_error());
      require(std::find(ao.families.begin(), ao.families.end(), f) == ao.families.end(), family_list_error());
      ao.families.push_back(f);
    }
  }
  read(an, "ratio_grid", ao.ratio_grid, "analyze");
  require(!ao.ratio_grid.empty(), "analyze.ratio_grid must be non-empty");
  for (double r : ao.ratio_grid) require(r > 0.0 && r <= 1.0, "analyze.ratio_grid values must lie in (0, 1]");
  read(an, "degradation_cap", ao.degradation_cap, "analyze");
  require(ao.degradation_cap > 0.0, "analyze.degradation_cap must be positive");
  read(an, "probe_stride", ao.probe_stride, "analyze");
  require(ao.probe_stride >= 1, "analyze.probe_stride must be at least 1");
  read(an, "calib_samples", ao.calib_samples, "analyze");
  require(ao.calib_samples >= 8, "analyze.calib_samples must be at least 8");
  read(an, "hooi_iters", ao.hooi_iters, "analyze");
  require(ao.hooi_iters <= 100, "analyze.hooi_iters must be at most 100");
  read(an, "epochs", ao.train.epochs, "analyze");
  require(ao.train.epochs >= 1, "analyze.epochs must be at least 1");
  read(an, "learning_rate", ao.train.learning_rate, "analyze");
  require(ao.train.learning_rate > 0.0, "analyze.learning_rate must be positive");
  ao.seed = c.seeds.analyze;
  ao.train.seed = c.seeds.analyze;

  const json& pl = section(doc, "plan");
  check_keys(pl, "plan", {"target_ratio", "mode", "single_family", "compress_embeddings"});
  read(pl, "target_ratio", c.plan.target_ratio, "plan");
  require(c.plan.target_ratio > 0.0 && c.plan.target_ratio <= 1.0, "plan.target_ratio must lie in (0, 1]");
  std::string mode(plan_mode_name(c.plan.mode));
  read(pl, "mode", mode, "plan");
  try {
    c.plan.mode = parse_plan_mode(mode);
  } catch (const InvalidArgument&) {
    throw ConfigError("plan.mode must be uniform, sensitivity or sensitivity_mixed");
  }
  std::string single(family_name(c.plan.options.single_family));
  read(pl, "single_family", single, "plan");
  try {
    c.plan.options.single_family = parse_family(single);
  } catch (const InvalidArgument&) {
    throw ConfigError("plan.single_family must be tucker, tt or tr");
  }
  require(c.plan.options.single_family != Family::Dense, "plan.single_family must be tucker, tt or tr");
  read(pl, "compress_embeddings", c.plan.options.compress_embeddings, "plan");
  c.plan.options.degradation_cap = ao.degradation_cap;

  const json& co = section(doc, "compress");
  check_keys(co, "compress", {"hooi_iters"});
  read(co, "hooi_iters", c.compress_hooi_iters, "compress");
  require(c.compress_hooi_iters <= 100, "compress.hooi_iters must be at most 100");

  const json& he = section(doc, "heal");
  check_keys(he, "heal", {"sweeps", "initial_step", "max_halvings", "calibration"});
  read(he, "sweeps", c.heal.sweeps, "heal");
  read(he, "initial_step", c.heal.initial_step, "heal");
  read(he, "max_halvings", c.heal.max_halvings, "heal");
  require(c.heal.sweeps <= 1000, "heal.sweeps must be at most 1000");
  require(c.heal.initial_step > 0.0, "heal.initial_step must be positive");
  require(c.heal.max_halvings <= 60, "heal.max_halvings must be at most 60");
  const json& ca = section(he, "calibration");
  check_keys(ca, "heal.calibration", {"source", "path", "samples"});
  std::string source = c.calibration.source == CalibrationSource::File ? "file" : "gaussian";
  read(ca, "source", source, "heal.calibration");
  require(source == "gaussian" || source == "file", "heal.calibration.source must be gaussian or file");
  c.calibration.source = source == "file" ? CalibrationSource::File : CalibrationSource::Gaussian;
  read_path(ca, "path", c.calibration.path, "heal.calibration");
  require(c.calibration.source == CalibrationSource::Gaussian || !c.calibration.path.empty(),
          "heal.calibration.path is required for file calibration");
  read(ca, "samples", c.calibration.samples, "heal.calibration");
  require(c.calibration.samples >= std::max<std::size_t>(1, ao.patch_cols / 4),
          "heal.calibration.samples must be at least patch columns / 4");

  const json& ev = section(doc, "eval");
  check_keys(ev, "eval", {"held_out_samples", "batch", "benchmark", "benchmark_reps", "benchmark_warmup"});
  read(ev, "held_out_samples", c.eval.held_out_samples, "eval");
  read(ev, "batch", c.eval.batch, "eval");
  read(ev, "benchmark", c.eval.benchmark, "eval");
  read(ev, "benchmark_reps", c.eval.benchmark_reps, "eval");
  read(ev, "benchmark_warmup", c.eval.benchmark_warmup, "eval");
  require(c.eval.held_out_samples >= 1, "eval.held_out_samples must be at least 1");
  require(c.eval.batch >= 1, "eval.batch must be at least 1");
  require(c.eval.benchmark_reps >= 10, "eval.benchmark_reps must be at least 10");

  const json& sd = section(doc, "specdec");
  check_keys(sd, "specdec", {"target", "draft", "k", "n_tokens"});
  read_path(sd, "target", c.specdec.target, "specdec");
  read_path(sd, "draft", c.specdec.draft, "specdec");
  read(sd, "k", c.specdec.k, "specdec");
  read(sd, "n_tokens", c.specdec.n_tokens, "specdec");
  require(c.specdec.k >= 1 && c.specdec.k <= 16, "specdec.k must lie in [1, 16]");
  require(c.specdec.n_tokens >= 1, "specdec.n_tokens must be at least 1");

  const json& pa = section(doc, "paths");
  check_keys(pa, "paths",
             {"dir", "model", "sensitivity", "plan", "compressed", "healed", "report", "specdec"});
  read_path(pa, "dir", c.paths.dir, "paths");
  read_path(pa, "model", c.paths.model, "paths");
  read_path(pa, "sensitivity", c.paths.sensitivity, "paths");
  read_path(pa, "plan", c.paths.plan, "paths");
  read_path(pa, "compressed", c.paths.compressed, "paths");
  read_path(pa, "healed", c.paths.healed, "paths");
  read_path(pa, "report", c.paths.report, "paths");
  read_path(pa, "specdec", c.paths.specdec, "paths");
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json config_to_json(const RunConfig& c) {
  std::vector<std::string> families;
  for (Family f : c.analyze.families) families.emplace_back(family_name(f));
  return {
      {"seeds",
       {{"synth", c.seeds.synth},
        {"analyze", c.seeds.analyze},
        {"calibration", c.seeds.calibration},
        {"held_out", c.seeds.held_out},
        {"specdec", c.seeds.specdec}}},
      {"synth",
       {{"layers", c.synth.layers},
        {"hidden", c.synth.hidden},
        {"ffn", c.synth.ffn},
        {"vocab", c.synth.vocab},
        {"block", c.synth.block},
        {"fragile_layers", c.synth.fragile_layers},
        {"min_tucker_rank", c.synth.min_tucker_rank},
        {"max_tucker_rank", c.synth.max_tucker_rank},
        {"min_decay", c.synth.min_decay},
        {"max_decay", c.synth.max_decay},
        {"noise", c.synth.noise},
        {"dtype", c.synth.dtype == DType::F32 ? "f32" : "f64"}}},
      {"analyze",
       {{"patch_size", {c.analyze.patch_rows, c.analyze.patch_cols}},
        {"families", families},
        {"ratio_grid", c.analyze.ratio_grid},
        {"degradation_cap", c.analyze.degradation_cap},
        {"probe_stride", c.analyze.probe_stride},
        {"calib_samples", c.analyze.calib_samples},
        {"hooi_iters", c.analyze.hooi_iters},
        {"epochs", c.analyze.train.epochs},
        {"learning_rate", c.analyze.train.learning_rate}}},
      {"plan",
       {{"target_ratio", c.plan.target_ratio},
        {"mode", plan_mode_name(c.plan.mode)},
        {"single_family", family_name(c.plan.options.single_family)},
        {"compress_embeddings", c.plan.options.compress_embeddings}}},
      {"compress", {{"hooi_iters", c.compress_hooi_iters}}},
      {"heal",
       {{"sweeps", c.heal.sweeps},
        {"initial_step", c.heal.initial_step},
        {"max_halvings", c.heal.max_halvings},
        {"calibration",
         {{"source", c.calibration.source == CalibrationSource::File ? "file" : "gaussian"},
          {"path", c.calibration.path.string()},
          {"samples", c.calibration.samples}}}}},
      {"eval",
       {{"held_out_samples", c.eval.held_out_samples},
        {"batch", c.eval.batch},
        {"benchmark", c.eval.benchmark},
        {"benchmark_reps", c.eval.benchmark_reps},
        {"benchmark_warmup", c.eval.benchmark_warmup}}},
      {"specdec",
       {{"target", c.specdec.target.string()},
        {"draft", c.specdec.draft.string()},
        {"k", c.specdec.k},
        {"n_tokens", c.specdec.n_tokens}}},
      {"paths",
       {{"dir", c.paths.dir.string()},
        {"model", c.paths.model.string()},
        {"sensitivity", c.paths.sensitivity.string()},
        {"plan", c.paths.plan.string()},
        {"compressed", c.paths.compressed.string()},
        {"healed", c.paths.healed.string()},
        {"report", c.paths.report.string()},
        {"specdec", c.paths.specdec.string()}}},
  };
}

}  // namespace minima
