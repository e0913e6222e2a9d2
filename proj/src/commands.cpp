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
#include "minima/commands.hpp"

#include <array>

#include "minima/container.hpp"
#include "minima/documents.hpp"
#include "minima/errors.hpp"
#include "minima/io.hpp"
#include "minima/spec_decode.hpp"
#include "minima/structured.hpp"

namespace minima {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::array<std::string_view, 7> kStageNames{"synth", "analyze", "plan", "compress",
                                                      "heal",  "eval",    "specdec"};

fs::path require_input(const RunConfig& c, const fs::path& p, const char* what) {
  const fs::path full = c.paths.resolve(p);
  if (!fs::is_regular_file(full)) {
    throw UsageError(std::string("missing ") + what + " '" + full.string() + "'");
  }
  return full;
}

json read_json(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// "dir/name.ext" -> "dir/name<suffix>".
fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_filename(p.stem().string() + suffix);
  return out;
}

json with_seeds(json doc, const RunConfig& c) {
  doc["seeds"] = config_to_json(c)["seeds"];
  return doc;
}

CompressedModel read_compressed(const fs::path& path) {
  return compressed_from_file(read_tensor_file(path));
}

void write_compressed(const CompressedModel& cm, const RunConfig& c, const fs::path& path) {
  TensorFile f = compressed_to_file(cm);
  f.metadata["seeds"] = config_to_json(c)["seeds"];
  write_tensor_file(f, path);
}

json heal_summary(const std::vector<HealRecord>& log) {
  std::size_t monotone = 0, improved = 0, reverted = 0;
  for (const auto& r : log) {
    bool mono = true;
    for (std::size_t i = 1; i < r.objective.size(); ++i) mono = mono && r.objective[i] <= r.objective[i - 1];
    monotone += mono;
    improved += !r.objective.empty() && r.objective.back() < r.objective.front();
    reverted += r.reverted;
  }
  return {{"patches", log.size()}, {"monotone", monotone}, {"improved", improved}, {"reverted", reverted}};
}

json benchmark_model(const CompressedModel& cm, const EvalConfig& e, std::uint64_t seed) {
  double structured = 0.0, dense = 0.0;
  std::size_t index = 0;
  for (const auto& m : cm.matrices) {
    for (const auto& p : m.patches) {
      const Tensor x = gaussian_calibration(p.patch.cols.size(), e.batch, seed, index++);
      const BenchmarkResult b = micro_benchmark(p.layer, x, e.benchmark_reps, e.benchmark_warmup);
      structured += b.structured.median_ns;
      dense += b.dense.median_ns;
    }
  }
  return {{"structured_median_ns", structured},
          {"dense_median_ns", dense},
          {"reps", e.benchmark_reps},
          {"note", "sum of per-patch medians; wall-clock, machine-dependent"}};
}

}  // namespace

std::string_view stage_name(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

Stage parse_stage(std::string_view name) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (kStageNames[i] == name) return static_cast<Stage>(i);
  }
  throw UsageError("unknown command '" + std::string(name) + "'");
}

RunConfig apply_overrides(const RunConfig& config, Stage stage, const Overrides& o) {
  json doc = config_to_json(config);
  if (o.target_ratio) doc["plan"]["target_ratio"] = *o.target_ratio;
  if (o.seed) {
    static constexpr std::array<const char*, 7> kSeedKey{"synth",    "analyze",  "analyze", "analyze",
                                                         "calibration", "held_out", "specdec"};
    doc["seeds"][kSeedKey[static_cast<std::size_t>(stage)]] = *o.seed;
  }
  if (o.out) {
    static constexpr std::array<const char*, 7> kOutKey{"model",  "sensitivity", "plan",   "compressed",
                                                        "healed", "report",      "specdec"};
    doc["paths"][kOutKey[static_cast<std::size_t>(stage)]] = o.out->string();
  }
  return parse_config(doc);
}

std::string dump_document(const json& doc) { return doc.dump(2) + "\n"; }

std::vector<Tensor> load_calibration(const ModelContainer& model, const CalibrationConfig& c,
                                     std::uint64_t seed, const Paths& paths) {
  if (c.source == CalibrationSource::Gaussian) return gaussian_calibration_set(model, c.samples, seed);
  const fs::path path = paths.resolve(c.path);
  if (c.path.empty() || !fs::is_regular_file(path)) {
    throw UsageError("missing calibration file '" + path.string() + "'");
  }
  const TensorFile f = read_tensor_file(path);
  std::vector<Tensor> out;
  for (const auto& e : model.entries()) {
    const StoredTensor* found = nullptr;
    for (const auto& s : f.entries) {
      if (s.name == e.name) found = &s;
    }
    if (!found) throw FormatError("calibration file lacks an entry for '" + e.name + "'");
    if (found->tensor.rank() != 2 || found->tensor.rows() != e.matrix.cols()) {
      throw ShapeError("calibration entry '" + e.name + "' must have " + std::to_string(e.matrix.cols()) +
                       " rows");
    }
    out.push_back(found->tensor);
  }
  return out;
}

std::vector<fs::path> cmd_synth(const RunConfig& c) {
  const fs::path out = c.paths.resolve(c.paths.model);
  ModelContainer model = synthesize_model(c.synth);
  TensorFile f = model_to_file(model);
  f.metadata["schema_version"] = kSchemaVersion;
  f.metadata["seeds"] = config_to_json(c)["seeds"];
  write_tensor_file(f, out);
  return {out};
}

std::vector<fs::path> cmd_analyze(const RunConfig& c) {
  const ModelContainer model = read_container(require_input(c, c.paths.model, "model"));
  const Analysis a = analyze_model(model, c.analyze);
  const fs::path out = c.paths.resolve(c.paths.sensitivity);
  const fs::path csv = sibling(out, ".csv");
  write_file_atomic(out, dump_document(with_seeds(sensitivity_to_json(a, c), c)));
  write_file_atomic(csv, sensitivity_csv(a));
  return {out, csv};
}

std::vector<fs::path> cmd_plan(const RunConfig& c) {
  const auto analysis = sensitivity_from_json(read_json(require_input(c, c.paths.sensitivity, "sensitivity document")));
  const auto candidates = build_candidates(analysis);
  const CompressionPlan plan = allocate(candidates, c.plan.target_ratio, c.plan.mode, c.plan.options);
  const fs::path out = c.paths.resolve(c.paths.plan);
  const fs::path csv = sibling(out, ".csv");
  write_file_atomic(out, dump_document(with_seeds(plan_to_json(plan, c), c)));
  write_file_atomic(csv, plan_csv(plan));
  return {out, csv};
}

std::vector<fs::path> cmd_compress(const RunConfig& c) {
  const ModelContainer model = read_container(require_input(c, c.paths.model, "model"));
  const CompressionPlan plan = plan_from_json(read_json(require_input(c, c.paths.plan, "plan document")));
  const CompressedModel cm = compress_model(model, plan, c.compress_hooi_iters);
  const fs::path out = c.paths.resolve(c.paths.compressed);
  write_compressed(cm, c, out);
  return {out};
}

std::vector<fs::path> cmd_heal(const RunConfig& c) {
  const ModelContainer model = read_container(require_input(c, c.paths.model, "model"));
  const CompressedModel cm = read_compressed(require_input(c, c.paths.compressed, "compressed model"));
  const auto calib = load_calibration(model, c.calibration, c.seeds.calibration, c.paths);
  const CompressedModel healed = heal(cm, model, calib, c.heal);
  const fs::path out = c.paths.resolve(c.paths.healed);
  const fs::path log = sibling(out, "_log.json");
  const fs::path csv = sibling(out, "_log.csv");
  write_compressed(healed, c, out);
  json doc = document_header("heal_log");
  doc["summary"] = heal_summary(healed.heal_log);
  doc["records"] = heal_log_to_json(healed.heal_log);
  write_file_atomic(log, dump_document(with_seeds(doc, c)));
  write_file_atomic(csv, heal_log_csv(healed.heal_log));
  return {out, log, csv};
}

std::vector<fs::path> cmd_eval(const RunConfig& c) {
  const ModelContainer model = read_container(require_input(c, c.paths.model, "model"));
  const CompressedModel before = read_compressed(require_input(c, c.paths.compressed, "compressed model"));
  const CompressedModel after = read_compressed(require_input(c, c.paths.healed, "healed model"));
  const auto in_sample = load_calibration(model, c.calibration, c.seeds.calibration, c.paths);
  const auto held_out = gaussian_calibration_set(model, c.eval.held_out_samples, c.seeds.held_out);

  const FlopReport flops = flop_report(after, c.eval.batch);
  QualityReport held = evaluate(model, before, after, held_out);
  held.dense_flops = flops.dense_flops;
  held.structured_flops = flops.structured_flops;
  QualityReport ins = evaluate(model, before, after, in_sample);
  ins.dense_flops = flops.dense_flops;
  ins.structured_flops = flops.structured_flops;

  json doc = document_header("report");
  doc["mode"] = plan_mode_name(after.mode);
  doc["target_ratio"] = after.target_ratio;
  doc["achieved_ratio"] = after.ratio();
  doc["params"] = after.param_count();
  doc["dense_params"] = after.dense_param_count();
  doc["held_out"] = quality_to_json(held);
  doc["in_sample"] = quality_to_json(ins);
  doc["flops"] = flops_to_json(flops);
  doc["healing"] = heal_summary(after.heal_log);
  if (c.eval.benchmark) doc["benchmark"] = benchmark_model(after, c.eval, c.seeds.held_out);

  const fs::path out = c.paths.resolve(c.paths.report);
  const fs::path csv = sibling(out, ".csv");
  const fs::path flops_csv = sibling(out, "_flops.csv");
  std::string fc = "name,dense_flops,structured_flops,max_intermediate\n";
  for (const auto& l : flops.layers) {
    fc += l.name + ',' + std::to_string(l.dense_flops) + ',' + std::to_string(l.structured_flops) + ',' +
          std::to_string(l.max_intermediate) + '\n';
  }
  write_file_atomic(out, dump_document(with_seeds(doc, c)));
  write_file_atomic(csv, quality_csv(held));
  write_file_atomic(flops_csv, fc);
  return {out, csv, flops_csv};
}

std::vector<fs::path> cmd_specdec(const RunConfig& c) {
  if (c.specdec.target.empty() || c.specdec.draft.empty()) {
    throw UsageError("specdec needs specdec.target and specdec.draft");
  }
  const MarkovLM target = markov_from_json(read_json(require_input(c, c.specdec.target, "target model")));
  const MarkovLM draft = markov_from_json(read_json(require_input(c, c.specdec.draft, "draft model")));
  const Generation g = generate(target, draft, c.specdec.k, c.specdec.n_tokens, c.seeds.specdec);

  json doc = document_header("specdec");
  doc["k"] = c.specdec.k;
  doc["n_tokens"] = c.specdec.n_tokens;
  doc["stats"] = specdec_stats_to_json(g.stats);
  if (target.order == 0 && draft.order == 0) {
    const double alpha = acceptance_probability(target.initial, draft.initial);
    doc["alpha"] = alpha;
    doc["expected_tokens_per_round"] = expected_tokens_per_round(alpha, c.specdec.k);
  }
  std::vector<std::size_t> counts(target.vocab_size, 0);
  for (Token t : g.tokens) ++counts[t];
  doc["token_counts"] = counts;

  const fs::path out = c.paths.resolve(c.paths.specdec);
  const fs::path csv = sibling(out, ".csv");
  std::string hist = "accepted,rounds\n";
  for (std::size_t i = 0; i < g.stats.accepted_per_round.size(); ++i) {
    hist += std::to_string(i) + ',' + std::to_string(g.stats.accepted_per_round[i]) + '\n';
  }
  write_file_atomic(out, dump_document(with_seeds(doc, c)));
  write_file_atomic(csv, hist);
  return {out, csv};
}

std::vector<fs::path> run_stage(Stage stage, const RunConfig& c) {
  switch (stage) {
    case Stage::Synth: return cmd_synth(c);
    case Stage::Analyze: return cmd_analyze(c);
    case Stage::Plan: return cmd_plan(c);
    case Stage::Compress: return cmd_compress(c);
    case Stage::Heal: return cmd_heal(c);
    case Stage::Eval: return cmd_eval(c);
    case Stage::SpecDec: return cmd_specdec(c);
  }
  throw UsageError("unknown stage");
}

}  // namespace minima
