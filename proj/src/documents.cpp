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
#include "minima/documents.hpp"

#include <cstdio>
#include <sstream>

#include "minima/errors.hpp"

namespace minima {
namespace {

using nlohmann::json;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json range_to_json(const IndexRange& r) { return {r.begin, r.end}; }

IndexRange range_from_json(const json& j) { return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()}; }

json patch_to_json(const Patch& p) {
  return {{"id", p.id},
          {"layer_name", p.layer_name},
          {"layer_index", p.layer_index},
          {"submodule_kind", submodule_name(p.kind)},
          {"rows", range_to_json(p.rows)},
          {"cols", range_to_json(p.cols)}};
}

Patch patch_from_json(const json& j) {
  Patch p;
  p.id = j.at("id").get<std::size_t>();
  p.layer_name = j.at("layer_name").get<std::string>();
  p.layer_index = j.at("layer_index").get<std::size_t>();
  p.kind = parse_submodule(j.at("submodule_kind").get<std::string>());
  p.rows = range_from_json(j.at("rows"));
  p.cols = range_from_json(j.at("cols"));
  return p;
}

json shape_to_json(const ModeShape& s) { return {{"modes", s.modes}, {"row_mode_count", s.row_mode_count}}; }

ModeShape shape_from_json(const json& j) {
  return {j.at("modes").get<Shape>(), j.at("row_mode_count").get<std::size_t>()};
}

Family family_from(const json& j) { return parse_family(j.get<std::string>()); }

json features_to_json(const FeatureVector& f) {
  json out = json::object();
  for (std::size_t i = 0; i < kFeatureCount; ++i) out[FeatureVector::names()[i]] = f.values[i];
  return out;
}

FeatureVector features_from_json(const json& j) {
  FeatureVector f;
  for (std::size_t i = 0; i < kFeatureCount; ++i) f.values[i] = j.at(FeatureVector::names()[i]).get<double>();
  return f;
}

json predictor_to_json(const Predictor& p) {
  json heads = json::array();
  for (const auto& h : p.heads) heads.push_back({{"family", family_name(h.family)}, {"ratio", h.ratio}});
  return {{"hidden_units", kHiddenUnits},
          {"heads", heads},
          {"feature_mean", p.feature_mean},
          {"feature_scale", p.feature_scale},
          {"w1", p.w1},
          {"b1", p.b1},
          {"score_w", p.score_w},
          {"score_b", p.score_b},
          {"head_w", p.head_w},
          {"head_b", p.head_b},
          {"epochs", p.options.epochs},
          {"learning_rate", p.options.learning_rate},
          {"seed", p.options.seed},
          {"initial_mse", p.initial_mse},
          {"final_mse", p.final_mse},
          {"log", p.log}};
}

template <typename F>
auto wrap(const char* what, F&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

std::string tensor_name(const CompressedMatrix& m, const PatchLayer& p, const std::string& part) {
  return m.name + "/" + std::to_string(p.patch.id) + "/" + part;
}

}  // namespace

json document_header(const std::string& kind) {
  return {{"schema_version", kSchemaVersion}, {"kind", kind}, {"artifact_version", kArtifactVersion}};
}

void check_document(const json& doc, const std::string& kind) {
  if (!doc.is_object() || !doc.contains("kind") || doc.at("kind") != kind) {
    throw FormatError("expected a '" + kind + "' document");
  }
  if (!doc.contains("schema_version") || doc.at("schema_version") != kSchemaVersion) {
    throw FormatError("unsupported schema version in '" + kind + "' document");
  }
}

json sensitivity_to_json(const Analysis& a, const RunConfig& config) {
  json doc = document_header("sensitivity");
  doc["seeds"] = {{"analyze", config.seeds.analyze}};
  doc["analyze"] = config_to_json(config)["analyze"];
  doc["predictor"] = predictor_to_json(a.predictor);
  json patches = json::array();
  for (const auto& pa : a.patches) {
    json probes = json::array();
    for (const auto& r : pa.probes) {
      probes.push_back({{"family", family_name(r.family)},
                        {"target_ratio", r.target_ratio},
                        {"ranks", r.ranks.ranks},
                        {"params", r.params},
                        {"measured_degradation", r.measured_degradation}});
    }
    json preds = json::array();
    for (const auto& h : pa.record.predictions) {
      json e = {{"family", family_name(h.family)}, {"ratio", h.ratio}, {"predicted", h.predicted}};
      e["measured"] = h.measured ? json(*h.measured) : json(nullptr);
      preds.push_back(e);
    }
    json recs = json::array();
    for (const auto& r : pa.record.recommendations) {
      recs.push_back({{"family", family_name(r.family)},
                      {"keep_dense", r.keep_dense},
                      {"ratio", r.ratio},
                      {"predicted_degradation", r.predicted_degradation}});
    }
    json p = patch_to_json(pa.patch);
    p["mode_shape"] = shape_to_json(pa.shape);
    p["features"] = features_to_json(pa.features);
    p["probed"] = pa.probed;
    p["probes"] = probes;
    p["score"] = pa.record.score;
    p["predictions"] = preds;
    p["recommendations"] = recs;
    patches.push_back(std::move(p));
  }
  doc["patches"] = std::move(patches);
  doc["log"] = a.log;
  return doc;
}

std::vector<PatchAnalysis> sensitivity_from_json(const json& doc) {
  check_document(doc, "sensitivity");
  return wrap("sensitivity document", [&] {
    std::vector<PatchAnalysis> out;
    for (const auto& p : doc.at("patches")) {
      PatchAnalysis pa;
      pa.patch = patch_from_json(p);
      pa.shape = shape_from_json(p.at("mode_shape"));
      pa.features = features_from_json(p.at("features"));
      pa.probed = p.at("probed").get<bool>();
      for (const auto& r : p.at("probes")) {
        const Family f = family_from(r.at("family"));
        pa.probes.push_back({pa.patch.id, f, r.at("target_ratio").get<double>(),
                             RankSpec{f, r.at("ranks").get<std::vector<std::size_t>>()},
                             r.at("params").get<std::size_t>(), r.at("measured_degradation").get<double>()});
      }
      pa.record.patch_id = pa.patch.id;
      pa.record.score = p.at("score").get<double>();
      for (const auto& h : p.at("predictions")) {
        HeadPrediction hp{family_from(h.at("family")), h.at("ratio").get<double>(), h.at("predicted").get<double>(), {}};
        if (!h.at("measured").is_null()) hp.measured = h.at("measured").get<double>();
        pa.record.predictions.push_back(hp);
      }
      for (const auto& r : p.at("recommendations")) {
        pa.record.recommendations.push_back({family_from(r.at("family")), r.at("keep_dense").get<bool>(),
                                             r.at("ratio").get<double>(),
                                             r.at("predicted_degradation").get<double>()});
      }
      out.push_back(std::move(pa));
    }
    return out;
  });
}

std::string sensitivity_csv(const Analysis& a) {
  std::ostringstream os;
  os << "patch_id,layer_name,layer_index,submodule_kind,probed,score";
  for (const char* n : FeatureVector::names()) os << ',' << n;
  os << '\n';
  for (const auto& pa : a.patches) {
    os << pa.patch.id << ',' << pa.patch.layer_name << ',' << pa.patch.layer_index << ','
       << submodule_name(pa.patch.kind) << ',' << (pa.probed ? 1 : 0) << ',' << num(pa.record.score);
    for (double v : pa.features.values) os << ',' << num(v);
    os << '\n';
  }
  return os.str();
}

json plan_to_json(const CompressionPlan& plan, const RunConfig& config) {
  json doc = document_header("plan");
  doc["seeds"] = {{"analyze", config.seeds.analyze}};
  doc["mode"] = plan_mode_name(plan.mode);
  doc["target_ratio"] = plan.target_ratio;
  doc["achieved_params"] = plan.achieved_params;
  doc["dense_params"] = plan.dense_params;
  doc["achieved_ratio"] = plan.achieved_ratio();
  doc["total_predicted_degradation"] = plan.total_predicted_degradation();
  const PlanSummary s = plan_summary(plan);
  auto group = [](const GroupSummary& g) {
    return json{{"patches", g.patches},
                {"compressed", g.compressed},
                {"params", g.params},
                {"dense_params", g.dense_params},
                {"predicted_degradation", g.predicted_degradation}};
  };
  json by_sub = json::object(), by_fam = json::object();
  for (const auto& [k, g] : s.by_submodule) by_sub[k] = group(g);
  for (const auto& [k, g] : s.by_family) by_fam[k] = group(g);
  doc["summary"] = {{"total", group(s.total)}, {"by_submodule", by_sub}, {"by_family", by_fam}};
  json entries = json::array();
  for (const auto& e : plan.entries) {
    json j = patch_to_json(e.patch);
    j["mode_shape"] = shape_to_json(e.shape);
    j["keep_dense"] = e.keep_dense;
    j["family"] = family_name(e.family);
    j["ratio"] = e.ratio;
    j["ranks"] = e.ranks.ranks;
    j["params"] = e.params;
    j["predicted_degradation"] = e.predicted_degradation;
    entries.push_back(std::move(j));
  }
  doc["entries"] = std::move(entries);
  return doc;
}

CompressionPlan plan_from_json(const json& doc) {
  check_document(doc, "plan");
  return wrap("plan document", [&] {
    CompressionPlan plan;
    plan.mode = parse_plan_mode(doc.at("mode").get<std::string>());
    plan.target_ratio = doc.at("target_ratio").get<double>();
    for (const auto& j : doc.at("entries")) {
      PlanEntry e;
      e.patch = patch_from_json(j);
      e.shape = shape_from_json(j.at("mode_shape"));
      e.keep_dense = j.at("keep_dense").get<bool>();
      e.family = family_from(j.at("family"));
      e.ratio = j.at("ratio").get<double>();
      e.ranks = RankSpec{e.family, j.at("ranks").get<std::vector<std::size_t>>()};
      e.params = j.at("params").get<std::size_t>();
      e.predicted_degradation = j.at("predicted_degradation").get<double>();
      plan.achieved_params += e.params;
      plan.dense_params += e.patch.size();
      plan.entries.push_back(std::move(e));
    }
    if (plan.achieved_params != doc.at("achieved_params").get<std::size_t>()) {
      throw FormatError("plan document: achieved_params disagrees with its entries");
    }
    return plan;
  });
}

std::string plan_csv(const CompressionPlan& plan) {
  std::ostringstream os;
  os << "patch_id,layer_name,layer_index,submodule_kind,family,ratio,params,dense_params,predicted_degradation\n";
  for (const auto& e : plan.entries) {
    os << e.patch.id << ',' << e.patch.layer_name << ',' << e.patch.layer_index << ','
       << submodule_name(e.patch.kind) << ',' << family_name(e.family) << ',' << num(e.ratio) << ','
       << e.params << ',' << e.patch.size() << ',' << num(e.predicted_degradation) << '\n';
  }
  return os.str();
}

TensorFile compressed_to_file(const CompressedModel& cm) {
  TensorFile f;
  json matrices = json::array();
  for (const auto& m : cm.matrices) {
    json patches = json::array();
    for (const auto& p : m.patches) {
      const CompressedLayer& l = p.layer;
      const bool has_core = l.family == Family::Dense || l.family == Family::Tucker;
      if (has_core) f.entries.push_back({tensor_name(m, p, "core"), DType::F64, l.core});
      for (std::size_t k = 0; k < l.factors.size(); ++k) {
        f.entries.push_back({tensor_name(m, p, "f" + std::to_string(k)), DType::F64, l.factors[k]});
      }
      json j = patch_to_json(p.patch);
      j["family"] = family_name(l.family);
      j["mode_shape"] = shape_to_json(l.shape);
      j["has_core"] = has_core;
      j["factors"] = l.factors.size();
      patches.push_back(std::move(j));
    }
    matrices.push_back({{"name", m.name},
                        {"rows", m.rows},
                        {"cols", m.cols},
                        {"layer_index", m.layer_index},
                        {"submodule_kind", submodule_name(m.kind)},
                        {"dtype", m.dtype == DType::F32 ? "f32" : "f64"},
                        {"patches", std::move(patches)}});
  }
  f.metadata = document_header("compressed");
  f.metadata["total_layers"] = cm.total_layers;
  f.metadata["provenance"] = cm.provenance;
  f.metadata["mode"] = plan_mode_name(cm.mode);
  f.metadata["target_ratio"] = cm.target_ratio;
  f.metadata["matrices"] = std::move(matrices);
  f.metadata["heal_log"] = heal_log_to_json(cm.heal_log);
  return f;
}

CompressedModel compressed_from_file(const TensorFile& file) {
  check_document(file.metadata, "compressed");
  return wrap("compressed container", [&] {
    std::map<std::string, const Tensor*> tensors;
    for (const auto& e : file.entries) tensors[e.name] = &e.tensor;
    auto take = [&](const std::string& name) -> const Tensor& {
      const auto it = tensors.find(name);
      if (it == tensors.end()) throw FormatError("compressed container lacks tensor '" + name + "'");
      return *it->second;
    };
    const json& md = file.metadata;
    CompressedModel cm;
    cm.total_layers = md.at("total_layers").get<std::size_t>();
    cm.provenance = md.at("provenance").get<std::string>();
    cm.mode = parse_plan_mode(md.at("mode").get<std::string>());
    cm.target_ratio = md.at("target_ratio").get<double>();
    for (const auto& mj : md.at("matrices")) {
      CompressedMatrix m;
      m.name = mj.at("name").get<std::string>();
      m.rows = mj.at("rows").get<std::size_t>();
      m.cols = mj.at("cols").get<std::size_t>();
      m.layer_index = mj.at("layer_index").get<std::size_t>();
      m.kind = parse_submodule(mj.at("submodule_kind").get<std::string>());
      m.dtype = mj.at("dtype").get<std::string>() == "f32" ? DType::F32 : DType::F64;
      for (const auto& pj : mj.at("patches")) {
        PatchLayer p;
        p.patch = patch_from_json(pj);
        p.layer.family = family_from(pj.at("family"));
        p.layer.shape = shape_from_json(pj.at("mode_shape"));
        if (pj.at("has_core").get<bool>()) p.layer.core = take(tensor_name(m, p, "core"));
        const auto nf = pj.at("factors").get<std::size_t>();
        for (std::size_t k = 0; k < nf; ++k) p.layer.factors.push_back(take(tensor_name(m, p, "f" + std::to_string(k))));
        m.patches.push_back(std::move(p));
      }
      cm.matrices.push_back(std::move(m));
    }
    cm.heal_log = heal_log_from_json(md.at("heal_log"));
    return cm;
  });
}

json heal_log_to_json(const std::vector<HealRecord>& log) {
  json out = json::array();
  for (const auto& r : log) {
    out.push_back({{"patch_id", r.patch_id},
                   {"family", family_name(r.family)},
                   {"objective", r.objective},
                   {"accepted", r.accepted},
                   {"rejected", r.rejected},
                   {"pinv_fallbacks", r.pinv_fallbacks},
                   {"reverted", r.reverted}});
  }
  return out;
}

std::vector<HealRecord> heal_log_from_json(const json& doc) {
  std::vector<HealRecord> out;
  for (const auto& j : doc) {
    HealRecord r;
    r.patch_id = j.at("patch_id").get<std::size_t>();
    r.family = family_from(j.at("family"));
    r.objective = j.at("objective").get<std::vector<double>>();
    r.accepted = j.at("accepted").get<std::size_t>();
    r.rejected = j.at("rejected").get<std::size_t>();
    r.pinv_fallbacks = j.at("pinv_fallbacks").get<std::size_t>();
    r.reverted = j.at("reverted").get<bool>();
    out.push_back(std::move(r));
  }
  return out;
}

std::string heal_log_csv(const std::vector<HealRecord>& log) {
  std::ostringstream os;
  os << "patch_id,family,sweep,objective\n";
  for (const auto& r : log) {
    for (std::size_t s = 0; s < r.objective.size(); ++s) {
      os << r.patch_id << ',' << family_name(r.family) << ',' << s << ',' << num(r.objective[s]) << '\n';
    }
  }
  return os.str();
}

json quality_to_json(const QualityReport& q) {
  json layers = json::array();
  for (const auto& l : q.layers) {
    layers.push_back({{"name", l.name},
                      {"layer_index", l.layer_index},
                      {"submodule_kind", submodule_name(l.kind)},
                      {"deviation_before", l.deviation_before},
                      {"deviation_after", l.deviation_after},
                      {"degenerate", l.degenerate},
                      {"params", l.params},
                      {"dense_params", l.dense_params}});
  }
  return {{"mean_before", q.mean_before},
          {"max_before", q.max_before},
          {"mean_after", q.mean_after},
          {"max_after", q.max_after},
          {"params", q.params},
          {"dense_params", q.dense_params},
          {"dense_flops", q.dense_flops},
          {"structured_flops", q.structured_flops},
          {"layers", layers}};
}

std::string quality_csv(const QualityReport& q) {
  std::ostringstream os;
  os << "name,layer_index,submodule_kind,deviation_before,deviation_after,degenerate,params,dense_params\n";
  for (const auto& l : q.layers) {
    os << l.name << ',' << l.layer_index << ',' << submodule_name(l.kind) << ',' << num(l.deviation_before)
       << ',' << num(l.deviation_after) << ',' << (l.degenerate ? 1 : 0) << ',' << l.params << ','
       << l.dense_params << '\n';
  }
  return os.str();
}

json flops_to_json(const FlopReport& f) {
  json layers = json::array();
  for (const auto& l : f.layers) {
    layers.push_back({{"name", l.name},
                      {"dense_flops", l.dense_flops},
                      {"structured_flops", l.structured_flops},
                      {"max_intermediate", l.max_intermediate}});
  }
  return {{"batch", f.batch},
          {"dense_flops", f.dense_flops},
          {"structured_flops", f.structured_flops},
          {"speedup_ratio", f.speedup_ratio},
          {"layers", layers}};
}

json specdec_stats_to_json(const SpecDecodeStats& s) {
  return {{"tokens_generated", s.tokens_generated},
          {"rounds", s.rounds},
          {"proposed", s.proposed},
          {"accepted", s.accepted},
          {"accepted_per_round", s.accepted_per_round},
          {"acceptance_rate", s.acceptance_rate},
          {"tokens_per_round", s.tokens_per_round}};
}

}  // namespace minima
