#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "minima/commands.hpp"
#include "minima/container.hpp"
#include "minima/documents.hpp"
#include "minima/errors.hpp"
#include "minima/io.hpp"
#include "minima/tensor_ops.hpp"
#include "test_util.hpp"

using namespace minima;
using minima::testing::max_abs_diff;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("minima_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig small_config(const fs::path& dir) {
  json doc = {{"synth", {{"layers", 4}, {"fragile_layers", {0}}}},
              {"analyze", {{"epochs", 400}}},
              {"heal", {{"sweeps", 5}, {"calibration", {{"samples", 64}}}}},
              {"eval", {{"held_out_samples", 64}}},
              {"paths", {{"dir", dir.string()}}}};
  return parse_config(doc);
}

json read_json(const fs::path& p) {
  const auto bytes = read_file(p);
  return json::parse(bytes.begin(), bytes.end());
}

const Stage kPipeline[] = {Stage::Synth, Stage::Analyze, Stage::Plan, Stage::Compress, Stage::Heal, Stage::Eval};

// One pipeline run shared by the cases below.
const RunConfig& pipeline_run() {
  static const RunConfig config = [] {
    RunConfig c = small_config(fresh_dir("pipeline_a"));
    for (Stage s : kPipeline) run_stage(s, c);
    return c;
  }();
  return config;
}

}  // namespace

TEST_CASE("re-running every stage reproduces its outputs byte for byte") {
  const RunConfig& a = pipeline_run();
  const RunConfig b = small_config(fresh_dir("pipeline_b"));
  std::size_t compared = 0;
  for (Stage s : kPipeline) {
    for (const auto& out : run_stage(s, b)) {
      CAPTURE(out.string());
      CHECK(read_file(out) == read_file(a.paths.dir / out.filename()));
      ++compared;
    }
  }
  CHECK(compared == 12);
}

TEST_CASE("report carries the required fields") {
  const RunConfig& c = pipeline_run();
  const json r = read_json(c.paths.resolve(c.paths.report));
  check_document(r, "report");
  CHECK(r.at("seeds").at("held_out") == c.seeds.held_out);
  CHECK(r.at("achieved_ratio").get<double>() <= 0.65);
  CHECK(r.at("achieved_ratio").get<double>() >= 0.6);
  for (const char* part : {"held_out", "in_sample"}) {
    const json& q = r.at(part);
    for (const char* key : {"mean_before", "mean_after", "max_before", "max_after"}) {
      CHECK(q.at(key).is_number_float());
    }
    CHECK(q.at("layers").size() == 25);
    CHECK(q.at("dense_flops") == r.at("flops").at("dense_flops"));
  }
  CHECK(r.at("in_sample").at("mean_after").get<double>() <= r.at("in_sample").at("mean_before").get<double>());
  CHECK(r.at("healing").at("monotone") == r.at("healing").at("patches"));
  CHECK(r.at("flops").at("batch") == 1);
  CHECK_FALSE(r.contains("benchmark"));

  for (const auto& [path, kind] : {std::pair{c.paths.sensitivity, "sensitivity"}, std::pair{c.paths.plan, "plan"}}) {
    const json d = read_json(c.paths.resolve(path));
    check_document(d, kind);
    CHECK(d.at("seeds").at("analyze") == c.seeds.analyze);
  }
  const TensorFile healed = read_tensor_file(c.paths.resolve(c.paths.healed));
  check_document(healed.metadata, "compressed");
  CHECK(healed.metadata.at("seeds").at("calibration") == c.seeds.calibration);
}

TEST_CASE("plan and compressed documents round-trip") {
  const RunConfig& c = pipeline_run();
  const json plan_doc = read_json(c.paths.resolve(c.paths.plan));
  const CompressionPlan plan = plan_from_json(plan_doc);
  json again = plan_to_json(plan, c);
  again["seeds"] = plan_doc.at("seeds");
  CHECK(again == plan_doc);

  const auto bytes = read_file(c.paths.resolve(c.paths.healed));
  const CompressedModel cm = compressed_from_file(decode_tensor_file(bytes));
  TensorFile f = compressed_to_file(cm);
  f.metadata["seeds"] = decode_tensor_file(bytes).metadata.at("seeds");
  CHECK(encode_tensor_file(f) == bytes);
  CHECK(heal_log_from_json(heal_log_to_json(cm.heal_log)).size() == cm.heal_log.size());

  const auto analysis = sensitivity_from_json(read_json(c.paths.resolve(c.paths.sensitivity)));
  CHECK(analysis.size() == plan.entries.size());
  CHECK(analysis.front().patch == plan.entries.front().patch);
}

TEST_CASE("target ratio 1.0 plans every patch dense") {
  RunConfig c = pipeline_run();
  Overrides o;
  o.target_ratio = 1.0;
  o.out = "dense_plan.json";
  c = apply_overrides(c, Stage::Plan, o);
  cmd_plan(c);
  const CompressionPlan plan = plan_from_json(read_json(c.paths.resolve(c.paths.plan)));
  CHECK(plan.achieved_ratio() == 1.0);
  for (const auto& e : plan.entries) CHECK(e.keep_dense);
}

TEST_CASE("malformed documents are rejected") {
  CHECK_THROWS_AS(check_document(json{{"kind", "plan"}}, "plan"), FormatError);
  CHECK_THROWS_AS(check_document(document_header("plan"), "sensitivity"), FormatError);
  json bad_version = document_header("plan");
  bad_version["schema_version"] = 99;
  CHECK_THROWS_AS(check_document(bad_version, "plan"), FormatError);
  json broken = document_header("plan");
  broken["entries"] = json::array({json{{"id", 0}}});
  CHECK_THROWS_AS(plan_from_json(broken), FormatError);

  const RunConfig& c = pipeline_run();
  TensorFile f = read_tensor_file(c.paths.resolve(c.paths.compressed));
  f.entries.pop_back();
  CHECK_THROWS_AS(compressed_from_file(f), FormatError);
}

TEST_CASE("missing inputs are usage errors") {
  const RunConfig c = small_config(fresh_dir("empty"));
  for (Stage s : {Stage::Analyze, Stage::Plan, Stage::Compress, Stage::Heal, Stage::Eval, Stage::SpecDec}) {
    CAPTURE(stage_name(s));
    CHECK_THROWS_AS(run_stage(s, c), UsageError);
  }
}

TEST_CASE("calibration can come from a file") {
  const RunConfig& base = pipeline_run();
  const ModelContainer model = read_container(base.paths.resolve(base.paths.model));
  const auto gauss = gaussian_calibration_set(model, 16, 77);
  TensorFile f;
  for (std::size_t i = 0; i < gauss.size(); ++i) f.entries.push_back({model.entries()[i].name, DType::F64, gauss[i]});
  const fs::path path = base.paths.dir / "calib.mnma";
  write_tensor_file(f, path);

  CalibrationConfig cc;
  cc.source = CalibrationSource::File;
  cc.path = "calib.mnma";
  const auto loaded = load_calibration(model, cc, 0, base.paths);
  REQUIRE(loaded.size() == gauss.size());
  for (std::size_t i = 0; i < gauss.size(); ++i) CHECK(max_abs_diff(loaded[i], gauss[i]) == 0.0);

  f.entries.pop_back();
  write_tensor_file(f, path);
  CHECK_THROWS_AS(load_calibration(model, cc, 0, base.paths), FormatError);
  cc.path = "absent.mnma";
  CHECK_THROWS_AS(load_calibration(model, cc, 0, base.paths), UsageError);
}

TEST_CASE("specdec command reports stats for the example models") {
  const fs::path dir = fresh_dir("specdec");
  const fs::path root = MINIMA_SOURCE_DIR;
  json doc = {{"specdec",
               {{"target", (root / "configs/markov/target_unigram.json").string()},
                {"draft", (root / "configs/markov/draft_unigram.json").string()},
                {"n_tokens", 20000}}},
              {"paths", {{"dir", dir.string()}}}};
  const RunConfig c = parse_config(doc);
  const auto out = cmd_specdec(c);
  const json r = read_json(out.front());
  check_document(r, "specdec");
  CHECK(r.at("alpha").get<double>() == doctest::Approx(0.8));
  CHECK(r.at("stats").at("tokens_generated").get<std::size_t>() >= 20000);
  CHECK(read_file(cmd_specdec(c).front()) == read_file(out.front()));
}
