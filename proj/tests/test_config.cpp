#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "minima/commands.hpp"
#include "minima/config.hpp"
#include "minima/errors.hpp"

using namespace minima;
using nlohmann::json;

namespace {

json roundtrip(const json& doc) { return config_to_json(parse_config(doc)); }

}  // namespace

TEST_CASE("empty document yields the defaults") {
  const RunConfig c = parse_config(json::object());
  CHECK(c.seeds.synth == 42);
  CHECK(c.synth.seed == 42);
  CHECK(c.analyze.seed == 1);
  CHECK(c.analyze.train.seed == 1);
  CHECK(c.plan.target_ratio == 0.65);
  CHECK(c.plan.mode == PlanMode::SensitivityMixed);
  CHECK(c.plan.options.degradation_cap == c.analyze.degradation_cap);
  CHECK(c.calibration.source == CalibrationSource::Gaussian);
  CHECK(c.paths.resolve(c.paths.model) == std::filesystem::path("./model.mnma"));
  CHECK(config_to_json(c) == config_to_json(RunConfig{}));
}

TEST_CASE("config round-trips through its JSON form") {
  const json defaults = config_to_json(RunConfig{});
  CHECK(roundtrip(defaults) == defaults);

  json custom = defaults;
  custom["seeds"]["analyze"] = 9;
  custom["plan"]["mode"] = "uniform";
  custom["plan"]["target_ratio"] = 0.4;
  custom["analyze"]["ratio_grid"] = {0.6, 0.3};
  custom["analyze"]["families"] = {"tt"};
  custom["heal"]["calibration"] = {{"source", "file"}, {"path", "calib.mnma"}, {"samples", 32}};
  custom["synth"]["dtype"] = "f64";
  custom["paths"]["dir"] = "out";
  CHECK(roundtrip(custom) == custom);
  const RunConfig c = parse_config(custom);
  CHECK(c.analyze.seed == 9);
  CHECK(c.calibration.source == CalibrationSource::File);
  CHECK(c.paths.resolve(c.paths.plan) == std::filesystem::path("out/plan.json"));
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS(parse_config(json{{"sedes", json::object()}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"plan", {{"target", 0.5}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"heal", {{"calibration", {{"sample", 3}}}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json::array()), ConfigError);
}

TEST_CASE("out-of-range and mistyped values are rejected") {
  const json bad[] = {
      {{"plan", {{"target_ratio", 0.0}}}},
      {{"plan", {{"target_ratio", 1.5}}}},
      {{"plan", {{"mode", "random"}}}},
      {{"analyze", {{"patch_size", {0, 64}}}}},
      {{"analyze", {{"families", {"cp"}}}}},
      {{"analyze", {{"ratio_grid", json::array()}}}},
      {{"analyze", {{"ratio_grid", {1.2}}}}},
      {{"analyze", {{"probe_stride", 0}}}},
      {{"heal", {{"calibration", {{"source", "disk"}}}}}},
      {{"eval", {{"batch", 0}}}},
      {{"specdec", {{"k", 0}}}},
      {{"synth", {{"dtype", "f16"}}}},
      {{"seeds", {{"synth", "42"}}}},
      {{"seeds", {{"synth", -1}}}},
  };
  for (const auto& doc : bad) {
    CAPTURE(doc.dump());
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
  }
}

TEST_CASE("load_config reports unparsable files") {
  const auto path = std::filesystem::temp_directory_path() / "minima_test_config.json";
  std::ofstream(path) << "{ \"plan\": ";
  CHECK_THROWS_AS(load_config(path), ConfigError);
  std::ofstream(path) << R"({"plan": {"target_ratio": 0.5}})";
  CHECK(load_config(path).plan.target_ratio == 0.5);
  std::filesystem::remove(path);
}

TEST_CASE("overrides target the invoked stage") {
  const RunConfig base;
  Overrides o;
  o.seed = 5;
  CHECK(apply_overrides(base, Stage::Synth, o).synth.seed == 5);
  CHECK(apply_overrides(base, Stage::Analyze, o).analyze.train.seed == 5);
  CHECK(apply_overrides(base, Stage::Heal, o).seeds.calibration == 5);
  CHECK(apply_overrides(base, Stage::Eval, o).seeds.held_out == 5);
  CHECK(apply_overrides(base, Stage::SpecDec, o).seeds.specdec == 5);
  CHECK(apply_overrides(base, Stage::Synth, o).seeds.analyze == 1);

  Overrides r;
  r.target_ratio = 0.3;
  r.out = "p.json";
  const RunConfig c = apply_overrides(base, Stage::Plan, r);
  CHECK(c.plan.target_ratio == 0.3);
  CHECK(c.paths.plan == std::filesystem::path("p.json"));
  CHECK(c.paths.model == base.paths.model);

  r.target_ratio = 2.0;
  CHECK_THROWS_AS(apply_overrides(base, Stage::Plan, r), ConfigError);
  CHECK_THROWS_AS(parse_stage("optimize"), UsageError);
  CHECK(stage_name(parse_stage("specdec")) == "specdec");
}
