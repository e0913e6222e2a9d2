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
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "minima/pipeline.hpp"
#include "minima/planner.hpp"
#include "minima/sensitivity.hpp"
#include "minima/synth.hpp"

namespace minima {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

struct Seeds {
  std::uint64_t synth = 42;
  std::uint64_t analyze = 1;
  std::uint64_t calibration = 1000;
  std::uint64_t held_out = 2000;
  std::uint64_t specdec = 7;
};

struct PlanConfig {
  double target_ratio = 0.65;
  PlanMode mode = PlanMode::SensitivityMixed;
  PlannerOptions options;
};

enum class CalibrationSource { Gaussian, File };

struct CalibrationConfig {
  CalibrationSource source = CalibrationSource::Gaussian;
  std::filesystem::path path;  // MNMA file with one (cols x samples) entry per matrix
  std::size_t samples = 256;
};

struct EvalConfig {
  std::size_t held_out_samples = 256;
  std::size_t batch = 1;
  bool benchmark = false;
  std::size_t benchmark_reps = 20;
  std::size_t benchmark_warmup = 3;
};

struct SpecDecConfig {
  std::filesystem::path target;
  std::filesystem::path draft;
  std::size_t k = 3;
  std::size_t n_tokens = 100000;
};

// Relative file names resolve against `dir`.
struct Paths {
  std::filesystem::path dir = ".";
  std::filesystem::path model = "model.mnma";
  std::filesystem::path sensitivity = "sensitivity.json";
  std::filesystem::path plan = "plan.json";
  std::filesystem::path compressed = "compressed.mnma";
  std::filesystem::path healed = "healed.mnma";
  std::filesystem::path report = "report.json";
  std::filesystem::path specdec = "specdec.json";

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

struct RunConfig {
  Seeds seeds;
  SynthOptions synth;
  AnalyzeOptions analyze;
  PlanConfig plan;
  std::size_t compress_hooi_iters = 2;
  HealOptions heal;
  CalibrationConfig calibration;
  EvalConfig eval;
  SpecDecConfig specdec;
  Paths paths;
};

// Missing keys take their defaults; unknown keys and out-of-range values
// throw ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);
// Every key with its current value; parse_config(config_to_json(c)) == c.
nlohmann::json config_to_json(const RunConfig& c);

}  // namespace minima
