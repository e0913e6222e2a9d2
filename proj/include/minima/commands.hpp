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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "minima/config.hpp"
#include "minima/model.hpp"

namespace minima {

enum class Stage { Synth, Analyze, Plan, Compress, Heal, Eval, SpecDec };

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);

struct Overrides {
  std::optional<double> target_ratio;
  std::optional<std::uint64_t> seed;  // the stage's own seed
  std::optional<std::filesystem::path> out;  // the stage's primary output
};

// Re-validates the result; an out-of-range override throws ConfigError.
RunConfig apply_overrides(const RunConfig& config, Stage stage, const Overrides& o);

// Every command reads its inputs from config.paths, writes its outputs
// atomically and returns the written paths, primary output first. A missing
// input throws UsageError.
std::vector<std::filesystem::path> cmd_synth(const RunConfig& config);
std::vector<std::filesystem::path> cmd_analyze(const RunConfig& config);
std::vector<std::filesystem::path> cmd_plan(const RunConfig& config);
std::vector<std::filesystem::path> cmd_compress(const RunConfig& config);
std::vector<std::filesystem::path> cmd_heal(const RunConfig& config);
std::vector<std::filesystem::path> cmd_eval(const RunConfig& config);
std::vector<std::filesystem::path> cmd_specdec(const RunConfig& config);
std::vector<std::filesystem::path> run_stage(Stage stage, const RunConfig& config);

// Calibration inputs for every model entry, from a seeded Gaussian or from an
// MNMA file holding one (cols x samples) tensor per entry under its name.
std::vector<Tensor> load_calibration(const ModelContainer& model, const CalibrationConfig& c,
                                     std::uint64_t seed, const Paths& paths);

// Pretty-printed with a trailing newline.
std::string dump_document(const nlohmann::json& doc);

}  // namespace minima
