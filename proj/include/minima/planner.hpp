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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "minima/decompositions.hpp"
#include "minima/model.hpp"
#include "minima/sensitivity.hpp"

namespace minima {

enum class PlanMode { Uniform, Sensitivity, SensitivityMixed };

std::string_view plan_mode_name(PlanMode m);
PlanMode parse_plan_mode(std::string_view name);

struct PlanOption {
  Family family = Family::Tucker;
  double ratio = 1.0;
  RankSpec ranks;
  std::size_t params = 0;
  double degradation = 0.0;
};

struct PatchCandidates {
  Patch patch;
  ModeShape shape;
  std::vector<PlanOption> options;
};

struct PlanEntry {
  Patch patch;
  ModeShape shape;
  bool keep_dense = true;
  Family family = Family::Dense;
  double ratio = 1.0;
  RankSpec ranks;
  std::size_t params = 0;
  double predicted_degradation = 0.0;
};

struct CompressionPlan {
  PlanMode mode = PlanMode::SensitivityMixed;
  double target_ratio = 1.0;
  std::vector<PlanEntry> entries;  // ordered by patch id
  std::size_t achieved_params = 0;
  std::size_t dense_params = 0;

  double achieved_ratio() const;
  double total_predicted_degradation() const;
};

struct PlannerOptions {
  Family single_family = Family::TT;
  bool compress_embeddings = false;
  double degradation_cap = 0.02;
};

// One option per feasible (family, ratio) cell of each patch's prediction table.
std::vector<PatchCandidates> build_candidates(std::span<const PatchAnalysis> analysis);

// Greedy marginal-cost allocation from all-dense; see README for the modes.
// Throws InfeasibleBudgetError carrying the best reachable ratio.
CompressionPlan allocate(std::span<const PatchCandidates> patches, double target_ratio,
                         PlanMode mode, const PlannerOptions& options = {});

struct GroupSummary {
  std::size_t patches = 0;
  std::size_t compressed = 0;
  std::size_t params = 0;
  std::size_t dense_params = 0;
  double predicted_degradation = 0.0;
};

struct PlanSummary {
  GroupSummary total;
  std::map<std::string, GroupSummary> by_submodule;
  std::map<std::string, GroupSummary> by_family;
  double achieved_ratio = 0.0;
};

PlanSummary plan_summary(const CompressionPlan& plan);

}  // namespace minima
