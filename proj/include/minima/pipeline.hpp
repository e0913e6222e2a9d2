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
#include <span>
#include <string>
#include <vector>

#include "minima/decompositions.hpp"
#include "minima/model.hpp"
#include "minima/planner.hpp"

namespace minima {

struct PatchLayer {
  Patch patch;
  CompressedLayer layer;
};

struct CompressedMatrix {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t layer_index = 0;
  SubmoduleKind kind = SubmoduleKind::Other;
  DType dtype = DType::F64;
  std::vector<PatchLayer> patches;
};

struct HealRecord {
  std::size_t patch_id = 0;
  Family family = Family::Dense;
  std::vector<double> objective;  // J before healing, then after each sweep
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t pinv_fallbacks = 0;
  // Set when the whole matrix was restored because healing its patches
  // independently raised the matrix-level objective.
  bool reverted = false;
};

struct CompressedModel {
  std::size_t total_layers = 0;
  std::string provenance;
  PlanMode mode = PlanMode::SensitivityMixed;
  double target_ratio = 1.0;
  std::vector<CompressedMatrix> matrices;
  std::vector<HealRecord> heal_log;

  std::size_t param_count() const;
  std::size_t dense_param_count() const;
  double ratio() const;
};

// Throws PlanMismatchError unless the plan's patches tile every matrix exactly.
CompressedModel compress_model(const ModelContainer& model, const CompressionPlan& plan,
                               std::size_t hooi_iters = 2);

Tensor reassemble(const CompressedMatrix& m);

struct HealOptions {
  std::size_t sweeps = 20;
  double initial_step = 1e-2;
  std::size_t max_halvings = 20;
};

// J = ||(W - W_hat) X||_F^2.
double healing_objective(const CompressedLayer& layer, const Tensor& w, const Tensor& x);

// Tucker: exact alternating least squares over factors and core.
// TT / TR: per-core gradient steps on J / ||W X||^2 with step halving.
// Updates that raise J are rejected; ranks and family never change.
HealRecord heal_layer(CompressedLayer& layer, const Tensor& w, const Tensor& x,
                      const HealOptions& options);

// calib[i] holds inputs (cols x samples) for model entry i. A matrix whose
// healed patches raise ||(W - W_hat) X||_F^2 as a whole is restored.
CompressedModel heal(const CompressedModel& cm, const ModelContainer& original,
                     std::span<const Tensor> calib, const HealOptions& options);

std::vector<Tensor> gaussian_calibration_set(const ModelContainer& model, std::size_t samples,
                                             std::uint64_t seed);

struct LayerQuality {
  std::string name;
  std::size_t layer_index = 0;
  SubmoduleKind kind = SubmoduleKind::Other;
  double deviation_before = 0.0;
  double deviation_after = 0.0;
  bool degenerate = false;
  std::size_t params = 0;
  std::size_t dense_params = 0;
};

struct QualityReport {
  std::vector<LayerQuality> layers;
  double mean_before = 0.0;
  double max_before = 0.0;
  double mean_after = 0.0;
  double max_after = 0.0;
  std::size_t params = 0;
  std::size_t dense_params = 0;
  // Left at zero here; filled from a FlopReport by the caller.
  std::uint64_t dense_flops = 0;
  std::uint64_t structured_flops = 0;
};

// Per-layer ||(W - W_hat) X||_F / ||W X||_F; layers with W X = 0 are flagged
// degenerate and left out of the aggregates.
QualityReport evaluate(const ModelContainer& original, const CompressedModel& before,
                       const CompressedModel& after, std::span<const Tensor> calib);
QualityReport evaluate(const ModelContainer& original, const CompressedModel& cm,
                       std::span<const Tensor> calib);

}  // namespace minima
