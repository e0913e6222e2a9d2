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
#include <string>
#include <vector>

#include "minima/decompositions.hpp"
#include "minima/pipeline.hpp"
#include "minima/tensor.hpp"

namespace minima {

// Applying a layer to a batch is a small tensor network: the stored cores or
// factors plus the input batch x (cols x batch). Operands are numbered in
// weight-first order and x comes last:
//   Dense:  W, x
//   Tucker: G, U_0 .. U_{d-1}, x
//   TT/TR:  C_0 .. C_{d-1}, x
// A step contracts operands lhs < rhs over every label they share; the
// result takes slot lhs and slot rhs is removed.
struct ContractionStep {
  std::size_t lhs = 0;
  std::size_t rhs = 0;
  std::uint64_t flops = 0;        // 2 * product of all label sizes involved
  std::size_t result_size = 0;    // elements of the produced tensor
};

struct ContractionPlan {
  std::vector<ContractionStep> steps;
  std::uint64_t predicted_flops = 0;
  // Largest tensor produced before the final step.
  std::size_t max_intermediate = 0;
  std::size_t batch = 1;
};

// Minimum-flop order by exhaustive search. Ties go to the lexicographically
// smallest step sequence.
ContractionPlan plan_contraction(const CompressedLayer& c, std::size_t batch);
// Repeatedly contracts operands 0 and 1.
ContractionPlan left_to_right_plan(const CompressedLayer& c, std::size_t batch);
// Every pairwise order, in lexicographic step order.
std::vector<ContractionPlan> all_contraction_plans(const CompressedLayer& c, std::size_t batch);

struct ApplyTrace {
  std::uint64_t multiply_adds = 0;
  std::size_t max_intermediate = 0;
};

// W_hat x without forming W_hat. Throws ShapeError unless x has cols rows.
Tensor apply_compressed(const CompressedLayer& c, const Tensor& x, ApplyTrace* trace = nullptr);
Tensor apply_compressed(const CompressedLayer& c, const Tensor& x, const ContractionPlan& plan,
                        ApplyTrace* trace = nullptr);

// Patches read column slices of x and accumulate into row slices of the output.
Tensor apply_matrix(const CompressedMatrix& m, const Tensor& x);

struct LayerFlops {
  std::string name;
  std::uint64_t dense_flops = 0;
  std::uint64_t structured_flops = 0;
  std::size_t max_intermediate = 0;
};

struct FlopReport {
  std::size_t batch = 1;
  std::uint64_t dense_flops = 0;
  std::uint64_t structured_flops = 0;
  double speedup_ratio = 1.0;  // dense / structured
  std::vector<LayerFlops> layers;
};

FlopReport flop_report(const CompressedModel& model, std::size_t batch);

struct TimingStats {
  double median_ns = 0.0;
  double iqr_ns = 0.0;
  std::size_t reps = 0;
};

// Wall-clock only, machine-dependent; never used as a pass/fail signal.
struct BenchmarkResult {
  TimingStats structured;
  TimingStats dense;
};

// Throws InvalidArgument when reps < 10.
BenchmarkResult micro_benchmark(const CompressedLayer& c, const Tensor& x, std::size_t reps,
                                std::size_t warmup);

}  // namespace minima
