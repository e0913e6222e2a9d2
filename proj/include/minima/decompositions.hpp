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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "minima/linalg.hpp"
#include "minima/tensor.hpp"

namespace minima {

enum class Family { Dense, Tucker, TT, TR };

std::string_view family_name(Family f);
// Accepts "dense", "tucker", "tt", "tr". Throws InvalidArgument otherwise.
Family parse_family(std::string_view name);

// Ranks are defined over the active (size > 1) modes of a mode shape.
//   Tucker: one rank per active mode.
//   TT:     d - 1 bond ranks.
//   TR:     d cyclic ranks; core k is (r[k], n_k, r[(k+1) % d]).
struct RankSpec {
  Family family = Family::Dense;
  std::vector<std::size_t> ranks;

  bool operator==(const RankSpec&) const = default;
};

// How a rows x cols matrix is viewed as a tensor: the leading
// row_mode_count modes multiply to rows, the rest to cols.
struct ModeShape {
  Shape modes;
  std::size_t row_mode_count = 0;

  std::size_t rows() const;
  std::size_t cols() const;
  // Modes of size > 1, and how many of them are row modes.
  Shape active() const;
  std::size_t active_row_modes() const;

  bool operator==(const ModeShape&) const = default;
};

// Splits rows and cols each into their closest-to-square divisor pair
// (smaller factor first); prime sizes stay a single mode.
ModeShape choose_mode_shape(std::size_t rows, std::size_t cols);

// A compressed (or dense) weight block.
//
// Dense: `core` holds the rows x cols matrix, `factors` is empty.
// Tucker: `core` has the Tucker ranks as shape; factors[k] is n_k x r_k.
// TT / TR: `factors` holds the order-3 cores, `core` is unused.
struct CompressedLayer {
  Family family = Family::Dense;
  ModeShape shape;
  Tensor core;
  std::vector<Tensor> factors;

  RankSpec ranks() const;
  // Stored scalars, counted entry by entry.
  std::size_t stored_entries() const;
  std::size_t dense_size() const { return shape.rows() * shape.cols(); }
};

CompressedLayer make_dense_layer(const Tensor& matrix);

// Diagnostics a caller may request from the decomposers.
struct DecompositionTrace {
  std::vector<double> sweep_errors;  // relative error after HOSVD and each HOOI sweep
  std::vector<double> bond_errors;   // relative truncation error of each TT/TR step
};

// HOSVD initialization followed by `hooi_iters` HOOI sweeps. A sweep that
// would raise the error by more than 1e-12 is discarded and iteration
// stops. Size-1 modes are dropped before decomposition.
CompressedLayer tucker_decompose(const Tensor& t, std::span<const std::size_t> ranks,
                                 std::size_t hooi_iters, std::size_t row_mode_count = 0,
                                 DecompositionTrace* trace = nullptr);

// Sequential TT-SVD. `bond_policies` holds one policy per bond or a single
// policy applied to every bond. FixedRank requests are clamped to the bond's
// matrix dimensions.
CompressedLayer tt_decompose(const Tensor& t, std::span<const TruncationPolicy> bond_policies,
                             std::size_t row_mode_count = 0, DecompositionTrace* trace = nullptr);

// Sequential TR-SVD: an SVD of the first unfolding with rank r[0]*r[1],
// split of that bond, then a TT-SVD style sweep. Approximate by nature.
CompressedLayer tr_decompose(const Tensor& t, std::span<const std::size_t> ranks,
                             std::size_t row_mode_count = 0, DecompositionTrace* trace = nullptr);

// Dense tensor of the layer's full mode shape (a rows x cols matrix for
// Dense layers).
Tensor reconstruct(const CompressedLayer& c);
// Reconstruction reshaped to rows x cols.
Tensor reconstruct_matrix(const CompressedLayer& c);

std::size_t param_count(const CompressedLayer& c);
double compression_ratio(const CompressedLayer& c);
// Closed-form count for a rank specification on a mode shape.
std::size_t param_count(const RankSpec& spec, std::span<const std::size_t> active_modes);

// Ranks at which the family reproduces any tensor of these active modes
// exactly: the mode sizes (Tucker), the full bond ranks (TT), and a ring
// with a unit closing bond followed by the full bond ranks (TR).
std::vector<std::size_t> maximal_ranks(Family family, std::span<const std::size_t> active_modes);
// TR ranks that pass the sequential-SVD feasibility checks.
bool tr_ranks_feasible(std::span<const std::size_t> active_modes,
                       std::span<const std::size_t> ranks);

// Rank selection from a shape alone (FixedRank, ParamBudget). For a budget:
// largest uniform rank that fits, then single-rank increments in ascending
// slot order while the budget allows. Throws InfeasibleBudgetError when even
// all-ones ranks exceed the budget.
RankSpec select_ranks(const ModeShape& shape, Family family, const TruncationPolicy& target);
// As above, and additionally handles RelativeError targets by per-mode
// energy thresholds (Tucker) or per-bond thresholds (TT, TR with r[0] = 1).
RankSpec select_ranks(const Tensor& t, const ModeShape& shape, Family family,
                      const TruncationPolicy& target);

// Decomposes a rows x cols matrix viewed through `shape` with frozen ranks.
CompressedLayer decompose_matrix(const Tensor& matrix, const ModeShape& shape,
                                 const RankSpec& spec, std::size_t hooi_iters);

}  // namespace minima
