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
#include <span>
#include <vector>

#include "minima/tensor.hpp"

namespace minima {

// How many singular triplets to keep.
class TruncationPolicy {
 public:
  enum class Kind { FixedRank, RelativeError, ParamBudget };

  static TruncationPolicy fixed_rank(std::size_t rank);
  // Keep the smallest rank whose Frobenius residual is <= eps * ||m||_F.
  static TruncationPolicy relative_error(double eps);
  // Keep the largest rank r with r * (rows + cols + 1) <= budget.
  static TruncationPolicy param_budget(std::size_t budget);

  Kind kind() const { return kind_; }
  std::size_t rank() const { return count_; }
  std::size_t budget() const { return count_; }
  double tolerance() const { return eps_; }

 private:
  TruncationPolicy(Kind kind, std::size_t count, double eps)
      : kind_(kind), count_(count), eps_(eps) {}
  Kind kind_;
  std::size_t count_;
  double eps_;
};

struct SvdResult {
  Tensor left;                         // m x r, orthonormal columns
  std::vector<double> singular_values;  // non-increasing, >= 0
  Tensor right;                        // n x r, orthonormal columns

  std::size_t rank() const { return singular_values.size(); }
};

// Thin SVD (r = min(m, n)) by cyclic one-sided Jacobi.
//
// Rotations are skipped once |<a_i, a_j>| <= 1e-12 ||a_i|| ||a_j||; the
// sweep loop stops after a sweep with no rotation or after 60 sweeps.
// The largest-magnitude entry of every left vector is made positive
// (lowest row index on ties). Columns belonging to numerically zero
// singular values are completed to an orthonormal basis from the
// canonical unit vectors.
SvdResult svd(const Tensor& m);

SvdResult truncated_svd(const Tensor& m, const TruncationPolicy& policy);

// Rank selected by `policy` for a spectrum of an m x n matrix.
std::size_t truncation_rank(std::span<const double> sigma, std::size_t rows,
                            std::size_t cols, const TruncationPolicy& policy);

// U * diag(S) * V^T.
Tensor svd_reconstruct(const SvdResult& s);

struct PseudoInverse {
  Tensor matrix;
  std::size_t dropped = 0;  // singular values below the threshold
};

// Moore-Penrose inverse keeping singular values > rel_threshold * sigma_max.
PseudoInverse pseudo_inverse(const Tensor& m, double rel_threshold = 1e-10);

struct SymmetricSolve {
  Tensor solution;
  bool used_pseudo_inverse = false;
};

// Solves M X = B for symmetric positive semi-definite M by Cholesky, falling
// back to pseudo_inverse(M, rel_threshold) when a pivot drops below
// rel_threshold times the largest diagonal entry.
SymmetricSolve solve_symmetric(const Tensor& m, const Tensor& b, double rel_threshold = 1e-10);

}  // namespace minima
