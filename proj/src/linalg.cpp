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

#include "minima/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "minima/errors.hpp"
#include "minima/kernels.hpp"
#include "minima/tensor_ops.hpp"

namespace minima {

TruncationPolicy TruncationPolicy::fixed_rank(std::size_t rank) {
  if (rank < 1) throw InvalidArgument("fixed rank must be >= 1");
  return {Kind::FixedRank, rank, 0.0};
}

TruncationPolicy TruncationPolicy::relative_error(double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw InvalidArgument("relative error must be in (0, 1]");
  return {Kind::RelativeError, 0, eps};
}

TruncationPolicy TruncationPolicy::param_budget(std::size_t budget) {
  if (budget < 1) throw InvalidArgument("parameter budget must be >= 1");
  return {Kind::ParamBudget, budget, 0.0};
}

namespace {

constexpr double kOrthoTol = 1e-12;
constexpr int kMaxSweeps = 60;
constexpr double kZeroSigma = 1e-14;

// Orthogonalizes `cols` (each of length len, stored contiguously) in place.
// Returns the accumulated right rotations as n columns of length n.
std::vector<double> jacobi_sweeps(std::vector<double>& cols, std::size_t len,
                                  std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      double* ai = cols.data() + i * len;
      for (std::size_t j = i + 1; j < n; ++j) {
        double* aj = cols.data() + j * len;
        const double alpha = kernels::dot(ai, ai, len);
        const double beta = kernels::dot(aj, aj, len);
        if (alpha == 0.0 || beta == 0.0) continue;
        const double gamma = kernels::dot(ai, aj, len);
        if (std::abs(gamma) <= kOrthoTol * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        kernels::rotate(ai, aj, len, c, s);
        kernels::rotate(v.data() + i * n, v.data() + j * n, n, c, s);
      }
    }
    if (!rotated) break;
  }
  return v;
}

// Completes columns flagged in `missing` to an orthonormal set. Vectors are
// stored as contiguous columns of length len.
void complete_basis(std::vector<double>& vecs, std::size_t len, std::size_t count,
                    const std::vector<bool>& missing) {
  std::vector<std::size_t> done;
  for (std::size_t c = 0; c < count; ++c) {
    if (!missing[c]) done.push_back(c);
  }
  std::vector<double> cand(len);
  for (std::size_t c = 0; c < count; ++c) {
    if (!missing[c]) continue;
    double best_norm = -1.0;
    std::vector<double> best_vec;
    for (std::size_t e = 0; e < len; ++e) {
      std::fill(cand.begin(), cand.end(), 0.0);
      cand[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t d : done) {
          const double* q = vecs.data() + d * len;
          kernels::axpy(-kernels::dot(q, cand.data(), len), q, cand.data(), len);
        }
      }
      const double nrm = std::sqrt(kernels::dot(cand.data(), cand.data(), len));
      if (nrm > best_norm + 1e-12) {
        best_norm = nrm;
        best_vec = cand;
      }
    }
    double* dst = vecs.data() + c * len;
    for (std::size_t i = 0; i < len; ++i) dst[i] = best_vec[i] / best_norm;
    done.push_back(c);
  }
}

}  // namespace

SvdResult svd(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("svd expects a matrix");
  for (double x : m.data()) {
    if (!std::isfinite(x)) throw NumericsError("svd input is not finite");
  }
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  const bool wide = rows < cols;
  // Work on the tall orientation: n columns of length len.
  const std::size_t len = wide ? cols : rows;
  const std::size_t n = wide ? rows : cols;
  std::vector<double> work(len * n);
  if (wide) {
    std::copy(m.data().begin(), m.data().end(), work.begin());
  } else {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) work[j * len + i] = m.at(i, j);
  }
  std::vector<double> v = jacobi_sweeps(work, len, n);

  std::vector<double> sigma(n);
  for (std::size_t c = 0; c < n; ++c) {
    sigma[c] = std::sqrt(kernels::dot(work.data() + c * len, work.data() + c * len, len));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });
  const double smax = n ? sigma[order[0]] : 0.0;

  // Sorted, normalized left vectors (tall orientation) and right vectors.
  std::vector<double> uvec(len * n), vvec(n * n);
  std::vector<double> s_sorted(n);
  std::vector<bool> missing(n, false);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    double s = sigma[src];
    if (smax == 0.0 || s <= kZeroSigma * smax) {
      s = 0.0;
      missing[c] = true;
    } else {
      for (std::size_t i = 0; i < len; ++i) uvec[c * len + i] = work[src * len + i] / s;
    }
    s_sorted[c] = s;
    std::copy_n(v.data() + src * n, n, vvec.data() + c * n);
  }
  complete_basis(uvec, len, n, missing);

  // Map back to the caller's orientation: A = U S V^T.
  const std::vector<double>& ucols = wide ? vvec : uvec;
  const std::vector<double>& vcols = wide ? uvec : vvec;
  SvdResult out{Tensor(Shape{rows, n}), std::move(s_sorted), Tensor(Shape{cols, n})};
  for (std::size_t c = 0; c < n; ++c) {
    const double* uc = ucols.data() + c * rows;
    const double* vc = vcols.data() + c * cols;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < rows; ++i) {
      if (std::abs(uc[i]) > std::abs(uc[arg])) arg = i;
    }
    const double sign = uc[arg] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < rows; ++i) out.left.at(i, c) = sign * uc[i];
    for (std::size_t j = 0; j < cols; ++j) out.right.at(j, c) = sign * vc[j];
  }
  return out;
}

std::size_t truncation_rank(std::span<const double> sigma, std::size_t rows,
                            std::size_t cols, const TruncationPolicy& policy) {
  const std::size_t full = sigma.size();
  switch (policy.kind()) {
    case TruncationPolicy::Kind::FixedRank:
      if (policy.rank() > std::min(rows, cols)) {
        throw RankError("fixed rank " + std::to_string(policy.rank()) + " exceeds min(" +
                        std::to_string(rows) + ", " + std::to_string(cols) + ")");
      }
      return policy.rank();
    case TruncationPolicy::Kind::RelativeError: {
      // tail[r] = sum_{i >= r} sigma_i^2, accumulated from the small end.
      std::vector<double> tail(full + 1, 0.0);
      for (std::size_t i = full; i-- > 0;) tail[i] = tail[i + 1] + sigma[i] * sigma[i];
      const double limit = policy.tolerance() * policy.tolerance() * tail[0];
      for (std::size_t r = 1; r <= full; ++r) {
        if (tail[r] <= limit) return r;
      }
      return std::max<std::size_t>(full, 1);
    }
    case TruncationPolicy::Kind::ParamBudget: {
      const std::size_t per = rows + cols + 1;
      const std::size_t r = policy.budget() / per;
      if (r < 1) {
        throw InfeasibleBudgetError("budget " + std::to_string(policy.budget()) +
                                        " below one rank-1 triplet (" + std::to_string(per) + ")",
                                    static_cast<double>(per) / static_cast<double>(rows * cols));
      }
      return std::min(r, full);
    }
  }
  return full;
}

SvdResult truncated_svd(const Tensor& m, const TruncationPolicy& policy) {
  if (m.rank() != 2) throw ShapeError("truncated_svd expects a matrix");
  if (policy.kind() == TruncationPolicy::Kind::FixedRank &&
      policy.rank() > std::min(m.rows(), m.cols())) {
    throw RankError("fixed rank exceeds matrix dimensions");
  }
  SvdResult full = svd(m);
  const std::size_t r = truncation_rank(full.singular_values, m.rows(), m.cols(), policy);
  if (r == full.rank()) return full;
  SvdResult out{Tensor(Shape{m.rows(), r}), {}, Tensor(Shape{m.cols(), r})};
  out.singular_values.assign(full.singular_values.begin(), full.singular_values.begin() + r);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t c = 0; c < r; ++c) out.left.at(i, c) = full.left.at(i, c);
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t c = 0; c < r; ++c) out.right.at(j, c) = full.right.at(j, c);
  return out;
}

Tensor svd_reconstruct(const SvdResult& s) {
  Tensor us = s.left;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t c = 0; c < s.rank(); ++c) us.at(i, c) *= s.singular_values[c];
  Tensor vt(Shape{s.right.cols(), s.right.rows()});
  for (std::size_t j = 0; j < s.right.rows(); ++j)
    for (std::size_t c = 0; c < s.rank(); ++c) vt.at(c, j) = s.right.at(j, c);
  Tensor out(Shape{s.left.rows(), s.right.rows()});
  kernels::gemm(us.rows(), vt.cols(), s.rank(), us.ptr(), vt.ptr(), out.ptr());
  return out;
}

PseudoInverse pseudo_inverse(const Tensor& m, double rel_threshold) {
  const SvdResult s = svd(m);
  const double smax = s.rank() ? s.singular_values[0] : 0.0;
  PseudoInverse out{Tensor(Shape{m.cols(), m.rows()}), 0};
  for (std::size_t c = 0; c < s.rank(); ++c) {
    const double sv = s.singular_values[c];
    if (smax == 0.0 || sv <= rel_threshold * smax) {
      ++out.dropped;
      continue;
    }
    const double inv = 1.0 / sv;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const double vj = s.right.at(j, c) * inv;
      if (vj == 0.0) continue;
      for (std::size_t i = 0; i < m.rows(); ++i) out.matrix.at(j, i) += vj * s.left.at(i, c);
    }
  }
  return out;
}

SymmetricSolve solve_symmetric(const Tensor& m, const Tensor& b, double rel_threshold) {
  const std::size_t n = m.rows();
  if (m.rank() != 2 || m.cols() != n || b.rank() != 2 || b.rows() != n) {
    throw ShapeError("solve_symmetric: incompatible shapes " + shape_to_string(m.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, m.at(i, i));

  Tensor l(Shape{n, n});
  bool ok = max_diag > 0.0;
  for (std::size_t j = 0; j < n && ok; ++j) {
    double d = m.at(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l.at(j, k) * l.at(j, k);
    if (d <= rel_threshold * max_diag) {
      ok = false;
      break;
    }
    const double ljj = std::sqrt(d);
    l.at(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = m.at(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l.at(i, k) * l.at(j, k);
      l.at(i, j) = v / ljj;
    }
  }
  if (!ok) return {matmul(pseudo_inverse(m, rel_threshold).matrix, b), true};

  const std::size_t k = b.cols();
  Tensor x = b;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double v = x.at(i, c);
      for (std::size_t j = 0; j < i; ++j) v -= l.at(i, j) * x.at(j, c);
      x.at(i, c) = v / l.at(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double v = x.at(i, c);
      for (std::size_t j = i + 1; j < n; ++j) v -= l.at(j, i) * x.at(j, c);
      x.at(i, c) = v / l.at(i, i);
    }
  }
  return {std::move(x), false};
}

}  // namespace minima
