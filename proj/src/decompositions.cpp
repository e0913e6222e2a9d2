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

#include "minima/decompositions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "minima/errors.hpp"
#include "minima/tensor_ops.hpp"

namespace minima {

std::string_view family_name(Family f) {
  switch (f) {
    case Family::Dense: return "dense";
    case Family::Tucker: return "tucker";
    case Family::TT: return "tt";
    case Family::TR: return "tr";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  if (name == "dense") return Family::Dense;
  if (name == "tucker") return Family::Tucker;
  if (name == "tt") return Family::TT;
  if (name == "tr") return Family::TR;
  throw InvalidArgument("unknown family '" + std::string(name) + "'");
}

std::size_t ModeShape::rows() const {
  return shape_product(std::span(modes).first(row_mode_count));
}

std::size_t ModeShape::cols() const {
  return shape_product(std::span(modes).subspan(row_mode_count));
}

Shape ModeShape::active() const {
  Shape out;
  for (std::size_t m : modes) {
    if (m > 1) out.push_back(m);
  }
  return out;
}

std::size_t ModeShape::active_row_modes() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < row_mode_count; ++k) n += modes[k] > 1;
  return n;
}

namespace {

void split_balanced(std::size_t n, Shape& out) {
  std::size_t a = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (a * a > n) --a;
  while ((a + 1) * (a + 1) <= n) ++a;
  while (a > 1 && n % a != 0) --a;
  if (a <= 1) {
    out.push_back(n);
  } else {
    out.push_back(a);
    out.push_back(n / a);
  }
}

}  // namespace

ModeShape choose_mode_shape(std::size_t rows, std::size_t cols) {
  ModeShape s;
  split_balanced(rows, s.modes);
  s.row_mode_count = s.modes.size();
  split_balanced(cols, s.modes);
  return s;
}

RankSpec CompressedLayer::ranks() const {
  RankSpec spec{family, {}};
  switch (family) {
    case Family::Dense:
      break;
    case Family::Tucker:
      spec.ranks = core.shape();
      break;
    case Family::TT:
      for (std::size_t k = 0; k + 1 < factors.size(); ++k) spec.ranks.push_back(factors[k].dim(2));
      break;
    case Family::TR:
      for (const Tensor& g : factors) spec.ranks.push_back(g.dim(0));
      break;
  }
  return spec;
}

std::size_t CompressedLayer::stored_entries() const {
  std::size_t n = family == Family::TT || family == Family::TR ? 0 : core.size();
  for (const Tensor& f : factors) n += f.size();
  return n;
}

CompressedLayer make_dense_layer(const Tensor& matrix) {
  if (matrix.rank() != 2) throw ShapeError("dense layer expects a matrix");
  CompressedLayer c;
  c.family = Family::Dense;
  c.shape = ModeShape{{matrix.rows(), matrix.cols()}, 1};
  c.core = matrix;
  return c;
}

namespace {

std::vector<std::size_t> active_ranks(const Shape& full, std::span<const std::size_t> ranks,
                                      std::size_t expected_active) {
  if (ranks.size() == expected_active) return {ranks.begin(), ranks.end()};
  if (ranks.size() == full.size()) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < full.size(); ++k) {
      if (full[k] > 1) {
        out.push_back(ranks[k]);
      } else if (ranks[k] != 1) {
        throw RankError("rank of a size-1 mode must be 1");
      }
    }
    return out;
  }
  throw RankError("expected " + std::to_string(expected_active) + " ranks, got " +
                  std::to_string(ranks.size()));
}

Tensor squeeze(const Tensor& t, Shape& active) {
  active.clear();
  for (std::size_t m : t.shape()) {
    if (m > 1) active.push_back(m);
  }
  if (active.empty()) throw ShapeError("tensor has no mode larger than 1");
  return t.reshaped(active);
}

// Leading r left singular vectors of m; pads with zero columns when m has
// fewer columns than r so the basis is completed orthonormally.
Tensor leading_left_vectors(const Tensor& m, std::size_t r) {
  if (r > m.rows()) throw RankError("rank exceeds mode size");
  if (r <= m.cols()) return truncated_svd(m, TruncationPolicy::fixed_rank(r)).left;
  Tensor padded(Shape{m.rows(), r});
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) padded.at(i, j) = m.at(i, j);
  return truncated_svd(padded, TruncationPolicy::fixed_rank(r)).left;
}

Tensor project_all(const Tensor& x, const std::vector<Tensor>& factors,
                   std::size_t skip = static_cast<std::size_t>(-1)) {
  Tensor y = x;
  for (std::size_t k = 0; k < factors.size(); ++k) {
    if (k != skip) y = mode_product(y, transpose(factors[k]), k);
  }
  return y;
}

Tensor expand_all(const Tensor& core, const std::vector<Tensor>& factors) {
  Tensor y = core;
  for (std::size_t k = 0; k < factors.size(); ++k) y = mode_product(y, factors[k], k);
  return y;
}

double safe_relative_error(const Tensor& ref, const Tensor& approx) {
  const double n = frobenius_norm(ref);
  if (n == 0.0) return frobenius_norm(approx) == 0.0 ? 0.0 : 1.0;
  return relative_error(ref, approx);
}

}  // namespace

CompressedLayer tucker_decompose(const Tensor& t, std::span<const std::size_t> ranks_in,
                                 std::size_t hooi_iters, std::size_t row_mode_count,
                                 DecompositionTrace* trace) {
  Shape active;
  const Tensor x = squeeze(t, active);
  const auto ranks = active_ranks(t.shape(), ranks_in, active.size());
  for (std::size_t k = 0; k < active.size(); ++k) {
    if (ranks[k] < 1 || ranks[k] > active[k]) {
      throw RankError("Tucker rank " + std::to_string(ranks[k]) + " out of range for mode size " +
                      std::to_string(active[k]));
    }
  }

  std::vector<Tensor> factors;
  for (std::size_t k = 0; k < active.size(); ++k) {
    factors.push_back(leading_left_vectors(unfold(x, k), ranks[k]));
  }
  Tensor core = project_all(x, factors);
  double err = safe_relative_error(x, expand_all(core, factors));
  if (trace) trace->sweep_errors.push_back(err);

  for (std::size_t it = 0; it < hooi_iters; ++it) {
    std::vector<Tensor> next = factors;
    for (std::size_t k = 0; k < active.size(); ++k) {
      next[k] = leading_left_vectors(unfold(project_all(x, next, k), k), ranks[k]);
    }
    Tensor next_core = project_all(x, next);
    const double next_err = safe_relative_error(x, expand_all(next_core, next));
    if (next_err > err + 1e-12) break;
    factors = std::move(next);
    core = std::move(next_core);
    err = next_err;
    if (trace) trace->sweep_errors.push_back(err);
  }

  CompressedLayer c;
  c.family = Family::Tucker;
  c.shape = ModeShape{t.shape(), row_mode_count};
  c.core = std::move(core);
  c.factors = std::move(factors);
  return c;
}

namespace {

TruncationPolicy bond_policy(std::span<const TruncationPolicy> policies, std::size_t k,
                             std::size_t rows, std::size_t cols) {
  if (policies.empty()) throw InvalidArgument("no truncation policy given");
  const TruncationPolicy& p = policies.size() == 1 ? policies[0] : policies[k];
  if (p.kind() == TruncationPolicy::Kind::FixedRank) {
    return TruncationPolicy::fixed_rank(std::min({p.rank(), rows, cols}));
  }
  return p;
}

// One truncated SVD step of a train sweep: splits `c` (rows x cols) into
// left vectors and the carried remainder diag(S) V^T.
struct SplitStep {
  Tensor left;
  Tensor carry;
  double error = 0.0;  // ||c - left * carry||_F / ||c||_F
};

SplitStep split(const Tensor& c, const TruncationPolicy& policy) {
  const SvdResult full = svd(c);
  const std::size_t r = truncation_rank(full.singular_values, c.rows(), c.cols(), policy);
  SplitStep s{Tensor(Shape{c.rows(), r}), Tensor(Shape{r, c.cols()}), 0.0};
  double kept = 0.0, total = 0.0;
  for (std::size_t i = 0; i < full.rank(); ++i) {
    const double sv = full.singular_values[i];
    total += sv * sv;
    if (i < r) kept += sv * sv;
  }
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (std::size_t a = 0; a < r; ++a) s.left.at(i, a) = full.left.at(i, a);
  for (std::size_t a = 0; a < r; ++a)
    for (std::size_t j = 0; j < c.cols(); ++j)
      s.carry.at(a, j) = full.singular_values[a] * full.right.at(j, a);
  s.error = total > 0.0 ? std::sqrt(std::max(0.0, total - kept) / total) : 0.0;
  return s;
}

}  // namespace

CompressedLayer tt_decompose(const Tensor& t, std::span<const TruncationPolicy> policies,
                             std::size_t row_mode_count, DecompositionTrace* trace) {
  Shape active;
  const Tensor x = squeeze(t, active);
  const std::size_t d = active.size();
  if (policies.size() != 1 && policies.size() + 1 != d) {
    throw InvalidArgument("expected one policy per bond");
  }
  CompressedLayer c;
  c.family = Family::TT;
  c.shape = ModeShape{t.shape(), row_mode_count};

  std::size_t r_prev = 1;
  Tensor carry = x.reshaped({active[0], x.size() / active[0]});
  for (std::size_t k = 0; k + 1 < d; ++k) {
    const Tensor m = std::move(carry).reshaped({r_prev * active[k], x.size() / shape_product(std::span(active).first(k + 1))});
    SplitStep s = split(m, bond_policy(policies, k, m.rows(), m.cols()));
    const std::size_t r = s.left.cols();
    c.factors.push_back(std::move(s.left).reshaped({r_prev, active[k], r}));
    if (trace) trace->bond_errors.push_back(s.error);
    carry = std::move(s.carry);
    r_prev = r;
  }
  c.factors.push_back(std::move(carry).reshaped({r_prev, active[d - 1], 1}));
  return c;
}

bool tr_ranks_feasible(std::span<const std::size_t> n, std::span<const std::size_t> r) {
  const std::size_t d = n.size();
  if (d < 2 || r.size() != d) return false;
  for (std::size_t x : r) {
    if (x < 1) return false;
  }
  const std::size_t total = shape_product(n);
  if (r[0] * r[1] > std::min(n[0], total / n[0])) return false;
  std::size_t right = total / n[0];
  for (std::size_t k = 1; k + 1 < d; ++k) {
    right /= n[k];
    const std::size_t rows = r[k] * n[k];
    const std::size_t cols = right * r[0];
    if (r[k + 1] > std::min(rows, cols)) return false;
  }
  return true;
}

CompressedLayer tr_decompose(const Tensor& t, std::span<const std::size_t> ranks_in,
                             std::size_t row_mode_count, DecompositionTrace* trace) {
  Shape n;
  const Tensor x = squeeze(t, n);
  const std::size_t d = n.size();
  if (d < 2) throw RankError("tensor ring needs at least two modes larger than 1");
  if (ranks_in.size() != d) {
    throw RankError("expected " + std::to_string(d) + " cyclic ranks");
  }
  const std::vector<std::size_t> r(ranks_in.begin(), ranks_in.end());
  if (!tr_ranks_feasible(n, r)) {
    throw RankError("tensor-ring ranks infeasible for the sequential split");
  }
  CompressedLayer c;
  c.family = Family::TR;
  c.shape = ModeShape{t.shape(), row_mode_count};

  const std::size_t total = x.size();
  SplitStep first = split(x.reshaped({n[0], total / n[0]}),
                          TruncationPolicy::fixed_rank(r[0] * r[1]));
  if (trace) trace->bond_errors.push_back(first.error);
  // Column a0 * r1 + a1 of U becomes core0[a0, i, a1].
  {
    const Tensor u = std::move(first.left).reshaped({n[0], r[0], r[1]});
    const std::size_t perm[] = {1, 0, 2};
    c.factors.push_back(permute(u, perm));
  }
  // Remainder (r0, r1, n1 .. n_{d-1}) -> (r1, n1 .. n_{d-1}, r0).
  Shape rem_shape{r[0], r[1]};
  rem_shape.insert(rem_shape.end(), n.begin() + 1, n.end());
  std::vector<std::size_t> perm(rem_shape.size());
  std::iota(perm.begin() + 0, perm.end() - 1, 1);
  perm.back() = 0;
  Tensor carry = permute(std::move(first.carry).reshaped(rem_shape), perm);

  std::size_t right = total / n[0];
  for (std::size_t k = 1; k + 1 < d; ++k) {
    right /= n[k];
    const Tensor m = std::move(carry).reshaped({r[k] * n[k], right * r[0]});
    SplitStep s = split(m, TruncationPolicy::fixed_rank(r[k + 1]));
    if (trace) trace->bond_errors.push_back(s.error);
    c.factors.push_back(std::move(s.left).reshaped({r[k], n[k], r[k + 1]}));
    carry = std::move(s.carry);
  }
  c.factors.push_back(std::move(carry).reshaped({r[d - 1], n[d - 1], r[0]}));
  return c;
}

namespace {

Tensor chain_reconstruct(const std::vector<Tensor>& cores) {
  const std::size_t r0 = cores.front().dim(0);
  Tensor acc = cores.front();  // (r0, N, r_k)
  for (std::size_t k = 1; k < cores.size(); ++k) {
    const std::size_t m_a[] = {2}, m_b[] = {0};
    Tensor next = contract(acc, m_a, cores[k], m_b);  // (r0, N, n_k, r_{k+1})
    acc = std::move(next).reshaped({r0, acc.dim(1) * cores[k].dim(1), cores[k].dim(2)});
  }
  const std::size_t len = acc.dim(1);
  if (acc.dim(2) != r0) throw ShapeError("ring does not close");
  std::vector<double> out(len, 0.0);
  for (std::size_t a = 0; a < r0; ++a)
    for (std::size_t i = 0; i < len; ++i) out[i] += acc[(a * len + i) * r0 + a];
  return Tensor({len}, std::move(out));
}

}  // namespace

Tensor reconstruct(const CompressedLayer& c) {
  switch (c.family) {
    case Family::Dense:
      return c.core;
    case Family::Tucker:
      return expand_all(c.core, c.factors).reshaped(c.shape.modes);
    case Family::TT:
    case Family::TR:
      return chain_reconstruct(c.factors).reshaped(c.shape.modes);
  }
  return c.core;
}

Tensor reconstruct_matrix(const CompressedLayer& c) {
  return reconstruct(c).reshaped({c.shape.rows(), c.shape.cols()});
}

std::size_t param_count(const CompressedLayer& c) {
  if (c.family == Family::Dense) return c.core.size();
  return param_count(c.ranks(), c.shape.active());
}

double compression_ratio(const CompressedLayer& c) {
  return static_cast<double>(param_count(c)) / static_cast<double>(shape_product(c.shape.modes));
}

std::size_t param_count(const RankSpec& spec, std::span<const std::size_t> n) {
  const auto& r = spec.ranks;
  const std::size_t d = n.size();
  switch (spec.family) {
    case Family::Dense:
      return shape_product(n);
    case Family::Tucker: {
      if (r.size() != d) throw RankError("Tucker rank count mismatch");
      std::size_t p = shape_product(r);
      for (std::size_t k = 0; k < d; ++k) p += n[k] * r[k];
      return p;
    }
    case Family::TT: {
      if (r.size() + 1 != d) throw RankError("TT bond count mismatch");
      std::size_t p = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const std::size_t left = k == 0 ? 1 : r[k - 1];
        const std::size_t right = k + 1 == d ? 1 : r[k];
        p += left * n[k] * right;
      }
      return p;
    }
    case Family::TR: {
      if (r.size() != d) throw RankError("TR rank count mismatch");
      std::size_t p = 0;
      for (std::size_t k = 0; k < d; ++k) p += r[k] * n[k] * r[(k + 1) % d];
      return p;
    }
  }
  return 0;
}

std::vector<std::size_t> maximal_ranks(Family family, std::span<const std::size_t> n) {
  const std::size_t d = n.size();
  switch (family) {
    case Family::Dense:
      return {};
    case Family::Tucker:
      return {n.begin(), n.end()};
    case Family::TT:
    case Family::TR: {
      std::vector<std::size_t> bonds;
      for (std::size_t k = 0; k + 1 < d; ++k) {
        bonds.push_back(std::min(shape_product(n.first(k + 1)), shape_product(n.subspan(k + 1))));
      }
      if (family == Family::TT) return bonds;
      // A ring with a unit closing bond is a train; that is its exact limit.
      std::vector<std::size_t> ring{1};
      ring.insert(ring.end(), bonds.begin(), bonds.end());
      return ring;
    }
  }
  return {};
}

namespace {

// Upper bounds for individual TR slots given the others (used while growing).
bool ring_increment_ok(std::span<const std::size_t> n, std::vector<std::size_t> r, std::size_t k) {
  ++r[k];
  return tr_ranks_feasible(n, r);
}

std::vector<std::size_t> clamp_uniform(Family family, std::span<const std::size_t> n,
                                       std::size_t rank) {
  const std::size_t d = n.size();
  if (family == Family::Tucker) {
    std::vector<std::size_t> r(d);
    for (std::size_t k = 0; k < d; ++k) r[k] = std::min(rank, n[k]);
    return r;
  }
  if (family == Family::TT) {
    auto m = maximal_ranks(Family::TT, n);
    for (auto& x : m) x = std::min(x, rank);
    return m;
  }
  // TR: uniform request, reduced slot by slot until the sequential split is
  // feasible. r[1] gives way first, then r[0].
  std::vector<std::size_t> r(d, rank);
  const std::size_t first_bound = std::min(n[0], shape_product(n) / n[0]);
  while (r[0] * r[1] > first_bound) {
    if (r[1] > 1 && r[1] >= r[0]) {
      --r[1];
    } else {
      --r[0];
    }
  }
  std::size_t right = shape_product(n) / n[0];
  for (std::size_t k = 1; k + 1 < d; ++k) {
    right /= n[k];
    r[k + 1] = std::min({r[k + 1], r[k] * n[k], right * r[0]});
  }
  return r;
}

}  // namespace

RankSpec select_ranks(const ModeShape& shape, Family family, const TruncationPolicy& target) {
  const Shape n = shape.active();
  if (family == Family::Dense) return RankSpec{Family::Dense, {}};
  if (n.empty()) throw ShapeError("mode shape has no mode larger than 1");
  if (family == Family::TR && n.size() < 2) throw RankError("tensor ring needs two modes");
  const auto max_r = maximal_ranks(family, n);
  const std::size_t max_uniform = max_r.empty() ? 1 : *std::max_element(max_r.begin(), max_r.end());
  const std::size_t dense = shape_product(n);

  switch (target.kind()) {
    case TruncationPolicy::Kind::FixedRank:
      return RankSpec{family, clamp_uniform(family, n, target.rank())};
    case TruncationPolicy::Kind::RelativeError:
      throw InvalidArgument("relative-error rank selection needs the tensor");
    case TruncationPolicy::Kind::ParamBudget:
      break;
  }

  const std::size_t budget = target.budget();
  RankSpec spec{family, clamp_uniform(family, n, 1)};
  const std::size_t base = param_count(spec, n);
  if (base > budget) {
    throw InfeasibleBudgetError("budget " + std::to_string(budget) + " below the rank-1 " +
                                    std::string(family_name(family)) + " configuration (" +
                                    std::to_string(base) + ")",
                                static_cast<double>(base) / static_cast<double>(dense));
  }
  for (std::size_t r = 2; r <= max_uniform; ++r) {
    RankSpec next{family, clamp_uniform(family, n, r)};
    if (next.ranks == spec.ranks) continue;
    if (param_count(next, n) > budget) break;
    spec = std::move(next);
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t k = 0; k < spec.ranks.size(); ++k) {
      if (spec.ranks[k] >= max_r[k] && family != Family::TR) continue;
      if (family == Family::TR && !ring_increment_ok(n, spec.ranks, k)) continue;
      RankSpec next = spec;
      ++next.ranks[k];
      if (param_count(next, n) <= budget) {
        spec = std::move(next);
        changed = true;
      }
    }
  }
  return spec;
}

RankSpec select_ranks(const Tensor& t, const ModeShape& shape, Family family,
                      const TruncationPolicy& target) {
  if (target.kind() != TruncationPolicy::Kind::RelativeError || family == Family::Dense) {
    return select_ranks(shape, family, target);
  }
  Shape n;
  const Tensor x = squeeze(t.reshaped(shape.modes), n);
  const double eps = target.tolerance();
  const std::size_t d = n.size();
  if (family == Family::Tucker) {
    // HOSVD error^2 <= sum of per-mode tails, so eps / sqrt(d) per mode.
    const auto per_mode = TruncationPolicy::relative_error(eps / std::sqrt(static_cast<double>(d)));
    RankSpec spec{Family::Tucker, {}};
    for (std::size_t k = 0; k < d; ++k) {
      const Tensor u = unfold(x, k);
      const SvdResult s = svd(u);
      spec.ranks.push_back(std::min(n[k], truncation_rank(s.singular_values, u.rows(), u.cols(), per_mode)));
    }
    return spec;
  }
  if (d < 2) throw RankError("bond ranks need at least two modes");
  const TruncationPolicy per_bond =
      TruncationPolicy::relative_error(eps / std::sqrt(static_cast<double>(d - 1)));
  const CompressedLayer tt = tt_decompose(x, std::span(&per_bond, 1));
  RankSpec spec = tt.ranks();
  if (family == Family::TR) {
    spec.ranks.insert(spec.ranks.begin(), 1);
    spec.family = Family::TR;
  }
  return spec;
}

CompressedLayer decompose_matrix(const Tensor& matrix, const ModeShape& shape,
                                 const RankSpec& spec, std::size_t hooi_iters) {
  if (matrix.rank() != 2 || matrix.rows() != shape.rows() || matrix.cols() != shape.cols()) {
    throw ShapeError("matrix " + shape_to_string(matrix.shape()) + " does not match mode shape " +
                     shape_to_string(shape.modes));
  }
  if (spec.family == Family::Dense) return make_dense_layer(matrix);
  const Tensor t = matrix.reshaped(shape.modes);
  CompressedLayer c;
  switch (spec.family) {
    case Family::Tucker:
      c = tucker_decompose(t, spec.ranks, hooi_iters, shape.row_mode_count);
      break;
    case Family::TT: {
      std::vector<TruncationPolicy> p;
      for (std::size_t r : spec.ranks) p.push_back(TruncationPolicy::fixed_rank(r));
      if (p.empty()) p.push_back(TruncationPolicy::fixed_rank(1));
      c = tt_decompose(t, p, shape.row_mode_count);
      break;
    }
    case Family::TR:
      c = tr_decompose(t, spec.ranks, shape.row_mode_count);
      break;
    case Family::Dense:
      break;
  }
  c.shape = shape;
  return c;
}

}  // namespace minima
