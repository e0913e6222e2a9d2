#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "minima/decompositions.hpp"
#include "minima/errors.hpp"
#include "minima/tensor_ops.hpp"
#include "test_util.hpp"

using namespace minima;
using minima::testing::random_tensor;

namespace {

Tensor ones(Shape shape) { return Tensor(shape, std::vector<double>(shape_product(shape), 1.0)); }

double err_of(const Tensor& t, const CompressedLayer& c) { return relative_error(t, reconstruct(c)); }

CompressedLayer tt_fixed(const Tensor& t, std::size_t r) {
  const TruncationPolicy p = TruncationPolicy::fixed_rank(r);
  return tt_decompose(t, std::span(&p, 1));
}

Shape random_shape(Rng& rng, std::size_t max_d, std::size_t max_n) {
  Shape s(2 + rng.below(max_d - 1));
  for (auto& x : s) x = 2 + rng.below(max_n - 1);
  return s;
}

}  // namespace

TEST_CASE("Tucker: full rank and rank-1 inputs reconstruct exactly") {
  Rng rng(1);
  const Tensor t = random_tensor({3, 4, 5}, rng);
  const std::size_t full[] = {3, 4, 5};
  CHECK(err_of(t, tucker_decompose(t, full, 2)) <= 1e-10);

  const std::size_t unit[] = {1, 1, 1};
  CHECK(err_of(ones({2, 2, 2}), tucker_decompose(ones({2, 2, 2}), unit, 0)) <= 1e-12);

  const std::size_t bad[] = {4, 4, 5};
  CHECK_THROWS_AS(tucker_decompose(t, bad, 0), RankError);
  const std::size_t zero[] = {0, 1, 1};
  CHECK_THROWS_AS(tucker_decompose(t, zero, 0), RankError);
}

TEST_CASE("Tucker: HOOI never worse than HOSVD and monotone across sweeps") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor t = random_tensor({4, 4, 4}, rng);
    const std::size_t r[] = {2, 2, 2};
    const double hosvd = err_of(t, tucker_decompose(t, r, 0));
    DecompositionTrace trace;
    const double hooi = err_of(t, tucker_decompose(t, r, 5, 0, &trace));
    CHECK(hooi <= hosvd + 1e-12);
    for (std::size_t i = 1; i < trace.sweep_errors.size(); ++i) {
      CHECK(trace.sweep_errors[i] <= trace.sweep_errors[i - 1] + 1e-12);
    }
  }
}

TEST_CASE("TT: exact cases and the per-bond error bound") {
  const CompressedLayer ones_tt = tt_fixed(ones({2, 2, 2, 2}), 1);
  CHECK(ones_tt.ranks().ranks == std::vector<std::size_t>{1, 1, 1});
  CHECK(err_of(ones({2, 2, 2, 2}), ones_tt) <= 1e-12);

  Rng rng(3);
  const Tensor t = random_tensor({4, 4, 4}, rng);
  const CompressedLayer maximal = tt_fixed(t, 16);
  CHECK(maximal.ranks().ranks == std::vector<std::size_t>{4, 4});
  CHECK(err_of(t, maximal) <= 1e-10);

  for (double delta : {0.05, 0.1, 0.2}) {
    const TruncationPolicy p = TruncationPolicy::relative_error(delta);
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor x = random_tensor({4, 4, 4}, rng);
      DecompositionTrace trace;
      const CompressedLayer c = tt_decompose(x, std::span(&p, 1), 0, &trace);
      CHECK(err_of(x, c) <= std::sqrt(2.0) * delta);
      for (double e : trace.bond_errors) CHECK(e <= delta + 1e-15);
    }
  }
}

TEST_CASE("TR: unit ranks, reduction to TT, cyclic symmetry") {
  Rng rng(4);
  // rank-1 input: outer product of three vectors
  std::vector<double> a{1, 2}, b{3, -1, 2}, c{0.5, 4};
  std::vector<double> v;
  for (double x : a)
    for (double y : b)
      for (double z : c) v.push_back(x * y * z);
  const Tensor r1({2, 3, 2}, v);
  const std::size_t unit[] = {1, 1, 1};
  CHECK(err_of(r1, tr_decompose(r1, unit)) <= 1e-12);

  for (int trial = 0; trial < 5; ++trial) {
    const Tensor t = random_tensor({4, 5, 4, 3}, rng);
    const std::size_t ring[] = {1, 3, 4, 2};
    std::vector<TruncationPolicy> bonds{TruncationPolicy::fixed_rank(3), TruncationPolicy::fixed_rank(4),
                                        TruncationPolicy::fixed_rank(2)};
    CHECK(std::abs(err_of(t, tr_decompose(t, ring)) - err_of(t, tt_decompose(t, bonds))) <= 1e-9);
  }

  // Fully symmetric tensor: every cyclic shift is the same tensor.
  const Tensor base = random_tensor({4, 4, 4}, rng);
  Tensor sym(Shape{4, 4, 4});
  std::vector<std::size_t> perm{0, 1, 2};
  do {
    const Tensor p = permute(base, perm);
    for (std::size_t i = 0; i < sym.size(); ++i) sym[i] += p[i];
  } while (std::next_permutation(perm.begin(), perm.end()));
  const std::size_t shift[] = {1, 2, 0};
  const Tensor shifted = permute(sym, shift);
  const std::size_t r[] = {2, 2, 2};
  const double e0 = err_of(sym, tr_decompose(sym, r));
  const double e1 = err_of(shifted, tr_decompose(shifted, r));
  CHECK(e0 >= 0.0);
  CHECK(e0 <= 1.0);
  CHECK(std::abs(e0 - e1) <= 1e-8);

  const std::size_t infeasible[] = {3, 3, 3};
  CHECK_THROWS_AS(tr_decompose(base, infeasible), RankError);
}

TEST_CASE("reconstruct round trips") {
  Rng rng(5);
  const Tensor m = random_tensor({6, 4}, rng);
  CHECK(reconstruct(make_dense_layer(m)) == m);
  const ModeShape shape = choose_mode_shape(6, 4);
  const RankSpec tucker_full{Family::Tucker, shape.active()};
  CHECK(relative_error(m, reconstruct_matrix(decompose_matrix(m, shape, tucker_full, 1))) <= 1e-10);
  const RankSpec tt_full{Family::TT, maximal_ranks(Family::TT, shape.active())};
  CHECK(relative_error(m, reconstruct_matrix(decompose_matrix(m, shape, tt_full, 0))) <= 1e-10);
}

TEST_CASE("param_count closed form against stored entries") {
  const Shape n{8, 8, 8, 8};
  // Entry-count oracle: build layers with payloads of the implied shapes.
  CompressedLayer tucker{Family::Tucker, {n, 2}, Tensor(Shape{4, 4, 4, 4}), {}};
  for (int k = 0; k < 4; ++k) tucker.factors.emplace_back(Shape{8, 4});
  CHECK(tucker.stored_entries() == 384);
  CHECK(param_count(tucker) == 384);
  CHECK(compression_ratio(tucker) == doctest::Approx(0.09375));

  CompressedLayer tt{Family::TT, {n, 2}, Tensor(), {}};
  tt.factors = {Tensor(Shape{1, 8, 4}), Tensor(Shape{4, 8, 4}), Tensor(Shape{4, 8, 4}), Tensor(Shape{4, 8, 1})};
  CHECK(tt.stored_entries() == 320);
  CHECK(param_count(tt) == 320);

  CompressedLayer tr{Family::TR, {n, 2}, Tensor(), {}};
  for (int k = 0; k < 4; ++k) tr.factors.emplace_back(Shape{3, 8, 3});
  CHECK(tr.stored_entries() == 288);
  CHECK(param_count(RankSpec{Family::TR, {3, 3, 3, 3}}, n) == 288);

  // 200 random decompositions
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const Shape s = random_shape(rng, 4, 5);
    const Family fam = std::array{Family::Tucker, Family::TT, Family::TR}[trial % 3];
    const ModeShape ms{s, 1};
    const std::size_t budget = 1 + rng.below(shape_product(s));
    RankSpec spec;
    try {
      spec = select_ranks(ms, fam, TruncationPolicy::param_budget(budget));
    } catch (const InfeasibleBudgetError&) {
      continue;
    }
    const Tensor t = random_tensor(s, rng);
    const CompressedLayer c = decompose_matrix(t.reshaped({ms.rows(), ms.cols()}), ms, spec, 0);
    CHECK(c.ranks() == spec);
    CHECK(c.stored_entries() == param_count(spec, s));
    CHECK(param_count(spec, s) <= budget);
  }
}

TEST_CASE("select_ranks: budgets") {
  const ModeShape shape{{8, 8, 8, 8}, 2};
  CHECK(select_ranks(shape, Family::TT, TruncationPolicy::param_budget(320)).ranks ==
        std::vector<std::size_t>{4, 4, 4});

  const RankSpec tk = select_ranks(shape, Family::Tucker, TruncationPolicy::param_budget(383));
  const Shape n = shape.active();
  CHECK(param_count(tk, n) <= 383);
  CHECK(tk.ranks != std::vector<std::size_t>{4, 4, 4, 4});
  // locally maximal: no single increment fits
  for (std::size_t k = 0; k < 4; ++k) {
    RankSpec up = tk;
    ++up.ranks[k];
    CHECK(param_count(up, n) > 383);
  }
  // no configuration in the uniform +-1 neighborhood dominates the result
  std::vector<std::size_t> r(4);
  for (std::size_t code = 0; code < 81; ++code) {
    std::size_t c = code;
    for (auto& x : r) {
      x = 3 + c % 3;
      c /= 3;
    }
    const RankSpec cand{Family::Tucker, r};
    bool dominates = r != tk.ranks;
    for (std::size_t k = 0; k < 4; ++k) dominates = dominates && r[k] >= tk.ranks[k];
    if (dominates) CHECK(param_count(cand, n) > 383);
  }

  CHECK_THROWS_AS(select_ranks(shape, Family::TT, TruncationPolicy::param_budget(10)),
                  InfeasibleBudgetError);
  try {
    select_ranks(shape, Family::Tucker, TruncationPolicy::param_budget(5));
  } catch (const InfeasibleBudgetError& e) {
    CHECK(e.best_ratio() == doctest::Approx(33.0 / 4096.0));
  }
}

TEST_CASE("select_ranks: a budget covering the maximal configuration yields it") {
  Rng rng(7);
  for (Family fam : {Family::Tucker, Family::TT, Family::TR}) {
    for (const Shape& s : {Shape{4, 6}, Shape{3, 4, 5}, Shape{2, 3, 2, 3}}) {
      const ModeShape ms{s, 1};
      const auto max_r = maximal_ranks(fam, s);
      const std::size_t full = param_count(RankSpec{fam, max_r}, s);
      const RankSpec spec = select_ranks(ms, fam, TruncationPolicy::param_budget(full));
      if (fam != Family::TR) CHECK(spec.ranks == max_r);
      const Tensor t = random_tensor(s, rng);
      const Tensor m = t.reshaped({ms.rows(), ms.cols()});
      CHECK(relative_error(m, reconstruct_matrix(decompose_matrix(m, ms, RankSpec{fam, max_r}, 0))) <= 1e-9);
    }
  }
}

TEST_CASE("exactness at maximal ranks for random shapes up to (6,6,6,6)") {
  Rng rng(8);
  for (int trial = 0; trial < 60; ++trial) {
    const Shape s = random_shape(rng, 4, 6);
    const Tensor t = random_tensor(s, rng);
    const ModeShape ms{s, 1};
    const Tensor m = t.reshaped({ms.rows(), ms.cols()});
    for (Family fam : {Family::Tucker, Family::TT, Family::TR}) {
      const RankSpec spec{fam, maximal_ranks(fam, s)};
      CHECK(relative_error(m, reconstruct_matrix(decompose_matrix(m, ms, spec, 0))) <= 1e-9);
    }
  }
}

TEST_CASE("monotone budget: larger budgets never increase the error") {
  Rng rng(9);
  for (int trial = 0; trial < 8; ++trial) {
    const Shape s{4, 5, 4, 3};
    const ModeShape ms{s, 2};
    const Tensor m = random_tensor(s, rng).reshaped({ms.rows(), ms.cols()});
    for (Family fam : {Family::Tucker, Family::TT}) {
      double prev = 2.0;
      for (std::size_t budget = 40; budget <= 400; budget += 30) {
        const RankSpec spec = select_ranks(ms, fam, TruncationPolicy::param_budget(budget));
        const double e = relative_error(m, reconstruct_matrix(decompose_matrix(m, ms, spec, 2)));
        CHECK(e <= prev + 1e-12);
        prev = e;
      }
    }
  }
}

TEST_CASE("select_ranks: relative-error targets") {
  Rng rng(10);
  const Shape s{4, 4, 4, 4};
  const ModeShape ms{s, 2};
  const Tensor t = random_tensor(s, rng);
  const Tensor m = t.reshaped({16, 16});
  for (double eps : {0.3, 0.6}) {
    const auto target = TruncationPolicy::relative_error(eps);
    for (Family fam : {Family::Tucker, Family::TT, Family::TR}) {
      const RankSpec spec = select_ranks(t, ms, fam, target);
      CHECK(relative_error(m, reconstruct_matrix(decompose_matrix(m, ms, spec, 0))) <= eps + 1e-12);
    }
  }
  CHECK_THROWS_AS(select_ranks(ms, Family::TT, TruncationPolicy::relative_error(0.1)), InvalidArgument);
}

TEST_CASE("mode shapes and degenerate modes") {
  CHECK(choose_mode_shape(64, 64) == ModeShape{{8, 8, 8, 8}, 2});
  CHECK(choose_mode_shape(36, 64) == ModeShape{{6, 6, 8, 8}, 2});
  CHECK(choose_mode_shape(37, 64) == ModeShape{{37, 8, 8}, 1});
  CHECK(choose_mode_shape(1, 64) == ModeShape{{1, 8, 8}, 1});
  CHECK(choose_mode_shape(128, 256) == ModeShape{{8, 16, 16, 16}, 2});
  CHECK(choose_mode_shape(48, 20) == ModeShape{{6, 8, 4, 5}, 2});

  Rng rng(11);
  const Tensor t = random_tensor({1, 8, 8}, rng);
  const std::size_t r[] = {8, 8};
  const CompressedLayer c = tucker_decompose(t, r, 0, 1);
  CHECK(reconstruct(c).shape() == Shape{1, 8, 8});
  CHECK(err_of(t, c) <= 1e-10);
  const std::size_t with_unit[] = {1, 8, 8};
  CHECK(err_of(t, tucker_decompose(t, with_unit, 0)) <= 1e-10);
}
