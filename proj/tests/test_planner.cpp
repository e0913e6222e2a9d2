#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "doctest.h"
#include "minima/errors.hpp"
#include "minima/planner.hpp"
#include "minima/rng.hpp"

using namespace minima;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

PatchCandidates patch(std::size_t id, std::vector<PlanOption> options,
                      SubmoduleKind kind = SubmoduleKind::Ffn, std::size_t rows = 64,
                      std::size_t cols = 64) {
  Patch p{id, "w", 0, kind, {0, rows}, {0, cols}};
  return {p, choose_mode_shape(rows, cols), std::move(options)};
}

PlanOption opt(Family f, double ratio, std::size_t params, double deg) {
  return {f, ratio, RankSpec{f, {}}, params, deg};
}

// Exact minimum total degradation with total params within the budget: DP over
// patches and parameter totals. Every option plus dense is allowed.
std::optional<double> dp_oracle(const std::vector<PatchCandidates>& ps, std::size_t budget) {
  std::vector<double> best(budget + 1, kInf), next;
  best[0] = 0.0;
  for (const auto& c : ps) {
    next.assign(budget + 1, kInf);
    for (std::size_t used = 0; used <= budget; ++used) {
      if (best[used] == kInf) continue;
      auto relax = [&](std::size_t params, double deg) {
        if (used + params <= budget) next[used + params] = std::min(next[used + params], best[used] + deg);
      };
      relax(c.patch.size(), 0.0);
      for (const auto& o : c.options) relax(o.params, o.degradation);
    }
    best.swap(next);
  }
  const double m = *std::min_element(best.begin(), best.end());
  if (m == kInf) return std::nullopt;
  return m;
}

std::optional<double> brute_force(const std::vector<PatchCandidates>& ps, std::size_t budget) {
  std::optional<double> best;
  std::vector<std::size_t> pick(ps.size(), 0);
  while (true) {
    std::size_t params = 0;
    double deg = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (pick[i] == 0) {
        params += ps[i].patch.size();
      } else {
        params += ps[i].options[pick[i] - 1].params;
        deg += ps[i].options[pick[i] - 1].degradation;
      }
    }
    if (params <= budget && (!best || deg < *best)) best = deg;
    std::size_t i = 0;
    while (i < ps.size() && ++pick[i] > ps[i].options.size()) pick[i++] = 0;
    if (i == ps.size()) break;
  }
  return best;
}

// Options whose degradation grows as parameters shrink, loosely convex.
std::vector<PatchCandidates> random_instance(Rng& rng, std::size_t n, std::size_t max_options) {
  std::vector<PatchCandidates> ps;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t rows = 16 + rng.below(49), cols = 16 + rng.below(49);
    const std::size_t size = rows * cols;
    const double sensitivity = 0.001 + 0.2 * rng.uniform();
    std::vector<PlanOption> options;
    const std::size_t k = 1 + rng.below(max_options);
    for (std::size_t j = 0; j < k; ++j) {
      const double ratio = 0.05 + 0.85 * rng.uniform();
      const auto params = static_cast<std::size_t>(ratio * size);
      const double deg = sensitivity * std::pow(1.0 - ratio, 1.0 + rng.uniform()) + 0.01 * rng.uniform();
      options.push_back(opt(Family(1 + rng.below(3)), ratio, params, deg));
    }
    ps.push_back(patch(i, std::move(options), SubmoduleKind::Ffn, rows, cols));
  }
  return ps;
}

std::size_t dense_total(const std::vector<PatchCandidates>& ps) {
  std::size_t s = 0;
  for (const auto& c : ps) s += c.patch.size();
  return s;
}

PlannerOptions no_cap() {
  PlannerOptions o;
  o.degradation_cap = kInf;
  return o;
}

}  // namespace

TEST_CASE("two-patch example matches exhaustive enumeration") {
  const std::vector<PatchCandidates> ps{
      patch(0, {opt(Family::TT, 0.5, 2048, 0.01), opt(Family::TT, 0.25, 1024, 0.05)}),
      patch(1, {opt(Family::TT, 0.5, 2048, 0.30)})};
  const CompressionPlan plan = allocate(ps, 0.70, PlanMode::Sensitivity);
  REQUIRE(plan.entries.size() == 2);
  CHECK_FALSE(plan.entries[0].keep_dense);
  CHECK(plan.entries[0].ratio == 0.25);
  CHECK(plan.entries[0].params == 1024);
  CHECK(plan.entries[1].keep_dense);
  CHECK(plan.achieved_params == 5120);
  CHECK(plan.dense_params == 8192);
  CHECK(plan.total_predicted_degradation() == doctest::Approx(0.05));
  const auto best = brute_force(ps, 5734);
  REQUIRE(best);
  CHECK(*best == doctest::Approx(plan.total_predicted_degradation()));
}

TEST_CASE("target ratio one keeps everything dense") {
  Rng rng(2);
  const auto ps = random_instance(rng, 8, 4);
  for (PlanMode m : {PlanMode::Uniform, PlanMode::Sensitivity, PlanMode::SensitivityMixed}) {
    const CompressionPlan plan = allocate(ps, 1.0, m);
    CHECK(plan.achieved_params == plan.dense_params);
    CHECK(plan.total_predicted_degradation() == 0.0);
    for (const auto& e : plan.entries) CHECK(e.keep_dense);
  }
}

TEST_CASE("invalid targets and mismatched ids are rejected") {
  const std::vector<PatchCandidates> ps{patch(0, {opt(Family::TT, 0.5, 2048, 0.01)})};
  CHECK_THROWS_AS(allocate(ps, 0.0, PlanMode::Sensitivity), InvalidArgument);
  CHECK_THROWS_AS(allocate(ps, 1.5, PlanMode::Sensitivity), InvalidArgument);
  const std::vector<PatchCandidates> gap{patch(1, {})};
  CHECK_THROWS_AS(allocate(gap, 0.5, PlanMode::SensitivityMixed), PlanMismatchError);
}

TEST_CASE("unreachable targets report the best ratio") {
  const std::vector<PatchCandidates> ps{
      patch(0, {opt(Family::TT, 0.5, 2048, 0.01), opt(Family::Tucker, 0.25, 1024, 0.01)}),
      patch(1, {opt(Family::TT, 0.5, 2048, 0.30)})};
  try {
    allocate(ps, 0.1, PlanMode::SensitivityMixed);
    FAIL("expected InfeasibleBudgetError");
  } catch (const InfeasibleBudgetError& e) {
    // Patch 1 is fragile and pinned dense.
    CHECK(e.best_ratio() == doctest::Approx((1024.0 + 4096.0) / 8192.0));
  }
}

TEST_CASE("fragile floor and embedding exclusion") {
  const std::vector<PatchCandidates> ps{
      patch(0, {opt(Family::TT, 0.5, 2048, 0.03)}),
      patch(1, {opt(Family::TT, 0.5, 2048, 0.001)}, SubmoduleKind::Embedding),
      patch(2, {opt(Family::TT, 0.5, 2048, 0.01)})};
  const CompressionPlan plan = allocate(ps, 0.9, PlanMode::Sensitivity);
  CHECK(plan.entries[0].keep_dense);
  CHECK(plan.entries[1].keep_dense);
  CHECK_FALSE(plan.entries[2].keep_dense);
  CHECK_THROWS_AS(allocate(ps, 0.7, PlanMode::Sensitivity), InfeasibleBudgetError);
  PlannerOptions with_embed;
  with_embed.compress_embeddings = true;
  const CompressionPlan p2 = allocate(ps, 0.7, PlanMode::Sensitivity, with_embed);
  CHECK_FALSE(p2.entries[1].keep_dense);
  CHECK_FALSE(p2.entries[2].keep_dense);
}

TEST_CASE("sensitivity mode is restricted to one family") {
  const std::vector<PatchCandidates> ps{
      patch(0, {opt(Family::Tucker, 0.25, 1024, 0.001), opt(Family::TT, 0.5, 2048, 0.01)})};
  PlannerOptions o;
  o.single_family = Family::TT;
  const CompressionPlan s = allocate(ps, 0.5, PlanMode::Sensitivity, o);
  CHECK(s.entries[0].family == Family::TT);
  const CompressionPlan m = allocate(ps, 0.5, PlanMode::SensitivityMixed, o);
  CHECK(m.entries[0].family == Family::Tucker);
}

TEST_CASE("ties break toward lower patch id, family order and larger ratio") {
  const std::vector<PatchCandidates> ps{
      patch(0, {opt(Family::TR, 0.5, 2048, 0.01), opt(Family::Tucker, 0.5, 2048, 0.01)}),
      patch(1, {opt(Family::Tucker, 0.5, 2048, 0.01)})};
  const CompressionPlan plan = allocate(ps, 0.75, PlanMode::SensitivityMixed);
  CHECK_FALSE(plan.entries[0].keep_dense);
  CHECK(plan.entries[0].family == Family::Tucker);
  CHECK(plan.entries[1].keep_dense);
}

TEST_CASE("dp oracle agrees with enumeration") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ps = random_instance(rng, 1 + rng.below(5), 3);
    const auto budget = static_cast<std::size_t>((0.2 + 0.8 * rng.uniform()) * dense_total(ps));
    const auto a = dp_oracle(ps, budget), b = brute_force(ps, budget);
    REQUIRE(a.has_value() == b.has_value());
    if (a) CHECK(*a == doctest::Approx(*b).epsilon(1e-12));
  }
}

TEST_CASE("greedy stays within 1.25x of the optimum on most instances") {
  Rng rng(11);
  std::size_t within = 0, solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto ps = random_instance(rng, 2 + rng.below(11), 4);
    const double target = 0.3 + 0.6 * rng.uniform();
    const auto budget = static_cast<std::size_t>(target * dense_total(ps));
    const auto best = dp_oracle(ps, budget);
    std::optional<CompressionPlan> plan;
    try {
      plan = allocate(ps, target, PlanMode::SensitivityMixed, no_cap());
    } catch (const InfeasibleBudgetError&) {
    }
    // Greedy explores every option, so it fails exactly when nothing fits.
    REQUIRE(plan.has_value() == best.has_value());
    if (!plan) continue;
    ++solved;
    CHECK(plan->achieved_params <= budget);
    const double g = plan->total_predicted_degradation();
    CHECK(g >= *best - 1e-12);
    if (g <= 1.25 * *best + 1e-12) ++within;
  }
  MESSAGE("within bound " << within << "/" << solved);
  REQUIRE(solved >= 100);
  CHECK(double(within) >= 0.95 * double(solved));
}

TEST_CASE("budget satisfaction, monotonicity and determinism") {
  Rng rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    const auto ps = random_instance(rng, 4 + rng.below(20), 4);
    double prev = kInf;
    for (int step = 0; step <= 16; ++step) {
      const double t = 0.2 + 0.05 * step;
      std::optional<CompressionPlan> plan;
      try {
        plan = allocate(ps, t, PlanMode::SensitivityMixed, no_cap());
      } catch (const InfeasibleBudgetError&) {
        continue;
      }
      CHECK(static_cast<double>(plan->achieved_params) <= t * plan->dense_params);
      const double d = plan->total_predicted_degradation();
      if (prev != kInf) CHECK(d <= prev + 1e-15);
      prev = d;
      const CompressionPlan again = allocate(ps, t, PlanMode::SensitivityMixed, no_cap());
      REQUIRE(again.entries.size() == plan->entries.size());
      for (std::size_t i = 0; i < again.entries.size(); ++i) {
        CHECK(again.entries[i].params == plan->entries[i].params);
        CHECK(again.entries[i].family == plan->entries[i].family);
        CHECK(again.entries[i].ratio == plan->entries[i].ratio);
      }
    }
  }
}

TEST_CASE("uniform mode applies one family near the target") {
  std::vector<PatchCandidates> ps;
  for (std::size_t i = 0; i < 24; ++i) {
    ps.push_back(patch(i, {opt(Family::TT, 0.5, 2048, 0.5), opt(Family::TT, 0.25, 1024, 0.9)},
                       i == 0 ? SubmoduleKind::Embedding : SubmoduleKind::Ffn));
  }
  for (double t : {0.3, 0.5, 0.65, 0.8}) {
    const CompressionPlan plan = allocate(ps, t, PlanMode::Uniform);
    CHECK(static_cast<double>(plan.achieved_params) <= t * plan.dense_params);
    CHECK(plan.achieved_ratio() >= t - 0.02);
    CHECK(plan.entries[0].keep_dense);
    for (const auto& e : plan.entries) {
      if (!e.keep_dense) CHECK(e.family == Family::TT);
    }
  }
  CHECK_THROWS_AS(allocate(ps, 0.01, PlanMode::Uniform), InfeasibleBudgetError);
}

TEST_CASE("plan summary recounts entries") {
  CompressionPlan empty;
  const PlanSummary z = plan_summary(empty);
  CHECK(z.total.patches == 0);
  CHECK(z.total.params == 0);
  CHECK(z.achieved_ratio == 0.0);
  CHECK(z.by_family.empty());

  const std::vector<PatchCandidates> one{patch(0, {opt(Family::TR, 0.5, 2048, 0.01)})};
  const PlanSummary s1 = plan_summary(allocate(one, 0.6, PlanMode::SensitivityMixed));
  CHECK(s1.total.patches == 1);
  CHECK(s1.total.compressed == 1);
  CHECK(s1.total.params == 2048);
  CHECK(s1.by_family.at("tr").params == 2048);
  CHECK(s1.achieved_ratio == 0.5);

  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto ps = random_instance(rng, 10 + rng.below(10), 4);
    for (auto& c : ps) c.patch.kind = SubmoduleKind(rng.below(3));
    CompressionPlan plan;
    try {
      plan = allocate(ps, 0.6, PlanMode::SensitivityMixed, no_cap());
    } catch (const InfeasibleBudgetError&) {
      continue;
    }
    const PlanSummary s = plan_summary(plan);
    std::size_t params = 0, by_sub = 0, by_fam = 0, compressed = 0;
    for (const auto& e : plan.entries) {
      params += e.params;
      compressed += !e.keep_dense;
    }
    for (const auto& [k, g] : s.by_submodule) by_sub += g.params;
    for (const auto& [k, g] : s.by_family) by_fam += g.params;
    CHECK(s.total.params == params);
    CHECK(s.total.params == plan.achieved_params);
    CHECK(by_sub == params);
    CHECK(by_fam == params);
    CHECK(s.total.compressed == compressed);
    CHECK(s.total.predicted_degradation == doctest::Approx(plan.total_predicted_degradation()));
  }
}
