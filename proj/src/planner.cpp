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

#include "minima/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <tuple>

#include "minima/errors.hpp"

namespace minima {

std::string_view plan_mode_name(PlanMode m) {
  switch (m) {
    case PlanMode::Uniform: return "uniform";
    case PlanMode::Sensitivity: return "sensitivity";
    case PlanMode::SensitivityMixed: return "sensitivity_mixed";
  }
  return "sensitivity_mixed";
}

PlanMode parse_plan_mode(std::string_view name) {
  for (auto m : {PlanMode::Uniform, PlanMode::Sensitivity, PlanMode::SensitivityMixed}) {
    if (plan_mode_name(m) == name) return m;
  }
  throw InvalidArgument("unknown planner mode '" + std::string(name) + "'");
}

double CompressionPlan::achieved_ratio() const {
  return dense_params ? static_cast<double>(achieved_params) / static_cast<double>(dense_params) : 0.0;
}

double CompressionPlan::total_predicted_degradation() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.predicted_degradation;
  return s;
}

std::vector<PatchCandidates> build_candidates(std::span<const PatchAnalysis> analysis) {
  std::vector<PatchCandidates> out;
  for (const auto& pa : analysis) {
    PatchCandidates c{pa.patch, pa.shape, {}};
    for (const auto& h : pa.record.predictions) {
      try {
        const RankSpec ranks = candidate_ranks(pa.shape, h.family, h.ratio);
        c.options.push_back(
            {h.family, h.ratio, ranks, param_count(ranks, pa.shape.active()), h.expected()});
      } catch (const InfeasibleBudgetError&) {
      } catch (const RankError&) {
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

PlanEntry dense_entry(const PatchCandidates& c) {
  PlanEntry e;
  e.patch = c.patch;
  e.shape = c.shape;
  e.params = c.patch.size();
  return e;
}

PlanEntry option_entry(const PatchCandidates& c, const PlanOption& o) {
  PlanEntry e = dense_entry(c);
  e.keep_dense = false;
  e.family = o.family;
  e.ratio = o.ratio;
  e.ranks = o.ranks;
  e.params = o.params;
  e.predicted_degradation = o.degradation;
  return e;
}

bool compressible(const PatchCandidates& c, const PlannerOptions& o) {
  return o.compress_embeddings || c.patch.kind != SubmoduleKind::Embedding;
}

// Orders equal-cost choices: family order, then larger ratio.
bool option_precedes(const PlanOption& a, const PlanOption& b) {
  return std::tuple(a.family, -a.ratio) < std::tuple(b.family, -b.ratio);
}

// Options not dominated in (params, degradation) and cheaper than dense.
std::vector<PlanOption> pareto_front(const PatchCandidates& c, std::span<const Family> families) {
  std::vector<PlanOption> opts;
  for (const auto& o : c.options) {
    if (std::find(families.begin(), families.end(), o.family) != families.end() &&
        o.params < c.patch.size()) {
      opts.push_back(o);
    }
  }
  std::stable_sort(opts.begin(), opts.end(), [](const PlanOption& a, const PlanOption& b) {
    if (a.params != b.params) return a.params < b.params;
    if (a.degradation != b.degradation) return a.degradation < b.degradation;
    return option_precedes(a, b);
  });
  std::vector<PlanOption> front;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : opts) {
    if (o.degradation < best) {
      front.push_back(o);
      best = o.degradation;
    }
  }
  return front;
}

void finalize(CompressionPlan& plan) {
  plan.achieved_params = 0;
  plan.dense_params = 0;
  for (const auto& e : plan.entries) {
    plan.achieved_params += e.params;
    plan.dense_params += e.patch.size();
  }
}

bool within(std::size_t params, double target, std::size_t dense) {
  return static_cast<double>(params) <= target * static_cast<double>(dense);
}

// Piecewise-linear in ratio through the family's table, reaching 0 at ratio 1.
double interpolate_degradation(const PatchCandidates& c, Family family, double ratio) {
  std::vector<std::pair<double, double>> pts{{1.0, 0.0}};
  for (const auto& o : c.options) {
    if (o.family == family && o.ratio < 1.0) pts.emplace_back(o.ratio, o.degradation);
  }
  std::sort(pts.begin(), pts.end());
  if (ratio <= pts.front().first) return pts.front().second;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (ratio <= pts[i].first) {
      const auto [r0, d0] = pts[i - 1];
      const auto [r1, d1] = pts[i];
      return d0 + (d1 - d0) * (ratio - r0) / (r1 - r0);
    }
  }
  return 0.0;
}

CompressionPlan allocate_uniform(std::span<const PatchCandidates> patches, double target,
                                 const PlannerOptions& options) {
  const Family fam = options.single_family;
  std::size_t dense = 0;
  for (const auto& c : patches) dense += c.patch.size();

  auto plan_at = [&](double u) {
    CompressionPlan plan;
    plan.mode = PlanMode::Uniform;
    plan.target_ratio = target;
    for (const auto& c : patches) {
      PlanEntry e = dense_entry(c);
      if (compressible(c, options)) {
        try {
          const RankSpec r = candidate_ranks(c.shape, fam, u);
          const std::size_t params = param_count(r, c.shape.active());
          if (params < c.patch.size()) {
            e = option_entry(c, {fam, u, r, params, interpolate_degradation(c, fam, u)});
          }
        } catch (const InfeasibleBudgetError&) {
        } catch (const RankError&) {
        }
      }
      plan.entries.push_back(std::move(e));
    }
    finalize(plan);
    return plan;
  };

  if (target >= 1.0) return plan_at(1.0);
  double lo = 0.0, hi = 1.0;
  std::optional<CompressionPlan> best;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    CompressionPlan p = plan_at(mid);
    if (within(p.achieved_params, target, dense)) {
      lo = mid;
      best = std::move(p);
    } else {
      hi = mid;
    }
  }
  if (!best) {
    const CompressionPlan floor = plan_at(std::numeric_limits<double>::min());
    throw InfeasibleBudgetError("uniform ratio cannot reach the target", floor.achieved_ratio());
  }
  // Rank configurations are discrete, so move patches one at a time to the
  // next level up while the budget still holds.
  const CompressionPlan up = plan_at(hi);
  for (std::size_t i = 0; i < best->entries.size(); ++i) {
    const PlanEntry& cur = best->entries[i];
    const PlanEntry& next = up.entries[i];
    if (next.params <= cur.params) continue;
    if (!within(best->achieved_params + next.params - cur.params, target, dense)) continue;
    best->achieved_params += next.params - cur.params;
    best->entries[i] = next;
  }
  return *best;
}

}  // namespace

CompressionPlan allocate(std::span<const PatchCandidates> patches, double target_ratio,
                         PlanMode mode, const PlannerOptions& options) {
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) {
    throw InvalidArgument("target ratio must lie in (0, 1]");
  }
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].patch.id != i) throw PlanMismatchError("candidates must cover patch ids 0..n-1 in order");
  }
  if (mode == PlanMode::Uniform) return allocate_uniform(patches, target_ratio, options);

  std::vector<Family> families;
  if (mode == PlanMode::Sensitivity) {
    families = {options.single_family};
  } else {
    families = {Family::Tucker, Family::TT, Family::TR};
  }

  CompressionPlan plan;
  plan.mode = mode;
  plan.target_ratio = target_ratio;
  std::vector<std::vector<PlanOption>> fronts(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    plan.entries.push_back(dense_entry(patches[i]));
    if (!compressible(patches[i], options)) continue;
    auto front = pareto_front(patches[i], families);
    // Fragile floor: nothing within the cap means the patch stays dense.
    const bool fragile = std::all_of(front.begin(), front.end(), [&](const PlanOption& o) {
      return o.degradation > options.degradation_cap;
    });
    if (!fragile) fronts[i] = std::move(front);
  }
  finalize(plan);

  std::vector<double> cur_deg(patches.size(), 0.0);
  std::vector<std::size_t> cur_params(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) cur_params[i] = patches[i].patch.size();

  while (!within(plan.achieved_params, target_ratio, plan.dense_params)) {
    std::optional<std::pair<std::size_t, std::size_t>> pick;
    double best_score = -1.0;
    for (std::size_t i = 0; i < patches.size(); ++i) {
      for (std::size_t k = 0; k < fronts[i].size(); ++k) {
        const PlanOption& o = fronts[i][k];
        if (o.params >= cur_params[i]) continue;
        const double saved = static_cast<double>(cur_params[i] - o.params);
        const double score = saved / std::max(o.degradation - cur_deg[i], 1e-12);
        bool better = score > best_score;
        if (!better && score == best_score && pick && pick->first == i) {
          better = option_precedes(o, fronts[i][pick->second]);
        }
        if (better) {
          best_score = score;
          pick = {i, k};
        }
      }
    }
    if (!pick) {
      std::size_t floor = 0;
      for (std::size_t i = 0; i < patches.size(); ++i) {
        floor += fronts[i].empty() ? patches[i].patch.size() : fronts[i].front().params;
      }
      std::ostringstream msg;
      msg << "target ratio " << target_ratio << " unreachable in mode " << plan_mode_name(mode);
      throw InfeasibleBudgetError(msg.str(), static_cast<double>(floor) / plan.dense_params);
    }
    const auto [i, k] = *pick;
    const PlanOption& o = fronts[i][k];
    plan.achieved_params -= cur_params[i] - o.params;
    cur_params[i] = o.params;
    cur_deg[i] = o.degradation;
    plan.entries[i] = option_entry(patches[i], o);
  }

  // The last greedy step usually overshoots; spend the slack on the single
  // relaxation that removes the most degradation, until none fits.
  while (true) {
    std::optional<std::pair<std::size_t, std::optional<std::size_t>>> pick;
    double best_gain = 0.0;
    for (std::size_t i = 0; i < patches.size(); ++i) {
      if (fronts[i].empty() || plan.entries[i].keep_dense) continue;
      auto consider = [&](std::size_t params, double deg, std::optional<std::size_t> k) {
        if (params <= cur_params[i]) return;
        if (!within(plan.achieved_params + params - cur_params[i], target_ratio, plan.dense_params)) return;
        const double gain = cur_deg[i] - deg;
        if (gain > best_gain) {
          best_gain = gain;
          pick = {i, k};
        }
      };
      consider(patches[i].patch.size(), 0.0, std::nullopt);
      for (std::size_t k = 0; k < fronts[i].size(); ++k) {
        consider(fronts[i][k].params, fronts[i][k].degradation, k);
      }
    }
    if (!pick) break;
    const auto [i, k] = *pick;
    if (k) {
      const PlanOption& o = fronts[i][*k];
      plan.achieved_params += o.params - cur_params[i];
      cur_params[i] = o.params;
      cur_deg[i] = o.degradation;
      plan.entries[i] = option_entry(patches[i], o);
    } else {
      plan.achieved_params += patches[i].patch.size() - cur_params[i];
      cur_params[i] = patches[i].patch.size();
      cur_deg[i] = 0.0;
      plan.entries[i] = dense_entry(patches[i]);
    }
  }
  return plan;
}

PlanSummary plan_summary(const CompressionPlan& plan) {
  PlanSummary s;
  auto add = [](GroupSummary& g, const PlanEntry& e) {
    ++g.patches;
    g.compressed += !e.keep_dense;
    g.params += e.params;
    g.dense_params += e.patch.size();
    g.predicted_degradation += e.predicted_degradation;
  };
  for (const auto& e : plan.entries) {
    add(s.total, e);
    add(s.by_submodule[std::string(submodule_name(e.patch.kind))], e);
    add(s.by_family[std::string(family_name(e.family))], e);
  }
  s.achieved_ratio =
      s.total.dense_params ? static_cast<double>(s.total.params) / s.total.dense_params : 0.0;
  return s;
}

}  // namespace minima
