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
#include "minima/structured.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>

#include "minima/errors.hpp"
#include "minima/kernels.hpp"
#include "minima/tensor_ops.hpp"

namespace minima {
namespace {

using Labels = std::vector<std::size_t>;

struct Network {
  std::vector<Labels> operands;
  std::vector<std::size_t> sizes;  // per label
  Labels output;                   // row labels, then batch
};

// A layer whose modes are all of size one carries a single scalar; treat it
// like a 1 x 1 dense block.
bool dense_like(const CompressedLayer& c) {
  return c.family == Family::Dense || c.shape.active().empty();
}

Network describe(const CompressedLayer& c, std::size_t batch) {
  Network n;
  auto label = [&](std::size_t size) {
    n.sizes.push_back(size);
    return n.sizes.size() - 1;
  };
  if (dense_like(c)) {
    const std::size_t r = label(c.shape.rows()), k = label(c.shape.cols()), b = label(batch);
    n.operands = {{r, k}, {k, b}};
    n.output = {r, b};
    return n;
  }
  const Shape active = c.shape.active();
  const std::size_t d = active.size(), p = c.shape.active_row_modes();
  Labels m(d);
  for (std::size_t k = 0; k < d; ++k) m[k] = label(active[k]);
  const std::size_t b = label(batch);

  if (c.family == Family::Tucker) {
    Labels a(d);
    for (std::size_t k = 0; k < d; ++k) a[k] = label(c.core.dim(k));
    n.operands.push_back(a);
    for (std::size_t k = 0; k < d; ++k) n.operands.push_back({m[k], a[k]});
  } else if (c.family == Family::TT) {
    Labels t(d + 1, 0);
    for (std::size_t k = 1; k < d; ++k) t[k] = label(c.factors[k].dim(0));
    for (std::size_t k = 0; k < d; ++k) {
      Labels l;
      if (k > 0) l.push_back(t[k]);
      l.push_back(m[k]);
      if (k + 1 < d) l.push_back(t[k + 1]);
      n.operands.push_back(l);
    }
  } else {
    if (d == 1) {
      n.operands.push_back({m[0]});
    } else {
      Labels t(d);
      for (std::size_t k = 0; k < d; ++k) t[k] = label(c.factors[k].dim(0));
      for (std::size_t k = 0; k < d; ++k) n.operands.push_back({t[k], m[k], t[(k + 1) % d]});
    }
  }
  Labels xl(m.begin() + static_cast<std::ptrdiff_t>(p), m.end());
  xl.push_back(b);
  n.operands.push_back(xl);
  n.output.assign(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(p));
  n.output.push_back(b);
  return n;
}

// Operand tensors shaped to match describe().
std::vector<Tensor> materialize(const CompressedLayer& c, const Tensor& x) {
  const std::size_t batch = x.cols();
  if (dense_like(c)) {
    return {c.family == Family::Dense ? c.core : reconstruct_matrix(c), x};
  }
  const Shape active = c.shape.active();
  const std::size_t d = active.size(), p = c.shape.active_row_modes();
  std::vector<Tensor> ops;
  if (c.family == Family::Tucker) {
    ops.push_back(c.core);
    for (const auto& u : c.factors) ops.push_back(u);
  } else if (c.family == Family::TT) {
    for (std::size_t k = 0; k < d; ++k) {
      const Tensor& g = c.factors[k];
      Shape s;
      if (k > 0) s.push_back(g.dim(0));
      s.push_back(g.dim(1));
      if (k + 1 < d) s.push_back(g.dim(2));
      ops.push_back(g.reshaped(s));
    }
  } else if (d == 1) {
    const Tensor& g = c.factors[0];
    Tensor v(Shape{g.dim(1)});
    for (std::size_t j = 0; j < g.dim(1); ++j)
      for (std::size_t r = 0; r < g.dim(0); ++r) v[j] += g[(r * g.dim(1) + j) * g.dim(2) + r];
    ops.push_back(std::move(v));
  } else {
    for (const auto& g : c.factors) ops.push_back(g);
  }
  Shape xs(active.begin() + static_cast<std::ptrdiff_t>(p), active.end());
  xs.push_back(batch);
  ops.push_back(x.reshaped(xs));
  return ops;
}

struct Merge {
  Labels result;
  std::uint64_t flops = 0;
  std::size_t result_size = 1;
};

Merge merge(const Labels& a, const Labels& b, const std::vector<std::size_t>& sizes) {
  Merge m;
  std::uint64_t all = 1;
  for (std::size_t l : a) {
    all *= sizes[l];
    if (std::find(b.begin(), b.end(), l) == b.end()) m.result.push_back(l);
  }
  for (std::size_t l : b) {
    if (std::find(a.begin(), a.end(), l) == a.end()) {
      all *= sizes[l];
      m.result.push_back(l);
    }
  }
  for (std::size_t l : m.result) m.result_size *= sizes[l];
  m.flops = 2 * all;
  return m;
}

// Depth-first over pairwise orders in lexicographic step order. With a
// bound, branches that cannot beat it are cut; otherwise every order is
// reported.
class OrderSearch {
 public:
  OrderSearch(const Network& n, std::size_t batch, bool exhaustive)
      : sizes_(n.sizes), batch_(batch), exhaustive_(exhaustive) {
    current_.batch = batch;
  }

  void run(std::vector<Labels> ops) { descend(ops); }

  std::vector<ContractionPlan> found;

 private:
  void descend(const std::vector<Labels>& ops) {
    if (!exhaustive_ && !found.empty() && current_.predicted_flops >= found.front().predicted_flops) {
      return;
    }
    if (ops.size() == 1) {
      if (exhaustive_ || found.empty()) {
        found.push_back(current_);
      } else {
        found.front() = current_;
      }
      return;
    }
    for (std::size_t i = 0; i < ops.size(); ++i) {
      for (std::size_t j = i + 1; j < ops.size(); ++j) {
        const Merge m = merge(ops[i], ops[j], sizes_);
        std::vector<Labels> next = ops;
        next[i] = m.result;
        next.erase(next.begin() + static_cast<std::ptrdiff_t>(j));
        const ContractionPlan saved = current_;
        current_.steps.push_back({i, j, m.flops, m.result_size});
        current_.predicted_flops += m.flops;
        if (next.size() > 1) current_.max_intermediate = std::max(current_.max_intermediate, m.result_size);
        descend(next);
        current_ = saved;
      }
    }
  }

  const std::vector<std::size_t>& sizes_;
  std::size_t batch_;
  bool exhaustive_;
  ContractionPlan current_;
};

void check_input(const CompressedLayer& c, const Tensor& x) {
  if (x.rank() != 2 || x.rows() != c.shape.cols()) {
    throw ShapeError("input " + shape_to_string(x.shape()) + " does not match layer with " +
                     std::to_string(c.shape.cols()) + " columns");
  }
}

TimingStats summarize(std::vector<double> ns) {
  std::sort(ns.begin(), ns.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(ns.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, ns.size() - 1);
    return ns[lo] + (ns[hi] - ns[lo]) * (pos - static_cast<double>(lo));
  };
  return {at(0.5), at(0.75) - at(0.25), ns.size()};
}

}  // namespace

ContractionPlan plan_contraction(const CompressedLayer& c, std::size_t batch) {
  const Network n = describe(c, batch);
  OrderSearch s(n, batch, false);
  s.run(n.operands);
  return s.found.front();
}

ContractionPlan left_to_right_plan(const CompressedLayer& c, std::size_t batch) {
  const Network n = describe(c, batch);
  ContractionPlan plan;
  plan.batch = batch;
  std::vector<Labels> ops = n.operands;
  while (ops.size() > 1) {
    const Merge m = merge(ops[0], ops[1], n.sizes);
    plan.steps.push_back({0, 1, m.flops, m.result_size});
    plan.predicted_flops += m.flops;
    ops[0] = m.result;
    ops.erase(ops.begin() + 1);
    if (ops.size() > 1) plan.max_intermediate = std::max(plan.max_intermediate, m.result_size);
  }
  return plan;
}

std::vector<ContractionPlan> all_contraction_plans(const CompressedLayer& c, std::size_t batch) {
  const Network n = describe(c, batch);
  OrderSearch s(n, batch, true);
  s.run(n.operands);
  return std::move(s.found);
}

Tensor apply_compressed(const CompressedLayer& c, const Tensor& x, ApplyTrace* trace) {
  check_input(c, x);
  return apply_compressed(c, x, plan_contraction(c, x.cols()), trace);
}

Tensor apply_compressed(const CompressedLayer& c, const Tensor& x, const ContractionPlan& plan,
                        ApplyTrace* trace) {
  check_input(c, x);
  const Network n = describe(c, x.cols());
  if (plan.steps.size() + 1 != n.operands.size() || plan.batch != x.cols()) {
    throw InvalidArgument("contraction plan does not fit this layer and batch");
  }
  std::vector<Tensor> tensors = materialize(c, x);
  std::vector<Labels> labels = n.operands;
  kernels::MultiplyAddCounter counter;
  std::size_t largest = 0;
  for (const auto& step : plan.steps) {
    const Labels& la = labels[step.lhs];
    const Labels& lb = labels[step.rhs];
    std::vector<std::size_t> am, bm;
    for (std::size_t i = 0; i < la.size(); ++i) {
      const auto it = std::find(lb.begin(), lb.end(), la[i]);
      if (it != lb.end()) {
        am.push_back(i);
        bm.push_back(static_cast<std::size_t>(it - lb.begin()));
      }
    }
    Tensor r = contract(tensors[step.lhs], am, tensors[step.rhs], bm);
    Labels rl = merge(la, lb, n.sizes).result;
    if (tensors.size() > 2) largest = std::max(largest, r.size());
    tensors[step.lhs] = std::move(r);
    labels[step.lhs] = std::move(rl);
    tensors.erase(tensors.begin() + static_cast<std::ptrdiff_t>(step.rhs));
    labels.erase(labels.begin() + static_cast<std::ptrdiff_t>(step.rhs));
  }
  if (trace) {
    trace->multiply_adds = counter.count();
    trace->max_intermediate = largest;
  }
  std::vector<std::size_t> perm;
  for (std::size_t l : n.output) {
    perm.push_back(static_cast<std::size_t>(std::find(labels[0].begin(), labels[0].end(), l) -
                                            labels[0].begin()));
  }
  return permute(tensors[0], perm).reshaped({c.shape.rows(), x.cols()});
}

Tensor apply_matrix(const CompressedMatrix& m, const Tensor& x) {
  if (x.rank() != 2 || x.rows() != m.cols) {
    throw ShapeError("input " + shape_to_string(x.shape()) + " does not match '" + m.name + "'");
  }
  const std::size_t batch = x.cols();
  Tensor y(Shape{m.rows, batch});
  for (const auto& p : m.patches) {
    Tensor xs(Shape{p.patch.cols.size(), batch});
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(p.patch.cols.begin * batch),
                xs.size(), xs.data().begin());
    const Tensor ys = apply_compressed(p.layer, xs);
    double* out = y.data().data() + p.patch.rows.begin * batch;
    for (std::size_t i = 0; i < ys.size(); ++i) out[i] += ys[i];
  }
  return y;
}

FlopReport flop_report(const CompressedModel& model, std::size_t batch) {
  FlopReport r;
  r.batch = batch;
  for (const auto& m : model.matrices) {
    LayerFlops lf{m.name, 2ull * m.rows * m.cols * batch, 0, 0};
    for (const auto& p : m.patches) {
      const ContractionPlan plan = plan_contraction(p.layer, batch);
      lf.structured_flops += plan.predicted_flops;
      lf.max_intermediate = std::max(lf.max_intermediate, plan.max_intermediate);
    }
    r.dense_flops += lf.dense_flops;
    r.structured_flops += lf.structured_flops;
    r.layers.push_back(std::move(lf));
  }
  r.speedup_ratio = r.structured_flops
                        ? static_cast<double>(r.dense_flops) / static_cast<double>(r.structured_flops)
                        : 1.0;
  return r;
}

BenchmarkResult micro_benchmark(const CompressedLayer& c, const Tensor& x, std::size_t reps,
                                std::size_t warmup) {
  if (reps < 10) throw InvalidArgument("micro_benchmark needs at least 10 repetitions");
  check_input(c, x);
  const ContractionPlan plan = plan_contraction(c, x.cols());
  const Tensor w = reconstruct_matrix(c);
  auto time = [&](auto&& fn) {
    std::vector<double> ns;
    for (std::size_t i = 0; i < warmup + reps; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      const auto t1 = std::chrono::steady_clock::now();
      if (i >= warmup) ns.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
    }
    return summarize(std::move(ns));
  };
  BenchmarkResult out;
  out.structured = time([&] { (void)apply_compressed(c, x, plan); });
  out.dense = time([&] { (void)matmul(w, x); });
  return out;
}

}  // namespace minima
