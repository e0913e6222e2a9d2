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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "minima/errors.hpp"
#include "minima/linalg.hpp"
#include "minima/pipeline.hpp"
#include "minima/tensor_ops.hpp"

namespace minima {

namespace {

struct Objective {
  const Tensor& w;
  Tensor c;  // X X^T
  double ref = 0.0;

  Objective(const Tensor& w_, const Tensor& x) : w(w_), c(matmul(x, transpose(x))) {
    ref = value_of_error(w);
  }

  double value_of_error(const Tensor& e) const {
    const Tensor ec = matmul(e, c);
    double j = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) j += e[i] * ec[i];
    return std::max(j, 0.0);
  }

  Tensor residual(const CompressedLayer& layer) const {
    Tensor e = w;
    const Tensor w_hat = reconstruct_matrix(layer);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] -= w_hat[i];
    return e;
  }

  double operator()(const CompressedLayer& layer) const { return value_of_error(residual(layer)); }
};

Tensor kron(std::span<const Tensor> mats) {
  Tensor acc = Tensor::identity(1);
  for (const Tensor& m : mats) {
    Tensor next(Shape{acc.rows() * m.rows(), acc.cols() * m.cols()});
    for (std::size_t i = 0; i < acc.rows(); ++i)
      for (std::size_t j = 0; j < acc.cols(); ++j)
        for (std::size_t k = 0; k < m.rows(); ++k)
          for (std::size_t l = 0; l < m.cols(); ++l)
            next.at(i * m.rows() + k, j * m.cols() + l) = acc.at(i, j) * m.at(k, l);
    acc = std::move(next);
  }
  return acc;
}

Tensor expand_except(const Tensor& core, const std::vector<Tensor>& factors, std::size_t skip) {
  Tensor t = core;
  for (std::size_t j = 0; j < factors.size(); ++j) {
    if (j != skip) t = mode_product(t, factors[j], j);
  }
  return t;
}

class TuckerHealer {
 public:
  TuckerHealer(CompressedLayer& layer, const Tensor& w, const Tensor& x, const Objective& obj,
               HealRecord& rec)
      : layer_(layer), x_(x), obj_(obj), rec_(rec) {
    n_ = layer.shape.active();
    p_ = layer.shape.active_row_modes();
    m_ = 1;
    for (std::size_t k = 0; k < p_; ++k) m_ *= n_[k];
    cols_ = w.cols();
    Shape yshape(n_.begin(), n_.begin() + p_);
    yshape.push_back(x.cols());
    y_ = matmul(w, x).reshaped(yshape);
    wc_ = matmul(w, obj.c);
  }

  double sweep(double j) {
    for (std::size_t k = 0; k < n_.size(); ++k) {
      j = try_update(j, [&] { return k < p_ ? row_factor(k) : col_factor(k); }, k);
    }
    return try_update(j, [&] { return core(); }, n_.size());
  }

 private:
  template <class F>
  double try_update(double j, F&& solve, std::size_t slot) {
    const Tensor next = solve();
    Tensor& target = slot < n_.size() ? layer_.factors[slot] : layer_.core;
    Tensor saved = target;
    target = next.reshaped(saved.shape());
    const double jn = obj_(layer_);
    if (jn <= j) {
      ++rec_.accepted;
      return jn;
    }
    target = std::move(saved);
    ++rec_.rejected;
    return j;
  }

  Tensor solve(const Tensor& normal, const Tensor& rhs) {
    SymmetricSolve s = solve_symmetric(normal, rhs);
    rec_.pinv_fallbacks += s.used_pseudo_inverse;
    return std::move(s.solution);
  }

  // Row modes see X only through Y = W X, so each factor is a plain
  // least-squares fit against the mode-k unfolding of Y.
  Tensor row_factor(std::size_t k) {
    const auto& f = layer_.factors;
    Tensor h = layer_.core;
    for (std::size_t j = p_; j < n_.size(); ++j) h = mode_product(h, f[j], j);
    Shape rshape(h.shape().begin(), h.shape().begin() + p_);
    const std::size_t rr = shape_product(rshape);
    Tensor hx = matmul(std::move(h).reshaped({rr, cols_}), x_);
    rshape.push_back(x_.cols());
    Tensor z = std::move(hx).reshaped(rshape);
    for (std::size_t j = 0; j < p_; ++j) {
      if (j != k) z = mode_product(z, f[j], j);
    }
    const Tensor zk = unfold(z, k);
    const Tensor yk = unfold(y_, k);
    return transpose(solve(matmul(zk, transpose(zk)), matmul(zk, transpose(yk))));
  }

  // Column factors are sandwiched against C = X X^T; the normal equations
  // couple all n_k * r_k entries.
  Tensor col_factor(std::size_t k) {
    const std::size_t d = n_.size();
    const Tensor pt = expand_except(layer_.core, layer_.factors, k);
    const std::size_t rk = pt.dim(k), nk = n_[k];
    const std::size_t rest = cols_ / nk;

    std::vector<std::size_t> perm{k};
    for (std::size_t j = 0; j < p_; ++j) perm.push_back(j);
    for (std::size_t j = p_; j < d; ++j) {
      if (j != k) perm.push_back(j);
    }
    const Tensor p3 = permute(pt, perm).reshaped({rk, m_, rest});
    const std::size_t q_perm[] = {0, 2, 1};
    const Tensor q = permute(p3, q_perm).reshaped({rk * rest, m_});
    const Tensor dmat = matmul(q, transpose(q));

    Shape cshape(n_.begin() + p_, n_.end());
    const std::size_t kc = k - p_;
    std::vector<std::size_t> cperm{kc};
    for (std::size_t j = 0; j < cshape.size(); ++j) {
      if (j != kc) cperm.push_back(j);
    }
    Shape c2 = cshape;
    c2.insert(c2.end(), cshape.begin(), cshape.end());
    std::vector<std::size_t> c2perm = cperm;
    for (std::size_t j : cperm) c2perm.push_back(j + cshape.size());
    const Tensor c4 = permute(obj_.c.reshaped(c2), c2perm);  // (nk, rest, nk, rest)

    Tensor normal(Shape{nk * rk, nk * rk});
    for (std::size_t b = 0; b < nk; ++b)
      for (std::size_t rho = 0; rho < rk; ++rho)
        for (std::size_t c = 0; c < nk; ++c)
          for (std::size_t sig = 0; sig < rk; ++sig) {
            double s = 0.0;
            for (std::size_t bp = 0; bp < rest; ++bp) {
              const double* drow = dmat.ptr() + (rho * rest + bp) * (rk * rest) + sig * rest;
              const double* crow = c4.ptr() + ((b * rest + bp) * nk + c) * rest;
              for (std::size_t gp = 0; gp < rest; ++gp) s += drow[gp] * crow[gp];
            }
            normal.at(b * rk + rho, c * rk + sig) = s;
          }

    Shape wshape{m_};
    wshape.insert(wshape.end(), cshape.begin(), cshape.end());
    std::vector<std::size_t> wperm{0};
    for (std::size_t j : cperm) wperm.push_back(j + 1);
    const Tensor wc3 = permute(wc_.reshaped(wshape), wperm);  // (m, nk, rest)
    Tensor rhs(Shape{nk * rk, 1});
    for (std::size_t b = 0; b < nk; ++b)
      for (std::size_t rho = 0; rho < rk; ++rho) {
        double s = 0.0;
        for (std::size_t i = 0; i < m_; ++i)
          for (std::size_t bp = 0; bp < rest; ++bp)
            s += wc3[(i * nk + b) * rest + bp] * p3[(rho * m_ + i) * rest + bp];
        rhs[b * rk + rho] = s;
      }
    return solve(normal, rhs).reshaped({nk, rk});
  }

  Tensor core() {
    const auto& f = layer_.factors;
    const Tensor kr = kron(std::span(f).first(p_));
    const Tensor kc = kron(std::span(f).subspan(p_));
    const Tensor krpinv = solve(matmul_tn(kr, kr), transpose(kr));
    const Tensor a = matmul(matmul(krpinv, wc_), kc);
    const Tensor s = matmul_tn(kc, matmul(obj_.c, kc));
    return transpose(solve(s, transpose(a)));
  }

  CompressedLayer& layer_;
  const Tensor& x_;
  const Objective& obj_;
  HealRecord& rec_;
  Shape n_;
  std::size_t p_ = 0, m_ = 1, cols_ = 0;
  Tensor y_, wc_;
};

// Gradient of J / ref with respect to every core of a ring (TT has unit
// closing bond).
Tensor core_gradient(const std::vector<Tensor>& cores, std::size_t k, const Tensor& gfull,
                     const Shape& n) {
  const std::size_t d = cores.size();
  const std::size_t rk = cores[k].dim(0), rk1 = cores[k].dim(2);
  std::vector<std::size_t> order;
  for (std::size_t s = 1; s < d; ++s) order.push_back((k + s) % d);

  std::vector<std::size_t> gperm{k};
  gperm.insert(gperm.end(), order.begin(), order.end());
  const std::size_t rest = shape_product(n) / n[k];
  const Tensor gp = permute(gfull.reshaped(n), gperm).reshaped({n[k], rest});

  Tensor env_p;
  if (d == 1) {
    env_p = Tensor::identity(rk).reshaped({1, rk * rk});
  } else {
    Tensor acc = cores[order[0]];
    for (std::size_t s = 1; s < order.size(); ++s) {
      const Tensor& g = cores[order[s]];
      const std::size_t ma[] = {2}, mb[] = {0};
      Tensor next = contract(acc, ma, g, mb);
      acc = std::move(next).reshaped({acc.dim(0), acc.dim(1) * g.dim(1), g.dim(2)});
    }
    const std::size_t perm[] = {1, 2, 0};  // (rest, r_k, r_{k+1})
    env_p = permute(acc, perm).reshaped({rest, rk * rk1});
  }
  const std::size_t back[] = {1, 0, 2};
  return permute(matmul(gp, env_p).reshaped({n[k], rk, rk1}), back);
}

void heal_chain(CompressedLayer& layer, const Objective& obj, const HealOptions& o,
                HealRecord& rec) {
  const Shape n = layer.shape.active();
  std::vector<double> step(layer.factors.size(), o.initial_step);
  double j = rec.objective.back();
  for (std::size_t sweep = 0; sweep < o.sweeps; ++sweep) {
    const double start = j;
    for (std::size_t k = 0; k < layer.factors.size(); ++k) {
      Tensor e = obj.residual(layer);
      Tensor g = matmul(e, obj.c);
      for (double& v : g.data()) v *= -2.0 / obj.ref;
      const Tensor grad = core_gradient(layer.factors, k, g, n);
      const Tensor saved = layer.factors[k];
      bool accepted = false;
      for (std::size_t h = 0; h <= o.max_halvings; ++h) {
        Tensor trial = saved;
        for (std::size_t i = 0; i < trial.size(); ++i) trial[i] -= step[k] * grad[i];
        layer.factors[k] = std::move(trial);
        const double jn = obj(layer);
        if (jn <= j) {
          j = jn;
          accepted = true;
          break;
        }
        step[k] *= 0.5;
      }
      if (accepted) {
        ++rec.accepted;
        step[k] *= 2.0;
      } else {
        layer.factors[k] = saved;
        ++rec.rejected;
        step[k] = o.initial_step;
      }
    }
    rec.objective.push_back(j);
    if (start - j <= 1e-14 * start) break;
  }
}

}  // namespace

double healing_objective(const CompressedLayer& layer, const Tensor& w, const Tensor& x) {
  if (x.rank() != 2 || x.rows() != w.cols()) throw ShapeError("calibration inputs do not match W");
  return Objective(w, x)(layer);
}

HealRecord heal_layer(CompressedLayer& layer, const Tensor& w, const Tensor& x,
                      const HealOptions& options) {
  if (x.rank() != 2 || x.rows() != w.cols()) throw ShapeError("calibration inputs do not match W");
  if (options.initial_step <= 0.0) throw InvalidArgument("initial step must be positive");
  const Objective obj(w, x);
  HealRecord rec;
  rec.family = layer.family;
  rec.objective.push_back(obj(layer));
  if (layer.family == Family::Dense || rec.objective.back() <= 1e-16 * obj.ref) return rec;

  if (layer.family == Family::Tucker) {
    TuckerHealer healer(layer, w, x, obj, rec);
    double j = rec.objective.back();
    for (std::size_t sweep = 0; sweep < options.sweeps; ++sweep) {
      const double start = j;
      j = healer.sweep(j);
      rec.objective.push_back(j);
      if (start - j <= 1e-14 * start) break;
    }
  } else {
    heal_chain(layer, obj, options, rec);
  }
  return rec;
}

}  // namespace minima
