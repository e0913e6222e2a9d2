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

#include "minima/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "minima/decompositions.hpp"
#include "minima/errors.hpp"
#include "minima/linalg.hpp"
#include "minima/rng.hpp"
#include "minima/tensor_ops.hpp"

namespace minima {

namespace {

Tensor gaussian(std::size_t m, std::size_t n, Rng& rng) {
  std::vector<double> v(m * n);
  for (double& x : v) x = rng.normal();
  return Tensor(Shape{m, n}, std::move(v));
}

// Rescales to entry RMS 1/sqrt(cols) and adds iid noise of relative level eta.
void finish(Tensor& w, double eta, Rng& rng) {
  const double target = std::sqrt(static_cast<double>(w.rows()));
  const double norm = frobenius_norm(w);
  const double noise_sd = eta * target / std::sqrt(static_cast<double>(w.size()));
  for (double& x : w.data()) x = x * target / norm + noise_sd * rng.normal();
}

Tensor tucker_block(std::size_t rows, std::size_t cols, std::size_t rank, Rng& rng) {
  const ModeShape shape = choose_mode_shape(rows, cols);
  const Shape n = shape.active();
  Shape core_shape;
  for (std::size_t k : n) core_shape.push_back(std::min(k, rank));
  Tensor t = gaussian(shape_product(core_shape), 1, rng).reshaped(core_shape);
  for (std::size_t k = 0; k < n.size(); ++k) t = mode_product(t, gaussian(n[k], core_shape[k], rng), k);
  return t.reshaped({rows, cols});
}

Tensor attention_matrix(std::size_t hidden, std::size_t block, std::size_t rank, Rng& rng) {
  Tensor w(Shape{hidden, hidden});
  for (std::size_t r = 0; r < hidden; r += block) {
    for (std::size_t c = 0; c < hidden; c += block) {
      const std::size_t br = std::min(block, hidden - r), bc = std::min(block, hidden - c);
      Tensor t = tucker_block(br, bc, rank, rng);
      finish(t, 0.0, rng);
      write_block(w, Patch{0, "", 0, SubmoduleKind::Other, {r, r + br}, {c, c + bc}}, t);
    }
  }
  return w;
}

Tensor decaying_matrix(std::size_t m, std::size_t n, double tau, Rng& rng) {
  const std::size_t k = std::min(m, n);
  const Tensor u = svd(gaussian(m, k, rng)).left;
  const Tensor v = svd(gaussian(n, k, rng)).left;
  Tensor us = u;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) us.at(i, j) *= std::exp(-static_cast<double>(j) / tau);
  }
  return matmul(us, transpose(v));
}

void round_to(Tensor& w, DType dtype) {
  if (dtype != DType::F32) return;
  for (double& x : w.data()) x = static_cast<float>(x);
}

}  // namespace

ModelContainer synthesize_model(const SynthOptions& o) {
  if (o.layers == 0 || o.hidden == 0 || o.ffn == 0 || o.vocab == 0 || o.block == 0) {
    throw InvalidArgument("synthetic model dimensions must be positive");
  }
  if (o.min_tucker_rank == 0 || o.max_tucker_rank < o.min_tucker_rank) {
    throw InvalidArgument("invalid Tucker rank range");
  }
  if (!(o.min_decay > 0.0) || o.max_decay < o.min_decay) throw InvalidArgument("invalid decay range");
  if (o.noise < 0.0) throw InvalidArgument("noise must be non-negative");
  for (std::size_t f : o.fragile_layers) {
    if (f >= o.layers) throw InvalidArgument("fragile layer index out of range");
  }

  ModelContainer model(o.layers, "synthetic seed=" + std::to_string(o.seed));
  auto add = [&](std::string name, Tensor w, std::size_t layer, SubmoduleKind kind) {
    round_to(w, o.dtype);
    model.add({std::move(name), std::move(w), layer, kind, o.dtype});
  };

  Rng rng(o.seed, 0);
  Tensor embed = gaussian(o.vocab, o.hidden, rng);
  finish(embed, 0.0, rng);
  add("embed.tokens", std::move(embed), 0, SubmoduleKind::Embedding);
  const std::size_t rank_span = o.max_tucker_rank - o.min_tucker_rank + 1;
  for (std::size_t layer = 0; layer < o.layers; ++layer) {
    const std::string prefix = "layers." + std::to_string(layer) + ".";
    const bool fragile = std::find(o.fragile_layers.begin(), o.fragile_layers.end(), layer) !=
                         o.fragile_layers.end();
    const double t = o.layers > 1 ? static_cast<double>(layer) / (o.layers - 1) : 0.0;
    const double tau = o.min_decay + t * (o.max_decay - o.min_decay);
    const std::size_t rank = o.min_tucker_rank + layer % rank_span;
    for (const char* proj : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
      Tensor w = fragile ? gaussian(o.hidden, o.hidden, rng)
                         : attention_matrix(o.hidden, o.block, rank, rng);
      finish(w, fragile ? 0.0 : o.noise, rng);
      add(prefix + proj, std::move(w), layer, SubmoduleKind::AttentionProj);
    }
    Tensor up = fragile ? gaussian(o.ffn, o.hidden, rng) : decaying_matrix(o.ffn, o.hidden, tau, rng);
    finish(up, fragile ? 0.0 : o.noise, rng);
    add(prefix + "ffn.up", std::move(up), layer, SubmoduleKind::Ffn);
    Tensor down = fragile ? gaussian(o.hidden, o.ffn, rng) : decaying_matrix(o.hidden, o.ffn, tau, rng);
    finish(down, fragile ? 0.0 : o.noise, rng);
    add(prefix + "ffn.down", std::move(down), layer, SubmoduleKind::Ffn);
  }
  return model;
}

}  // namespace minima
