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
#include <cstdint>
#include <vector>

#include "minima/model.hpp"

namespace minima {

// Layered synthetic model with per-layer structure:
//   attention q/k/v/o  hidden x hidden, built from block x block tiles of
//                      low multilinear rank (in the block's mode shape) plus noise
//   ffn up / down      ffn x hidden and hidden x ffn, U diag(exp(-i / tau)) V^T
//                      plus noise, tau interpolated across layers
//   fragile layers     every matrix iid Gaussian (no structure to exploit)
//   embedding          vocab x hidden iid Gaussian, layer 0
struct SynthOptions {
  std::size_t layers = 12;
  std::size_t hidden = 128;
  std::size_t ffn = 256;
  std::size_t vocab = 256;
  std::size_t block = 64;
  std::vector<std::size_t> fragile_layers{0, 11};
  std::size_t min_tucker_rank = 4;
  std::size_t max_tucker_rank = 5;
  double min_decay = 2.5;
  double max_decay = 3.5;
  double noise = 0.01;  // relative Frobenius level of the additive noise
  DType dtype = DType::F32;
  std::uint64_t seed = 42;
};

ModelContainer synthesize_model(const SynthOptions& options);

}  // namespace minima
