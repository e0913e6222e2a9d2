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

namespace minima {

// Counter-based generator: draw i of stream (seed, stream) is
//   mix64(key + (i + 1) * 0x9E3779B97F4A7C15), key = mix64(seed ^ mix64(stream))
// where mix64 is the SplitMix64 finalizer. Any draw can be recomputed from
// (seed, stream, i) alone, so streams reproduce across implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static std::uint64_t mix64(std::uint64_t z);

  std::uint64_t next_u64();
  // 53-bit uniform in [0, 1).
  double uniform();
  // Standard normal via Box-Muller on two consecutive uniforms.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace minima
