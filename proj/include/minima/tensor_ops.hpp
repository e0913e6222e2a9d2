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
#include <span>
#include <vector>

#include "minima/tensor.hpp"

namespace minima {

// Layout-preserving view change of a matrix into 2..6 modes.
Tensor reshape_to_modes(const Tensor& matrix, std::span<const std::size_t> mode_shape);

// Mode-k matricization. Rows index mode k; columns enumerate the remaining
// modes in increasing order, last one fastest.
Tensor unfold(const Tensor& t, std::size_t mode);
// Inverse of unfold() for a tensor of the given shape.
Tensor fold(const Tensor& m, std::size_t mode, std::span<const std::size_t> shape);

// Output mode i is input mode perm[i].
Tensor permute(const Tensor& t, std::span<const std::size_t> perm);

// Sums over the paired modes. Result modes: free modes of a in order, then
// free modes of b in order.
Tensor contract(const Tensor& a, std::span<const std::size_t> a_modes,
                const Tensor& b, std::span<const std::size_t> b_modes);

// t x_k m: replaces mode k (size m.cols()) by m.rows().
Tensor mode_product(const Tensor& t, const Tensor& m, std::size_t mode);

Tensor matmul(const Tensor& a, const Tensor& b);
// a^T b without materializing the transpose of a.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);

double frobenius_norm(const Tensor& t);
double squared_norm(std::span<const double> v);

// ||a - b||_F / ||a||_F.
double relative_error(const Tensor& a, const Tensor& b);

}  // namespace minima
