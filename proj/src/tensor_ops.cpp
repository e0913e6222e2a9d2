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

#include "minima/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "minima/errors.hpp"
#include "minima/kernels.hpp"

namespace minima {

Tensor reshape_to_modes(const Tensor& matrix, std::span<const std::size_t> mode_shape) {
  if (matrix.rank() != 2) throw ShapeError("reshape_to_modes expects a matrix");
  if (mode_shape.size() < 2 || mode_shape.size() > 6) {
    throw ShapeError("mode shape must have 2..6 modes, got " +
                     std::to_string(mode_shape.size()));
  }
  if (shape_product(mode_shape) != matrix.size()) {
    throw ShapeError("mode shape " + shape_to_string(mode_shape) +
                     " does not match matrix " + shape_to_string(matrix.shape()));
  }
  return matrix.reshaped(Shape(mode_shape.begin(), mode_shape.end()));
}

Tensor unfold(const Tensor& t, std::size_t mode) {
  if (mode >= t.rank()) {
    throw IndexError("unfold mode " + std::to_string(mode) + " out of range for rank " +
                     std::to_string(t.rank()));
  }
  const std::size_t n = t.dim(mode);
  const std::size_t pre = shape_product(std::span(t.shape()).first(mode));
  const std::size_t post = shape_product(std::span(t.shape()).subspan(mode + 1));
  Tensor out(Shape{n, pre * post});
  const double* src = t.ptr();
  double* dst = out.ptr();
  for (std::size_t p = 0; p < pre; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(src + (p * n + i) * post, post, dst + i * pre * post + p * post);
    }
  }
  return out;
}

Tensor fold(const Tensor& m, std::size_t mode, std::span<const std::size_t> shape) {
  if (mode >= shape.size()) throw IndexError("fold mode out of range");
  const std::size_t n = shape[mode];
  const std::size_t pre = shape_product(shape.first(mode));
  const std::size_t post = shape_product(shape.subspan(mode + 1));
  if (m.rank() != 2 || m.rows() != n || m.cols() != pre * post) {
    throw ShapeError("fold: matrix " + shape_to_string(m.shape()) +
                     " incompatible with shape " + shape_to_string(shape));
  }
  Tensor out(Shape(shape.begin(), shape.end()));
  const double* src = m.ptr();
  double* dst = out.ptr();
  for (std::size_t p = 0; p < pre; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(src + i * pre * post + p * post, post, dst + (p * n + i) * post);
    }
  }
  return out;
}

Tensor permute(const Tensor& t, std::span<const std::size_t> perm) {
  const std::size_t d = t.rank();
  if (perm.size() != d) throw ShapeError("permutation length mismatch");
  std::vector<bool> seen(d, false);
  for (std::size_t p : perm) {
    if (p >= d || seen[p]) throw IndexError("invalid permutation");
    seen[p] = true;
  }
  bool identity = true;
  for (std::size_t i = 0; i < d; ++i) identity = identity && perm[i] == i;
  if (identity) return t;

  Shape out_shape(d);
  for (std::size_t i = 0; i < d; ++i) out_shape[i] = t.dim(perm[i]);
  std::vector<std::size_t> in_stride(d, 1);
  for (std::size_t k = d; k-- > 1;) in_stride[k - 1] = in_stride[k] * t.dim(k);
  std::vector<std::size_t> stride(d);
  for (std::size_t i = 0; i < d; ++i) stride[i] = in_stride[perm[i]];

  Tensor out(out_shape);
  std::vector<std::size_t> idx(d, 0);
  const double* src = t.ptr();
  double* dst = out.ptr();
  const std::size_t total = out.size();
  const std::size_t last = d - 1;
  const std::size_t inner = out_shape[last];
  const std::size_t inner_stride = stride[last];
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < total; flat += inner) {
    for (std::size_t j = 0; j < inner; ++j) dst[flat + j] = src[offset + j * inner_stride];
    // advance the outer multi-index (all but the last mode)
    for (std::size_t k = last; k-- > 0;) {
      ++idx[k];
      offset += stride[k];
      if (idx[k] < out_shape[k]) break;
      offset -= stride[k] * out_shape[k];
      idx[k] = 0;
    }
  }
  return out;
}

Tensor contract(const Tensor& a, std::span<const std::size_t> a_modes,
                const Tensor& b, std::span<const std::size_t> b_modes) {
  if (a_modes.size() != b_modes.size()) {
    throw ShapeError("contract: mode lists differ in length");
  }
  auto free_modes = [](const Tensor& t, std::span<const std::size_t> paired) {
    std::vector<bool> used(t.rank(), false);
    for (std::size_t m : paired) {
      if (m >= t.rank() || used[m]) throw IndexError("contract: invalid mode list");
      used[m] = true;
    }
    std::vector<std::size_t> free;
    for (std::size_t k = 0; k < t.rank(); ++k) {
      if (!used[k]) free.push_back(k);
    }
    return free;
  };
  const auto fa = free_modes(a, a_modes);
  const auto fb = free_modes(b, b_modes);
  std::size_t inner = 1;
  for (std::size_t i = 0; i < a_modes.size(); ++i) {
    if (a.dim(a_modes[i]) != b.dim(b_modes[i])) {
      throw ShapeError("contract: paired modes have sizes " +
                       std::to_string(a.dim(a_modes[i])) + " and " +
                       std::to_string(b.dim(b_modes[i])));
    }
    inner *= a.dim(a_modes[i]);
  }

  std::vector<std::size_t> pa(fa);
  pa.insert(pa.end(), a_modes.begin(), a_modes.end());
  std::vector<std::size_t> pb(b_modes.begin(), b_modes.end());
  pb.insert(pb.end(), fb.begin(), fb.end());
  const Tensor ap = permute(a, pa);
  const Tensor bp = permute(b, pb);

  Shape out_shape;
  std::size_t m = 1, n = 1;
  for (std::size_t k : fa) {
    out_shape.push_back(a.dim(k));
    m *= a.dim(k);
  }
  for (std::size_t k : fb) {
    out_shape.push_back(b.dim(k));
    n *= b.dim(k);
  }
  Tensor out(out_shape);
  kernels::gemm(m, n, inner, ap.ptr(), bp.ptr(), out.ptr());
  return out;
}

Tensor mode_product(const Tensor& t, const Tensor& m, std::size_t mode) {
  if (m.rank() != 2) throw ShapeError("mode_product expects a matrix");
  if (mode >= t.rank()) throw IndexError("mode_product mode out of range");
  if (m.cols() != t.dim(mode)) throw ShapeError("mode_product size mismatch");
  Shape out_shape = t.shape();
  out_shape[mode] = m.rows();
  return fold(matmul(m, unfold(t, mode)), mode, out_shape);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor out(Shape{a.rows(), b.cols()});
  kernels::gemm(a.rows(), b.cols(), a.cols(), a.ptr(), b.ptr(), out.ptr());
  return out;
}

Tensor transpose(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("transpose expects a matrix");
  const std::size_t perm[2] = {1, 0};
  return permute(m, perm);
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  return matmul(transpose(a), b);
}

double squared_norm(std::span<const double> v) {
  return kernels::dot(v.data(), v.data(), v.size());
}

double frobenius_norm(const Tensor& t) { return std::sqrt(squared_norm(t.data())); }

double relative_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("relative_error: shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  const double ref = frobenius_norm(a);
  if (ref == 0.0) throw DegenerateReferenceError("reference tensor has zero norm");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    diff += d * d;
  }
  return std::sqrt(diff) / ref;
}

}  // namespace minima
