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

// Compiled with -mavx2 -mfma; only reached after a CPUID check.

#include <immintrin.h>

#include <algorithm>

#include "minima/kernels.hpp"

namespace minima::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd();
  __m256d s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
    s2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8), _mm256_loadu_pd(y + i + 8), s2);
    s3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12), _mm256_loadu_pd(y + i + 12), s3);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double s = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void rotate_avx2(double* x, double* y, std::size_t n, double c, double s) {
  const __m256d vc = _mm256_set1_pd(c);
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xi = _mm256_loadu_pd(x + i);
    const __m256d yi = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(x + i, _mm256_fmsub_pd(vc, xi, _mm256_mul_pd(vs, yi)));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vs, xi, _mm256_mul_pd(vc, yi)));
  }
  for (; i < n; ++i) {
    const double xi = x[i];
    const double yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

// Two rows of C at a time, 8 columns per register block.
void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
               const double* b, double* c) {
  std::fill(c, c + m * n, 0.0);
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d r00 = _mm256_setzero_pd(), r01 = _mm256_setzero_pd();
      __m256d r10 = _mm256_setzero_pd(), r11 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * n + j;
        const __m256d b0 = _mm256_loadu_pd(bp);
        const __m256d b1 = _mm256_loadu_pd(bp + 4);
        const __m256d x0 = _mm256_set1_pd(a0[p]);
        const __m256d x1 = _mm256_set1_pd(a1[p]);
        r00 = _mm256_fmadd_pd(x0, b0, r00);
        r01 = _mm256_fmadd_pd(x0, b1, r01);
        r10 = _mm256_fmadd_pd(x1, b0, r10);
        r11 = _mm256_fmadd_pd(x1, b1, r11);
      }
      _mm256_storeu_pd(c0 + j, r00);
      _mm256_storeu_pd(c0 + j + 4, r01);
      _mm256_storeu_pd(c1 + j, r10);
      _mm256_storeu_pd(c1 + j + 4, r11);
    }
    for (; j < n; ++j) {
      double s0 = 0.0, s1 = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s0 += a0[p] * b[p * n + j];
        s1 += a1[p] * b[p * n + j];
      }
      c0[j] = s0;
      c1[j] = s1;
    }
  }
  for (; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) axpy_avx2(a[i * k + p], b + p * n, ci, n);
  }
}

constexpr KernelTable kAvx2{"avx2", dot_avx2, axpy_avx2, rotate_avx2, gemm_avx2};

}  // namespace

const KernelTable* avx2_table_impl() { return &kAvx2; }

}  // namespace minima::kernels
