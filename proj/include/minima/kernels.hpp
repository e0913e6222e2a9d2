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

// Data-parallel inner loops used by the SVD, contraction and healing code.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is chosen once per process from CPUID and
// can be forced with MINIMA_SIMD=scalar|avx2. Results of the two variants
// agree to rounding (summation order and FMA differ), not bit-for-bit; a
// given variant is bit-deterministic.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace minima::kernels {

struct KernelTable {
  const char* name;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // (x, y) <- (c*x - s*y, s*x + c*y)
  void (*rotate)(double* x, double* y, std::size_t n, double c, double s);
  // C(MxN) = A(MxK) * B(KxN), all row-major and densely packed.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               const double* b, double* c);
};

const KernelTable& scalar_table();
// Null when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

// The table selected for this process.
const KernelTable& active();
std::string_view active_name();

// Thin wrappers over active(). gemm() also feeds the multiply-add counter.
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void rotate(double* x, double* y, std::size_t n, double c, double s);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c);

// Counts multiply-adds issued through gemm() on the current thread while
// alive. Nested counters each see the work done in their own scope.
class MultiplyAddCounter {
 public:
  MultiplyAddCounter();
  ~MultiplyAddCounter();
  MultiplyAddCounter(const MultiplyAddCounter&) = delete;
  MultiplyAddCounter& operator=(const MultiplyAddCounter&) = delete;

  std::uint64_t count() const;

 private:
  std::uint64_t start_;
};

}  // namespace minima::kernels
