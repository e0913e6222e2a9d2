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

#include <cstdlib>
#include <string>

#include "minima/kernels.hpp"

namespace minima::kernels {

#if defined(MINIMA_HAVE_AVX2)
const KernelTable* avx2_table_impl();
#endif

const KernelTable* avx2_table() {
#if defined(MINIMA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return avx2_table_impl();
  }
#endif
  return nullptr;
}

namespace {

const KernelTable& select() {
  const char* env = std::getenv("MINIMA_SIMD");
  const std::string want = env ? env : "";
  if (want == "scalar") return scalar_table();
  if (const KernelTable* t = avx2_table()) return *t;
  return scalar_table();
}

thread_local std::uint64_t tls_madds = 0;

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

std::string_view active_name() { return active().name; }

double dot(const double* x, const double* y, std::size_t n) {
  return active().dot(x, y, n);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  active().axpy(a, x, y, n);
}

void rotate(double* x, double* y, std::size_t n, double c, double s) {
  active().rotate(x, y, n, c, s);
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c) {
  tls_madds += static_cast<std::uint64_t>(m) * n * k;
  active().gemm(m, n, k, a, b, c);
}

MultiplyAddCounter::MultiplyAddCounter() : start_(tls_madds) {}
MultiplyAddCounter::~MultiplyAddCounter() = default;
std::uint64_t MultiplyAddCounter::count() const { return tls_madds - start_; }

}  // namespace minima::kernels
