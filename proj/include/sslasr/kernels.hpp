// Copyright 2026 The sslasr Authors.
//
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

#ifndef SSLASR_KERNELS_HPP_
#define SSLASR_KERNELS_HPP_

#include <cstddef>
#include <string>

namespace sslasr::kernels {

// Float64 inner-loop kernels. Scalar reference implementations always exist;
// AVX2 (x86-64) and NEON (aarch64) variants are selected at process start
// from CPU features. SSLASR_KERNELS=scalar|avx2|neon forces a variant.
//
// matmul_accum and the elementwise kernels are bitwise-identical across
// variants (same per-element operation order, single-rounding FMA on both
// sides). dot/sum/sumsq/max reassociate across SIMD lanes and agree with the
// scalar reference only to rounding.
enum class Impl { scalar, avx2, neon };

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*add)(const double*, const double*, double*, std::size_t);
  void (*sub)(const double*, const double*, double*, std::size_t);
  void (*mul)(const double*, const double*, double*, std::size_t);
  void (*scale)(const double*, double, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*max)(const double*, std::size_t);
  double (*sumsq)(const double*, std::size_t);
  // C[M,N] += A[M,K] * B[K,N], all row-major.
  void (*matmul_accum)(const double*, const double*, double*, std::size_t,
                       std::size_t, std::size_t);
};

const KernelTable& table(Impl impl);

Impl active();
void force(Impl impl);  // test hook
std::string impl_name(Impl impl);

inline double dot(const double* a, const double* b, std::size_t n) {
  return table(active()).dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  table(active()).axpy(alpha, x, y, n);
}
inline void add(const double* a, const double* b, double* out, std::size_t n) {
  table(active()).add(a, b, out, n);
}
inline void sub(const double* a, const double* b, double* out, std::size_t n) {
  table(active()).sub(a, b, out, n);
}
inline void mul(const double* a, const double* b, double* out, std::size_t n) {
  table(active()).mul(a, b, out, n);
}
inline void scale(const double* a, double s, double* out, std::size_t n) {
  table(active()).scale(a, s, out, n);
}
inline double sum(const double* a, std::size_t n) {
  return table(active()).sum(a, n);
}
inline double max(const double* a, std::size_t n) {
  return table(active()).max(a, n);
}
inline double sumsq(const double* a, std::size_t n) {
  return table(active()).sumsq(a, n);
}
inline void matmul_accum(const double* a, const double* b, double* c,
                         std::size_t m, std::size_t k, std::size_t n) {
  table(active()).matmul_accum(a, b, c, m, k, n);
}

namespace detail {
extern const KernelTable kScalar;
#if defined(__x86_64__) || defined(_M_X64)
extern const KernelTable kAvx2;
bool avx2_supported();
#endif
#if defined(__aarch64__)
extern const KernelTable kNeon;
#endif
}  // namespace detail

}  // namespace sslasr::kernels

#endif  // SSLASR_KERNELS_HPP_
