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

#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sslasr/kernels.hpp"
#include "sslasr/rng.hpp"

using sslasr::Rng;
namespace kernels = sslasr::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal() * scale;
  return v;
}

std::vector<kernels::Impl> available_impls() {
  std::vector<kernels::Impl> impls = {kernels::Impl::scalar};
#if defined(__x86_64__) || defined(_M_X64)
  if (kernels::detail::avx2_supported()) impls.push_back(kernels::Impl::avx2);
#endif
#if defined(__aarch64__)
  impls.push_back(kernels::Impl::neon);
#endif
  return impls;
}

}  // namespace

TEST_CASE("simd variants match scalar reference bitwise on elementwise ops") {
  Rng rng(7);
  const auto& ref = kernels::table(kernels::Impl::scalar);
  for (auto impl : available_impls()) {
    const auto& tab = kernels::table(impl);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 64u, 1000u, 1037u}) {
      auto a = random_vec(rng, n), b = random_vec(rng, n);
      std::vector<double> out_ref(n), out_tst(n);
      ref.add(a.data(), b.data(), out_ref.data(), n);
      tab.add(a.data(), b.data(), out_tst.data(), n);
      CHECK(out_ref == out_tst);
      ref.sub(a.data(), b.data(), out_ref.data(), n);
      tab.sub(a.data(), b.data(), out_tst.data(), n);
      CHECK(out_ref == out_tst);
      ref.mul(a.data(), b.data(), out_ref.data(), n);
      tab.mul(a.data(), b.data(), out_tst.data(), n);
      CHECK(out_ref == out_tst);
      ref.scale(a.data(), 1.7, out_ref.data(), n);
      tab.scale(a.data(), 1.7, out_tst.data(), n);
      CHECK(out_ref == out_tst);
      auto y_ref = b, y_tst = b;
      ref.axpy(-0.37, a.data(), y_ref.data(), n);
      tab.axpy(-0.37, a.data(), y_tst.data(), n);
      CHECK(y_ref == y_tst);
    }
  }
}

TEST_CASE("simd matmul_accum is bitwise identical to the scalar reference") {
  Rng rng(11);
  const auto& ref = kernels::table(kernels::Impl::scalar);
  for (auto impl : available_impls()) {
    const auto& tab = kernels::table(impl);
    for (auto [m, k, n] : std::vector<std::array<std::size_t, 3>>{
             {1, 1, 1}, {2, 3, 5}, {7, 11, 13}, {16, 16, 16}, {5, 9, 31}}) {
      auto a = random_vec(rng, m * k), b = random_vec(rng, k * n);
      auto c0 = random_vec(rng, m * n);
      auto c_ref = c0, c_tst = c0;
      ref.matmul_accum(a.data(), b.data(), c_ref.data(), m, k, n);
      tab.matmul_accum(a.data(), b.data(), c_tst.data(), m, k, n);
      CHECK(c_ref == c_tst);
    }
  }
}

TEST_CASE("simd reductions agree with scalar reference to rounding") {
  Rng rng(23);
  const auto& ref = kernels::table(kernels::Impl::scalar);
  for (auto impl : available_impls()) {
    const auto& tab = kernels::table(impl);
    for (std::size_t n : {1u, 2u, 5u, 128u, 999u}) {
      auto a = random_vec(rng, n), b = random_vec(rng, n);
      CHECK(tab.dot(a.data(), b.data(), n) ==
            doctest::Approx(ref.dot(a.data(), b.data(), n)).epsilon(1e-12));
      CHECK(tab.sum(a.data(), n) == doctest::Approx(ref.sum(a.data(), n)).epsilon(1e-12));
      CHECK(tab.sumsq(a.data(), n) == doctest::Approx(ref.sumsq(a.data(), n)).epsilon(1e-12));
      CHECK(tab.max(a.data(), n) == ref.max(a.data(), n));
    }
  }
}

TEST_CASE("force() switches the active implementation") {
  const auto prev = kernels::active();
  for (auto impl : available_impls()) {
    kernels::force(impl);
    CHECK(kernels::active() == impl);
  }
  kernels::force(prev);
}

TEST_CASE("rng streams are deterministic and fork-independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng base(42);
  Rng f1 = base.fork("masks");
  Rng f2 = base.fork("masks");
  Rng f3 = base.fork("segments");
  CHECK(f1.next_u64() == f2.next_u64());
  CHECK(f1.next_u64() != f3.next_u64());

  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    const int64_t k = u.uniform_int(3, 9);
    CHECK(k >= 3);
    CHECK(k <= 9);
  }
}
