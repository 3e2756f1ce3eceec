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

#include <cstdlib>
#include <stdexcept>
#include <string>

#include "sslasr/kernels.hpp"

namespace sslasr::kernels {
namespace {

Impl detect() {
  if (const char* env = std::getenv("SSLASR_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return Impl::scalar;
#if defined(__x86_64__) || defined(_M_X64)
    if (want == "avx2") {
      if (!detail::avx2_supported()) {
        throw std::runtime_error("SSLASR_KERNELS=avx2 but CPU lacks AVX2/FMA");
      }
      return Impl::avx2;
    }
#endif
#if defined(__aarch64__)
    if (want == "neon") return Impl::neon;
#endif
    throw std::runtime_error("SSLASR_KERNELS=" + want + " not available on this build");
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (detail::avx2_supported()) return Impl::avx2;
#endif
#if defined(__aarch64__)
  return Impl::neon;
#endif
  return Impl::scalar;
}

Impl g_active = detect();

}  // namespace

const KernelTable& table(Impl impl) {
  switch (impl) {
    case Impl::scalar:
      return detail::kScalar;
#if defined(__x86_64__) || defined(_M_X64)
    case Impl::avx2:
      return detail::kAvx2;
#endif
#if defined(__aarch64__)
    case Impl::neon:
      return detail::kNeon;
#endif
    default:
      throw std::runtime_error("kernel impl not compiled into this build");
  }
}

Impl active() { return g_active; }

void force(Impl impl) {
  table(impl);  // throws if unavailable
  g_active = impl;
}

std::string impl_name(Impl impl) {
  switch (impl) {
    case Impl::scalar:
      return "scalar";
    case Impl::avx2:
      return "avx2";
    case Impl::neon:
      return "neon";
  }
  return "unknown";
}

}  // namespace sslasr::kernels
