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

#ifndef SSLASR_RNG_HPP_
#define SSLASR_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace sslasr {

// Counter-based generator with explicit seed threading: every stream is
// (seed, name)-addressed via fork(), so there is no global RNG state and no
// draw-order coupling between components. Output function is splitmix64 over
// a 64-bit counter; distributions are implemented here (not <random>) so
// streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  Rng fork(std::string_view name) const {
    uint64_t h = key_;
    for (char c : name) h = mix(h ^ static_cast<uint64_t>(static_cast<unsigned char>(c)));
    return Rng(from_key{}, mix(h ^ 0xbf58476d1ce4e5b9ull));
  }
  Rng fork(uint64_t index) const { return Rng(from_key{}, mix(key_ ^ mix(index + 1))); }
  Rng fork(std::string_view name, uint64_t index) const { return fork(name).fork(index); }

  uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

  // [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased via rejection.
  uint64_t uniform_u64(uint64_t n) {
    if (n == 0) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  int64_t uniform_int(int64_t lo, int64_t hi_inclusive) {
    return lo + static_cast<int64_t>(uniform_u64(static_cast<uint64_t>(hi_inclusive - lo + 1)));
  }

  // Box-Muller, one value per call (spare discarded to keep streams simple).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  struct from_key {};
  Rng(from_key, uint64_t key) : key_(key) {}

  static uint64_t mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace sslasr

#endif  // SSLASR_RNG_HPP_
