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

#include "sslasr/gradcheck.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sslasr {

namespace {

double eval_scalar(const ScalarMap& f, const Tensor& point, int64_t coord) {
  ad::Tape tape;
  ad::Value x = tape.leaf(point, false);
  const double v = f(tape, x).item();
  if (!std::isfinite(v)) {
    throw std::runtime_error("grad_check: non-finite function value at coordinate " +
                             std::to_string(coord));
  }
  return v;
}

}  // namespace

GradCheckResult grad_check(const ScalarMap& f, const Tensor& point, double epsilon) {
  check(epsilon > 0.0, "grad_check: epsilon must be > 0");

  ad::Tape tape;
  ad::Value x = tape.leaf(point, true);
  ad::Value loss = f(tape, x);
  if (!std::isfinite(loss.item())) {
    throw std::runtime_error("grad_check: non-finite function value at evaluation point");
  }
  tape.backward(loss);
  Tensor analytic = tape.has_grad(x.idx()) ? x.grad() : Tensor::zeros(point.dims());

  GradCheckResult result;
  const int64_t n = point.numel();
  for (int64_t i = 0; i < n; ++i) {
    Tensor plus = point;
    Tensor minus = point;
    plus[i] += epsilon;
    minus[i] -= epsilon;
    const double numeric = (eval_scalar(f, plus, i) - eval_scalar(f, minus, i)) / (2.0 * epsilon);
    const double a = analytic[i];
    const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    if (rel >= result.max_rel_err) {
      result.max_rel_err = rel;
      result.worst_coord = i;
      result.analytic_at_worst = a;
      result.numeric_at_worst = numeric;
    }
  }
  return result;
}

}  // namespace sslasr
