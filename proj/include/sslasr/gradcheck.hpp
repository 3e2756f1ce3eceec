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

#ifndef SSLASR_GRADCHECK_HPP_
#define SSLASR_GRADCHECK_HPP_

#include <cstdint>
#include <functional>

#include "sslasr/autodiff.hpp"
#include "sslasr/tensor.hpp"

namespace sslasr {

// Builds a scalar loss from a leaf holding the evaluation point.
using ScalarMap = std::function<ad::Value(ad::Tape&, ad::Value)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t worst_coord = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Max over coordinates of |analytic - central_difference| / max(1, |analytic|).
// Throws std::runtime_error naming the coordinate if any function evaluation
// is non-finite.
GradCheckResult grad_check(const ScalarMap& f, const Tensor& point, double epsilon);

}  // namespace sslasr

#endif  // SSLASR_GRADCHECK_HPP_
