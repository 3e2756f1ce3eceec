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

#ifndef SSLASR_TENSOR_HPP_
#define SSLASR_TENSOR_HPP_

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sslasr {

// Dense row-major float64 tensor, value semantics. Gradient bookkeeping lives
// on tape nodes (autodiff.hpp), not here.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> dims) : dims_(std::move(dims)) {
    data_.assign(static_cast<std::size_t>(numel_of(dims_)), 0.0);
  }
  Tensor(std::vector<int64_t> dims, std::vector<double> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != numel_of(dims_)) {
      throw std::invalid_argument("tensor data length does not match shape");
    }
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor zeros(std::vector<int64_t> dims) { return Tensor(std::move(dims)); }
  static Tensor full(std::vector<int64_t> dims, double v) {
    Tensor t(std::move(dims));
    for (auto& x : t.data_) x = v;
    return t;
  }

  const std::vector<int64_t>& dims() const { return dims_; }
  int64_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t rank() const { return dims_.size(); }
  // Actual element count; 0 for a default-constructed (unset) tensor, which a
  // rank-0 scalar (numel 1) is not.
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(int64_t i, int64_t j) { return data_[static_cast<std::size_t>(i * dims_[1] + j)]; }
  double at(int64_t i, int64_t j) const { return data_[static_cast<std::size_t>(i * dims_[1] + j)]; }
  double& at(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k)];
  }
  double at(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k)];
  }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) os << ',';
      os << dims_[i];
    }
    os << ']';
    return os.str();
  }

  static int64_t numel_of(const std::vector<int64_t>& dims) {
    int64_t n = 1;
    for (int64_t d : dims) {
      if (d < 0) throw std::invalid_argument("negative tensor extent");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int64_t> dims_;
  std::vector<double> data_;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace sslasr

#endif  // SSLASR_TENSOR_HPP_
