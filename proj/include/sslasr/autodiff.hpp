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

#ifndef SSLASR_AUTODIFF_HPP_
#define SSLASR_AUTODIFF_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sslasr/params.hpp"
#include "sslasr/tensor.hpp"

namespace sslasr::ad {

class Tape;

// Handle to a tape node. Creation order is a topological order, so backward
// is a single reverse sweep.
class Value {
 public:
  Value() = default;
  bool defined() const { return tape_ != nullptr; }
  const Tensor& val() const;
  const Tensor& grad() const;
  Tape* tape() const { return tape_; }
  int idx() const { return idx_; }
  const std::vector<int64_t>& dims() const { return val().dims(); }
  double item() const;

 private:
  friend class Tape;
  Value(Tape* t, int i) : tape_(t), idx_(i) {}
  Tape* tape_ = nullptr;
  int idx_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Value constant(Tensor v) { return wrap(raw_node(std::move(v), {}, nullptr, false)); }
  Value leaf(Tensor v, bool requires_grad) {
    return wrap(raw_node(std::move(v), {}, nullptr, requires_grad));
  }
  // Leaf bound to a stored parameter; accumulate_param_grads() pushes the
  // leaf gradient back into the store after backward().
  Value param(ParamStore& store, const std::string& path);

  int raw_node(Tensor value, std::vector<int> parents, BackwardFn backward,
               bool force_requires_grad = false);
  Value wrap(int idx) { return Value(this, idx); }

  const Tensor& value(int idx) const { return nodes_[idx].value; }
  bool requires_grad(int idx) const { return nodes_[idx].requires_grad; }
  bool has_grad(int idx) const { return nodes_[idx].grad_live; }
  const Tensor& grad(int idx) const { return nodes_[idx].grad; }
  // Allocating accessor used by backward closures to push into a parent.
  Tensor* grad_buf(int idx);

  void backward(Value loss);
  void accumulate_param_grads();

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool grad_live = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<int, Parameter*>> bindings_;
};

inline const Tensor& Value::val() const { return tape_->value(idx_); }
inline const Tensor& Value::grad() const { return tape_->grad(idx_); }
inline double Value::item() const {
  const Tensor& t = val();
  check(t.numel() == 1, "item() on non-scalar value " + t.shape_str());
  return t[0];
}

// ---- elementwise / arithmetic ----
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value div(Value a, Value b);
Value neg(Value a);
Value scale(Value a, double s);
Value add_scalar(Value a, double s);
Value clamp_min(Value a, double floor);
Value sigmoid(Value a);
Value tanh_op(Value a);
Value swish(Value a);
Value exp_op(Value a);
Value log_op(Value a);
Value sqrt_op(Value a);
Value recip(Value a);

// ---- linear algebra / shape ----
Value matmul(Value a, Value b);                     // [M,K]x[K,N]
Value transpose(Value a);                           // [M,N]->[N,M]
Value add_rowvec(Value a, Value v);                 // a[M,N] + v[N] per row
Value mul_rowvec(Value a, Value v);                 // a[M,N] * v[N] per row
Value mul_colvec(Value a, Value v);                 // a[M,N] * v[M] per col
Value concat_cols(Value a, Value b);
Value slice_cols(Value a, int64_t c0, int64_t len);
Value concat_rows(const std::vector<Value>& parts);
Value slice_rows(Value a, int64_t r0, int64_t len);
Value reshape(Value a, std::vector<int64_t> dims);  // numel-preserving view copy

// ---- reductions ----
Value sum_all(Value a);
Value mean_all(Value a);
Value row_sum(Value a);  // [M,N]->[M]

// ---- nonlinear blocks ----
Value glu_cols(Value a);                            // [M,2N]->[M,N]
Value softmax_rows(Value a);
Value log_softmax_rows(Value a);
Value layer_norm_rows(Value a, Value gamma, Value beta, double eps);
// Per-column batch norm over rows [0, valid); rows >= valid are zeroed.
// batch_mean/batch_var (biased) are exported for running-stat updates.
Value batch_norm_cols(Value a, Value gamma, Value beta, double eps, int64_t valid,
                      std::vector<double>* batch_mean = nullptr,
                      std::vector<double>* batch_var = nullptr);

// ---- convolutions (time-major, anchored 'same' padding) ----
Value conv1d_depthwise(Value x, Value w, Value b, int64_t valid);  // x[T,C], w[K,C], b[C]
// x[T,F,Cin], w[kh,kw,Cin,Cout] -> [ceil(T/st), ceil(F/sf), Cout];
// input rows >= valid read as zero, output rows >= ceil(valid/st) are zeroed.
Value conv2d(Value x, Value w, Value b, int64_t stride_t, int64_t stride_f, int64_t valid);

// ---- indexing ----
Value embedding_rows(Value table, const std::vector<int64_t>& ids);
Value gather_rows(Value a, const std::vector<int64_t>& rows);
// out[i,j] = a[i, cols[i*k+j]]
Value gather_per_row(Value a, const std::vector<int64_t>& cols, int64_t k);
// Replace rows flagged in `mask` (size T, 0/1) with the shared row vector.
Value replace_rows(Value x, const std::vector<uint8_t>& mask, Value row);
Value zero_rows_from(Value x, int64_t row0);
// [T,C] -> [ceil(T/2), 2C]; odd T padded with a zero frame.
Value stack_time_pairs(Value x);
// B[i,j] = v[clamp(i-j+R, 0, 2R)] for a [2R+1] parameter vector.
Value rel_bias_matrix(Value v, int64_t t);

// ---- losses ----
Value nll_rows(Value logp, const std::vector<int64_t>& targets);  // mean NLL

}  // namespace sslasr::ad

#endif  // SSLASR_AUTODIFF_HPP_
