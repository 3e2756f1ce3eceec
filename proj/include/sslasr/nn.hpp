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

#ifndef SSLASR_NN_HPP_
#define SSLASR_NN_HPP_

#include <cstdint>
#include <vector>

#include "sslasr/autodiff.hpp"
#include "sslasr/rng.hpp"
#include "sslasr/tensor.hpp"

namespace sslasr::nn {

// Truncated normal (|z| <= 2 by resampling), the default projection init.
Tensor trunc_normal(Rng& rng, std::vector<int64_t> dims, double stddev);
// stddev = 1/sqrt(fan_in).
Tensor fan_in_init(Rng& rng, int64_t fan_in, std::vector<int64_t> dims);

ad::Value linear(ad::Value x, ad::Value w, ad::Value b);  // x[M,in] w[in,out] b[out]

struct LstmCellOut {
  ad::Value h;
  ad::Value c;
};
// Gate layout in w[I+H,4H]/b[4H] is [input, forget, cell, output].
LstmCellOut lstm_cell(ad::Value x, ad::Value h, ad::Value c, ad::Value w, ad::Value b);

struct AttentionWeights {
  ad::Value wq, bq, wk, bk, wv, bv, wo, bo;
  // One learned [2R+1] bias vector per head when relative attention is on.
  std::vector<ad::Value> rel_bias;
};

// Multi-head self-attention over x[T,D]. Keys at rows >= valid are masked
// out; causal additionally masks j > i. No positional signal is injected
// unless rel_bias is present.
ad::Value mhsa(ad::Value x, const AttentionWeights& w, int64_t n_heads, int64_t valid,
               bool causal);

}  // namespace sslasr::nn

#endif  // SSLASR_NN_HPP_
