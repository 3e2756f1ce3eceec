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

#include "sslasr/nn.hpp"

#include <cmath>

namespace sslasr::nn {

Tensor trunc_normal(Rng& rng, std::vector<int64_t> dims, double stddev) {
  Tensor t(std::move(dims));
  for (int64_t i = 0; i < t.numel(); ++i) {
    double z = rng.normal();
    while (std::abs(z) > 2.0) z = rng.normal();
    t[i] = z * stddev;
  }
  return t;
}

Tensor fan_in_init(Rng& rng, int64_t fan_in, std::vector<int64_t> dims) {
  return trunc_normal(rng, std::move(dims), 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

ad::Value linear(ad::Value x, ad::Value w, ad::Value b) {
  return ad::add_rowvec(ad::matmul(x, w), b);
}

LstmCellOut lstm_cell(ad::Value x, ad::Value h, ad::Value c, ad::Value w, ad::Value b) {
  const int64_t hidden = h.dims()[1];
  ad::Value gates = linear(ad::concat_cols(x, h), w, b);
  ad::Value i_gate = ad::sigmoid(ad::slice_cols(gates, 0, hidden));
  ad::Value f_gate = ad::sigmoid(ad::slice_cols(gates, hidden, hidden));
  ad::Value g_cell = ad::tanh_op(ad::slice_cols(gates, 2 * hidden, hidden));
  ad::Value o_gate = ad::sigmoid(ad::slice_cols(gates, 3 * hidden, hidden));
  ad::Value c_new = ad::add(ad::mul(f_gate, c), ad::mul(i_gate, g_cell));
  ad::Value h_new = ad::mul(o_gate, ad::tanh_op(c_new));
  return {h_new, c_new};
}

ad::Value mhsa(ad::Value x, const AttentionWeights& w, int64_t n_heads, int64_t valid,
               bool causal) {
  const int64_t t_len = x.dims()[0];
  const int64_t dim = x.dims()[1];
  check(dim % n_heads == 0, "mhsa: dim not divisible by heads");
  const int64_t head_dim = dim / n_heads;
  check(valid >= 1 && valid <= t_len, "mhsa: valid out of range");
  if (!w.rel_bias.empty()) {
    check(static_cast<int64_t>(w.rel_bias.size()) == n_heads, "mhsa: rel bias per head");
  }

  ad::Tape& tape = *x.tape();
  Tensor mask({t_len, t_len});
  for (int64_t i = 0; i < t_len; ++i) {
    for (int64_t j = 0; j < t_len; ++j) {
      const bool blocked = j >= valid || (causal && j > i);
      mask.at(i, j) = blocked ? -1e30 : 0.0;
    }
  }
  ad::Value mask_v = tape.constant(std::move(mask));

  ad::Value q = linear(x, w.wq, w.bq);
  ad::Value k = linear(x, w.wk, w.bk);
  ad::Value v = linear(x, w.wv, w.bv);

  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  ad::Value ctx;
  for (int64_t h = 0; h < n_heads; ++h) {
    ad::Value qh = ad::slice_cols(q, h * head_dim, head_dim);
    ad::Value kh = ad::slice_cols(k, h * head_dim, head_dim);
    ad::Value vh = ad::slice_cols(v, h * head_dim, head_dim);
    ad::Value scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), scale);
    if (!w.rel_bias.empty()) {
      scores = ad::add(scores, ad::rel_bias_matrix(w.rel_bias[static_cast<std::size_t>(h)], t_len));
    }
    scores = ad::add(scores, mask_v);
    ad::Value attn = ad::softmax_rows(scores);
    ad::Value ctx_h = ad::matmul(attn, vh);
    ctx = (h == 0) ? ctx_h : ad::concat_cols(ctx, ctx_h);
  }
  return linear(ctx, w.wo, w.bo);
}

}  // namespace sslasr::nn
