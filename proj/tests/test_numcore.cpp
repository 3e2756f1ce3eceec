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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "sslasr/autodiff.hpp"
#include "sslasr/checkpoint.hpp"
#include "sslasr/gradcheck.hpp"
#include "sslasr/nn.hpp"
#include "sslasr/optim.hpp"
#include "sslasr/rng.hpp"

using namespace sslasr;

namespace {

Tensor randn(Rng& rng, std::vector<int64_t> dims, double scale = 1.0) {
  Tensor t(std::move(dims));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
  return t;
}

}  // namespace

TEST_CASE("grad_check: spec examples") {
  // f(x) = x^2 at x = 3: polynomial is exact to O(eps^2).
  auto square = [](ad::Tape&, ad::Value x) { return ad::mul(x, x); };
  auto r = grad_check(square, Tensor::scalar(3.0), 1e-5);
  CHECK(r.max_rel_err < 1e-8);

  {
    ad::Tape tape;
    ad::Value x = tape.leaf(Tensor::scalar(3.0), true);
    ad::Value y = ad::mul(x, x);
    tape.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-14));
  }

  // Sum of a 2x2 matrix product.
  Rng rng(1);
  Tensor b2 = randn(rng, {2, 2});
  auto matprod_sum = [&](ad::Tape& t, ad::Value x) {
    return ad::sum_all(ad::matmul(x, t.constant(b2)));
  };
  CHECK(grad_check(matprod_sum, randn(rng, {2, 2}), 1e-6).max_rel_err < 1e-5);

  // Softmax cross-entropy on 3 logits.
  auto softmax_ce = [](ad::Tape&, ad::Value x) {
    return ad::neg(ad::nll_rows(ad::log_softmax_rows(x), {2}));
  };
  CHECK(grad_check(softmax_ce, randn(rng, {1, 3}), 1e-6).max_rel_err < 1e-5);

  CHECK_THROWS(grad_check(square, Tensor::scalar(3.0), 0.0));
  auto bad = [](ad::Tape&, ad::Value x) { return ad::log_op(x); };
  CHECK_THROWS(grad_check(bad, Tensor::scalar(-1.0), 1e-6));
}

TEST_CASE("grad_check: every differentiable primitive under 1e-4") {
  Rng rng(99);
  const double tol = 1e-4;
  const double eps = 1e-6;

  SUBCASE("matmul") {
    Tensor b = randn(rng, {4, 3});
    auto f = [&](ad::Tape& t, ad::Value x) {
      return ad::mean_all(ad::tanh_op(ad::matmul(x, t.constant(b))));
    };
    CHECK(grad_check(f, randn(rng, {2, 4}), eps).max_rel_err < tol);
  }
  SUBCASE("elementwise ops") {
    Tensor other = randn(rng, {3, 3});
    auto f = [&](ad::Tape& t, ad::Value x) {
      ad::Value o = t.constant(other);
      ad::Value y = ad::add(ad::mul(x, o), ad::sub(x, o));
      y = ad::div(y, t.constant(Tensor::full({3, 3}, 2.5)));
      return ad::mean_all(y);
    };
    CHECK(grad_check(f, randn(rng, {3, 3}), eps).max_rel_err < tol);
  }
  SUBCASE("sigmoid tanh swish exp log sqrt recip") {
    auto f = [](ad::Tape&, ad::Value x) {
      ad::Value y = ad::sigmoid(x);
      y = ad::add(y, ad::tanh_op(x));
      y = ad::add(y, ad::swish(x));
      y = ad::add(y, ad::exp_op(ad::scale(x, 0.1)));
      ad::Value pos = ad::add_scalar(ad::mul(x, x), 1.0);
      y = ad::add(y, ad::log_op(pos));
      y = ad::add(y, ad::sqrt_op(pos));
      y = ad::add(y, ad::recip(pos));
      return ad::mean_all(y);
    };
    CHECK(grad_check(f, randn(rng, {2, 5}), eps).max_rel_err < tol);
  }
  SUBCASE("softmax and log_softmax") {
    auto f = [](ad::Tape& t, ad::Value x) {
      ad::Value p = ad::softmax_rows(x);
      ad::Value lp = ad::log_softmax_rows(x);
      return ad::add(ad::mean_all(ad::mul(p, p)), ad::nll_rows(lp, {1, 0}));
    };
    CHECK(grad_check(f, randn(rng, {2, 4}), eps).max_rel_err < tol);
  }
  SUBCASE("glu") {
    auto f = [](ad::Tape&, ad::Value x) { return ad::mean_all(ad::glu_cols(x)); };
    CHECK(grad_check(f, randn(rng, {3, 6}), eps).max_rel_err < tol);
  }
  SUBCASE("layer norm") {
    Tensor gamma = randn(rng, {5}, 0.3);
    Tensor beta = randn(rng, {5}, 0.3);
    for (int64_t i = 0; i < 5; ++i) gamma[i] += 1.0;
    auto f = [&](ad::Tape& t, ad::Value x) {
      return ad::mean_all(
          ad::layer_norm_rows(x, t.leaf(gamma, true), t.leaf(beta, true), 1e-6));
    };
    CHECK(grad_check(f, randn(rng, {3, 5}), eps).max_rel_err < tol);
    // Gradients w.r.t. gamma/beta.
    Tensor x0 = randn(rng, {3, 5});
    auto fg = [&](ad::Tape& t, ad::Value g) {
      return ad::mean_all(
          ad::layer_norm_rows(t.constant(x0), g, t.leaf(beta, true), 1e-6));
    };
    CHECK(grad_check(fg, gamma, eps).max_rel_err < tol);
  }
  SUBCASE("batch norm over valid frames") {
    Tensor gamma = Tensor::full({4}, 1.1);
    Tensor beta = Tensor::full({4}, 0.1);
    auto f = [&](ad::Tape& t, ad::Value x) {
      ad::Value y = ad::batch_norm_cols(x, t.leaf(gamma, true), t.leaf(beta, true), 1e-5, 5);
      return ad::mean_all(ad::mul(y, y));
    };
    CHECK(grad_check(f, randn(rng, {6, 4}), eps).max_rel_err < tol);
  }
  SUBCASE("depthwise conv1d") {
    Tensor w = randn(rng, {3, 4}, 0.5);
    Tensor b = randn(rng, {4}, 0.1);
    auto f = [&](ad::Tape& t, ad::Value x) {
      return ad::mean_all(ad::conv1d_depthwise(x, t.leaf(w, true), t.leaf(b, true), 5));
    };
    CHECK(grad_check(f, randn(rng, {6, 4}), eps).max_rel_err < tol);
    Tensor x0 = randn(rng, {6, 4});
    auto fw = [&](ad::Tape& t, ad::Value wv) {
      return ad::mean_all(ad::conv1d_depthwise(t.constant(x0), wv, t.leaf(b, true), 6));
    };
    CHECK(grad_check(fw, w, eps).max_rel_err < tol);
  }
  SUBCASE("strided conv2d") {
    Tensor w = randn(rng, {3, 3, 2, 3}, 0.4);
    Tensor b = randn(rng, {3}, 0.1);
    auto f = [&](ad::Tape& t, ad::Value x) {
      return ad::mean_all(ad::conv2d(x, t.leaf(w, true), t.leaf(b, true), 2, 2, 5));
    };
    CHECK(grad_check(f, randn(rng, {6, 5, 2}), eps).max_rel_err < tol);
    Tensor x0 = randn(rng, {6, 5, 2});
    auto fw = [&](ad::Tape& t, ad::Value wv) {
      return ad::mean_all(ad::conv2d(t.constant(x0), wv, t.leaf(b, true), 2, 2, 6));
    };
    CHECK(grad_check(fw, w, eps).max_rel_err < tol);
  }
  SUBCASE("lstm cell") {
    const int64_t input = 3, hidden = 4;
    Tensor w = randn(rng, {input + hidden, 4 * hidden}, 0.4);
    Tensor b = randn(rng, {4 * hidden}, 0.1);
    Tensor h0 = randn(rng, {1, hidden}, 0.5);
    Tensor c0 = randn(rng, {1, hidden}, 0.5);
    auto f = [&](ad::Tape& t, ad::Value x) {
      auto out = nn::lstm_cell(x, t.constant(h0), t.constant(c0), t.leaf(w, true),
                               t.leaf(b, true));
      return ad::mean_all(ad::add(out.h, out.c));
    };
    CHECK(grad_check(f, randn(rng, {1, input}), eps).max_rel_err < tol);
    Tensor x0 = randn(rng, {1, input});
    auto fw = [&](ad::Tape& t, ad::Value wv) {
      auto out = nn::lstm_cell(t.constant(x0), t.constant(h0), t.constant(c0), wv,
                               t.leaf(b, true));
      return ad::mean_all(ad::mul(out.h, out.h));
    };
    CHECK(grad_check(fw, w, eps).max_rel_err < tol);
  }
  SUBCASE("embedding lookup") {
    auto f = [](ad::Tape&, ad::Value table) {
      return ad::mean_all(ad::embedding_rows(table, {0, 2, 2, 1}));
    };
    CHECK(grad_check(f, randn(rng, {3, 4}), eps).max_rel_err < tol);
  }
  SUBCASE("shape ops and broadcasts") {
    Tensor v = randn(rng, {4});
    Tensor cv = randn(rng, {3});
    auto f = [&](ad::Tape& t, ad::Value x) {
      ad::Value y = ad::add_rowvec(x, t.leaf(v, true));
      y = ad::mul_rowvec(y, t.leaf(v, true));
      y = ad::mul_colvec(y, t.leaf(cv, true));
      y = ad::concat_cols(y, ad::slice_cols(y, 1, 2));
      y = ad::transpose(y);
      y = ad::concat_rows({y, y});
      y = ad::slice_rows(y, 2, 4);
      y = ad::stack_time_pairs(y);
      return ad::mean_all(ad::mul(y, y));
    };
    CHECK(grad_check(f, randn(rng, {3, 4}), eps).max_rel_err < tol);
  }
  SUBCASE("attention with and without relative bias") {
    const int64_t t_len = 5, dim = 6, heads = 2;
    std::vector<Tensor> weights;
    for (int i = 0; i < 4; ++i) weights.push_back(randn(rng, {dim, dim}, 0.4));
    Tensor rel = randn(rng, {9}, 0.3);
    auto run = [&](bool use_rel) {
      auto f = [&](ad::Tape& t, ad::Value x) {
        nn::AttentionWeights aw;
        aw.wq = t.leaf(weights[0], true);
        aw.wk = t.leaf(weights[1], true);
        aw.wv = t.leaf(weights[2], true);
        aw.wo = t.leaf(weights[3], true);
        aw.bq = t.constant(Tensor::zeros({dim}));
        aw.bk = t.constant(Tensor::zeros({dim}));
        aw.bv = t.constant(Tensor::zeros({dim}));
        aw.bo = t.constant(Tensor::zeros({dim}));
        if (use_rel) {
          aw.rel_bias = {t.leaf(rel, true), t.leaf(rel, true)};
        }
        return ad::mean_all(nn::mhsa(x, aw, heads, t_len - 1, false));
      };
      return grad_check(f, randn(rng, {t_len, dim}), eps).max_rel_err;
    };
    CHECK(run(false) < tol);
    CHECK(run(true) < tol);
  }
  SUBCASE("gather and replace ops") {
    Tensor row = randn(rng, {4});
    auto f = [&](ad::Tape& t, ad::Value x) {
      ad::Value y = ad::replace_rows(x, {1, 0, 1}, t.leaf(row, true));
      y = ad::gather_rows(y, {0, 2, 2});
      ad::Value picked = ad::gather_per_row(y, {0, 3, 1, 2, 2, 0}, 2);
      ad::Value z = ad::zero_rows_from(y, 2);
      return ad::add(ad::mean_all(ad::mul(picked, picked)), ad::mean_all(z));
    };
    CHECK(grad_check(f, randn(rng, {3, 4}), eps).max_rel_err < tol);
  }
  SUBCASE("rel_bias_matrix clamping") {
    auto f = [](ad::Tape&, ad::Value v) {
      return ad::mean_all(ad::mul(ad::rel_bias_matrix(v, 6), ad::rel_bias_matrix(v, 6)));
    };
    CHECK(grad_check(f, randn(rng, {5}), eps).max_rel_err < tol);
  }
}

TEST_CASE("transformer_lr schedule") {
  const double peak = 2e-3;
  const int64_t warmup = 25000;
  CHECK(transformer_lr(warmup, peak, warmup) == doctest::Approx(peak).epsilon(1e-15));
  CHECK(transformer_lr(warmup / 2, peak, warmup) == doctest::Approx(peak / 2).epsilon(1e-15));
  CHECK(transformer_lr(4 * warmup, peak, warmup) == doctest::Approx(peak / 2).epsilon(1e-15));
  CHECK_THROWS(transformer_lr(0, peak, warmup));
  // Continuity around the peak.
  CHECK(transformer_lr(warmup - 1, peak, warmup) ==
        doctest::Approx(transformer_lr(warmup + 1, peak, warmup)).epsilon(1e-3));
}

TEST_CASE("clip_global_norm") {
  auto make_store = [](std::vector<double> a, std::vector<double> b) {
    ParamStore s;
    s.create("a", Tensor::zeros({static_cast<int64_t>(a.size())}));
    s.create("b", Tensor::zeros({static_cast<int64_t>(b.size())}));
    s.at("a").grad = Tensor({static_cast<int64_t>(a.size())}, a);
    s.at("b").grad = Tensor({static_cast<int64_t>(b.size())}, b);
    return s;
  };

  SUBCASE("norm 40 cap 20 halves every entry") {
    // 4 entries of 20 -> norm 40.
    ParamStore s = make_store({20.0, 20.0}, {20.0, 20.0});
    const double norm = clip_global_norm(s, 20.0);
    CHECK(norm == doctest::Approx(40.0).epsilon(1e-12));
    for (const char* p : {"a", "b"}) {
      for (int64_t i = 0; i < 2; ++i) {
        CHECK(s.at(p).grad[i] == doctest::Approx(10.0).epsilon(1e-12));
      }
    }
    CHECK(global_grad_norm(s) <= 20.0);
  }
  SUBCASE("norm under cap is identity") {
    ParamStore s = make_store({3.0, 4.0}, {0.0, 0.0});
    clip_global_norm(s, 20.0);
    CHECK(s.at("a").grad[0] == 3.0);
    CHECK(s.at("a").grad[1] == 4.0);
  }
  SUBCASE("all-zero gradients stay zero") {
    ParamStore s = make_store({0.0, 0.0}, {0.0, 0.0});
    clip_global_norm(s, 20.0);
    CHECK(s.at("a").grad[0] == 0.0);
  }
  SUBCASE("idempotent bitwise") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      ParamStore s = make_store({rng.normal() * 30, rng.normal() * 30},
                                {rng.normal() * 30, rng.normal() * 30});
      clip_global_norm(s, 5.0);
      std::vector<double> once = {s.at("a").grad[0], s.at("a").grad[1], s.at("b").grad[0],
                                  s.at("b").grad[1]};
      clip_global_norm(s, 5.0);
      std::vector<double> twice = {s.at("a").grad[0], s.at("a").grad[1], s.at("b").grad[0],
                                   s.at("b").grad[1]};
      CHECK(once == twice);
    }
  }
  SUBCASE("non-finite gradient rejected with diagnostic") {
    ParamStore s = make_store({1.0, HUGE_VAL}, {0.0, 0.0});
    CHECK_THROWS_WITH_AS(clip_global_norm(s, 20.0), doctest::Contains("non-finite"),
                         std::runtime_error);
  }
  SUBCASE("cap must be positive") {
    ParamStore s = make_store({1.0}, {1.0});
    CHECK_THROWS(clip_global_norm(s, 0.0));
  }
}

TEST_CASE("adam_step") {
  SUBCASE("beta1=beta2=0 reduces to sign-scaled step") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adam;
    cfg.beta1 = 0.0;
    cfg.beta2 = 0.0;
    cfg.peak_lr = 1e-2;
    cfg.warmup_steps = 1;
    Optimizer opt(cfg);
    ParamStore s;
    s.create("p", Tensor({2}, {1.0, -2.0}));
    s.at("p").grad = Tensor({2}, {0.5, -0.25});
    opt.step(s);
    const double lr = transformer_lr(1, 1e-2, 1);
    CHECK(s.at("p").value[0] ==
          doctest::Approx(1.0 - lr * 0.5 / (0.5 + cfg.adam_eps)).epsilon(1e-12));
    CHECK(s.at("p").value[1] ==
          doctest::Approx(-2.0 + lr * 0.25 / (0.25 + cfg.adam_eps)).epsilon(1e-12));
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    OptimizerConfig cfg;
    cfg.peak_lr = 1e-2;
    cfg.warmup_steps = 1;
    Optimizer opt(cfg);
    ParamStore s;
    s.create("p", Tensor({3}, {1.0, 2.0, 3.0}));
    opt.step(s);
    CHECK(s.at("p").value[0] == 1.0);
    CHECK(s.at("p").value[1] == 2.0);
    CHECK(s.at("p").value[2] == 3.0);
  }
  SUBCASE("two steps on f(x)=x^2 decrease f") {
    OptimizerConfig cfg;
    cfg.peak_lr = 1e-1;
    cfg.warmup_steps = 1;
    Optimizer opt(cfg);
    ParamStore s;
    s.create("x", Tensor::scalar(3.0));
    auto f = [&]() {
      const double x = s.at("x").value[0];
      s.at("x").grad[0] = 2.0 * x;
      return x * x;
    };
    const double f0 = f();
    opt.step(s);
    const double f1 = f();
    opt.step(s);
    const double x = s.at("x").value[0];
    CHECK(f1 < f0);
    CHECK(x * x < f1);
  }
  SUBCASE("shape mismatch rejected") {
    OptimizerConfig cfg;
    Optimizer opt(cfg);
    ParamStore s;
    s.create("p", Tensor({2}, {0.0, 0.0}));
    opt.step(s);
    // Corrupt the parameter shape behind the optimizer's back.
    s.at("p").value = Tensor({3}, {0.0, 0.0, 0.0});
    s.at("p").grad = Tensor({3}, {0.0, 0.0, 0.0});
    CHECK_THROWS(opt.step(s));
  }
}

TEST_CASE("adafactor_step") {
  SUBCASE("4x5 matrix keeps 9 second-moment accumulators") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adafactor;
    cfg.factored_second_moment = true;
    Optimizer opt(cfg);
    CHECK(opt.second_moment_size({4, 5}) == 9);
    CHECK(opt.second_moment_size({7}) == 7);
    CHECK(opt.second_moment_size({2, 3, 4}) == 6 + 4);

    ParamStore s;
    s.create("w", Tensor::zeros({4, 5}));
    Rng rng(5);
    for (int64_t i = 0; i < 20; ++i) s.at("w").grad[i] = rng.normal();
    opt.step(s);
    auto state = opt.export_state();
    CHECK(state.count("vr/w") == 1);
    CHECK(state.count("vc/w") == 1);
    CHECK(state.at("vr/w").numel() + state.at("vc/w").numel() == 9);
    CHECK(state.count("v/w") == 0);
  }
  SUBCASE("rank-1 squared gradient is reproduced exactly") {
    // G^2 = u v^T: row sums u_i * sum(v), col sums v_j * sum(u),
    // normalizer sum(u)sum(v) -> estimate u_i v_j exactly (up to eps1).
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adafactor;
    cfg.factored_second_moment = true;
    cfg.beta1 = 0.0;
    cfg.beta2 = 0.5;
    cfg.adafactor_eps1 = 0.0;
    cfg.peak_lr = 0.0;  // inspect state only
    cfg.warmup_steps = 1;
    Optimizer opt(cfg);
    ParamStore s;
    s.create("w", Tensor::zeros({3, 4}));
    std::vector<double> u = {1.0, 2.0, 0.5};
    std::vector<double> v = {0.25, 1.0, 4.0, 2.0};
    for (int64_t i = 0; i < 3; ++i) {
      for (int64_t j = 0; j < 4; ++j) {
        s.at("w").grad.at(i, j) = std::sqrt(u[i] * v[j]);
      }
    }
    opt.step(s);
    auto state = opt.export_state();
    const Tensor& vr = state.at("vr/w");
    const Tensor& vc = state.at("vc/w");
    const double rtot = vr[0] + vr[1] + vr[2];
    for (int64_t i = 0; i < 3; ++i) {
      for (int64_t j = 0; j < 4; ++j) {
        const double est = vr[i] * vc[j] / rtot;
        const double truth = 0.5 * u[i] * v[j];  // (1-beta2) * G^2
        CHECK(est == doctest::Approx(truth).epsilon(1e-12));
      }
    }
  }
  SUBCASE("vector parameters match the unfactored estimator") {
    OptimizerConfig base;
    base.kind = OptimizerKind::adafactor;
    base.peak_lr = 1e-2;
    base.warmup_steps = 2;
    OptimizerConfig factored = base;
    factored.factored_second_moment = true;
    Optimizer opt_a(base), opt_b(factored);
    ParamStore sa, sb;
    sa.create("v", Tensor({4}, {0.1, -0.2, 0.3, -0.4}));
    sb.create("v", Tensor({4}, {0.1, -0.2, 0.3, -0.4}));
    Rng rng(17);
    for (int step = 0; step < 20; ++step) {
      for (int64_t i = 0; i < 4; ++i) {
        const double g = rng.normal();
        sa.at("v").grad[i] = g;
        sb.at("v").grad[i] = g;
      }
      opt_a.step(sa);
      opt_b.step(sb);
      for (int64_t i = 0; i < 4; ++i) {
        CHECK(std::abs(sa.at("v").value[i] - sb.at("v").value[i]) < 1e-10);
      }
    }
  }
  SUBCASE("two steps on f(x)=x^2 decrease f") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adafactor;
    cfg.beta2 = 0.98;
    cfg.peak_lr = 0.05;
    cfg.warmup_steps = 1;
    Optimizer opt(cfg);
    ParamStore s;
    s.create("x", Tensor::scalar(3.0));
    auto f = [&]() {
      const double x = s.at("x").value[0];
      s.at("x").grad[0] = 2.0 * x;
      return x * x;
    };
    const double f0 = f();
    opt.step(s);
    const double f1 = f();
    opt.step(s);
    CHECK(f1 < f0);
    CHECK(s.at("x").value[0] * s.at("x").value[0] < f1);
  }
}

TEST_CASE("ema_update") {
  ParamStore s;
  s.create("p", Tensor({2}, {1.0, -1.0}));

  SUBCASE("decay 0 tracks params exactly") {
    EmaState ema(0.0, s);
    s.at("p").value = Tensor({2}, {5.0, 7.0});
    ema.update(s);
    CHECK(ema.shadow().at("p")[0] == 5.0);
    CHECK(ema.shadow().at("p")[1] == 7.0);
  }
  SUBCASE("decay 1 never moves") {
    EmaState ema(1.0, s);
    s.at("p").value = Tensor({2}, {5.0, 7.0});
    ema.update(s);
    CHECK(ema.shadow().at("p")[0] == 1.0);
  }
  SUBCASE("paper decay 0.9999, shadow 0, param 1 -> 0.0001") {
    ParamStore z;
    z.create("p", Tensor({1}, {0.0}));
    EmaState ema(0.9999, z);
    z.at("p").value = Tensor({1}, {1.0});
    ema.update(z);
    CHECK(ema.shadow().at("p")[0] == doctest::Approx(1e-4).epsilon(1e-10));
  }
  SUBCASE("shape mismatch rejected") {
    EmaState ema(0.5, s);
    s.at("p").value = Tensor({3}, {0.0, 0.0, 0.0});
    CHECK_THROWS(ema.update(s));
  }
}

TEST_CASE("checkpoint round-trip and byte stability") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sslasr_ckpt_test";
  fs::create_directories(dir);

  ParamStore s;
  Rng rng(31);
  s.create("encoder/w", Tensor({3, 4}));
  s.create("encoder/bn/running_mean", Tensor({4}), /*trainable=*/false);
  s.create("decoder/b", Tensor({5}));
  for (auto& [path, p] : s) {
    for (int64_t i = 0; i < p.value.numel(); ++i) p.value[i] = rng.normal();
  }
  OptimizerConfig cfg;
  cfg.peak_lr = 1e-3;
  cfg.warmup_steps = 4;
  Optimizer opt(cfg);
  for (auto& [path, p] : s) {
    for (int64_t i = 0; i < p.grad.numel(); ++i) p.grad[i] = rng.normal();
  }
  opt.step(s);
  EmaState ema(0.9, s);
  ema.update(s);

  Checkpoint ck = snapshot(s, &opt, &ema, {{"generation", 2.0}});
  const std::string p1 = (dir / "a.ckpt").string();
  const std::string p2 = (dir / "b.ckpt").string();
  save_checkpoint(ck, p1);
  save_checkpoint(ck, p2);

  auto slurp = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  };
  CHECK(slurp(p1) == slurp(p2));
  CHECK(!slurp(p1).empty());

  Checkpoint back = load_checkpoint(p1);
  CHECK(back.params.size() == 2);
  CHECK(back.buffers.size() == 1);
  CHECK(back.meta.at("generation") == 2.0);
  CHECK(back.meta.at("optim_step") == 1.0);
  for (const auto& [path, t] : ck.params) {
    CHECK(back.params.at(path).vec() == t.vec());
  }
  CHECK(back.ema.at("encoder/w").vec() == ema.shadow().at("encoder/w").vec());

  ParamStore s2;
  s2.create("encoder/w", Tensor({3, 4}));
  s2.create("encoder/bn/running_mean", Tensor({4}), false);
  s2.create("decoder/b", Tensor({5}));
  restore_params(back, s2);
  CHECK(s2.at("encoder/w").value.vec() == s.at("encoder/w").value.vec());

  ParamStore bad;
  bad.create("encoder/w", Tensor({9, 9}));
  bad.create("encoder/bn/running_mean", Tensor({4}), false);
  bad.create("decoder/b", Tensor({5}));
  CHECK_THROWS(restore_params(back, bad));

  fs::remove_all(dir);
}

TEST_CASE("training step is bit-reproducible under a fixed seed") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    ParamStore s;
    s.create("w", nn::fan_in_init(rng, 3, {3, 2}));
    s.create("b", Tensor::zeros({2}));
    OptimizerConfig cfg;
    cfg.peak_lr = 5e-2;
    cfg.warmup_steps = 3;
    Optimizer opt(cfg);
    Rng data = rng.fork("data");
    for (int step = 0; step < 10; ++step) {
      Tensor x({2, 3});
      for (int64_t i = 0; i < 6; ++i) x[i] = data.normal();
      s.zero_grad();
      ad::Tape tape;
      ad::Value w = tape.param(s, "w");
      ad::Value b = tape.param(s, "b");
      ad::Value loss = ad::mean_all(ad::mul(nn::linear(tape.constant(x), w, b),
                                            nn::linear(tape.constant(x), w, b)));
      tape.backward(loss);
      tape.accumulate_param_grads();
      clip_global_norm(s, 20.0);
      opt.step(s);
    }
    std::vector<double> out = s.at("w").value.vec();
    out.insert(out.end(), s.at("b").value.vec().begin(), s.at("b").value.vec().end());
    return out;
  };
  CHECK(run(12345) == run(12345));
  CHECK(run(12345) != run(54321));
}
