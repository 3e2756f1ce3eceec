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

#include "sslasr/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "sslasr/kernels.hpp"

namespace sslasr {

void OptimizerConfig::validate() const {
  check(beta1 >= 0.0 && beta1 < 1.0, "optimizer: beta1 must be in [0,1)");
  check(beta2 >= 0.0 && beta2 < 1.0, "optimizer: beta2 must be in [0,1)");
  check(warmup_steps >= 1, "optimizer: warmup_steps must be >= 1");
  check(grad_norm_cap > 0.0, "optimizer: grad_norm_cap must be > 0");
  check(peak_lr >= 0.0, "optimizer: peak_lr must be >= 0");
}

double transformer_lr(int64_t step, double peak_lr, int64_t warmup) {
  check(step >= 1, "transformer_lr: step must be >= 1");
  check(warmup >= 1, "transformer_lr: warmup must be >= 1");
  const double n = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return peak_lr * std::min(n / w, std::sqrt(w / n));
}

double global_grad_norm(const ParamStore& store) {
  double ss = 0.0;
  for (const auto& [path, p] : store) {
    if (!p.trainable) continue;
    if (!p.grad.all_finite()) {
      throw std::runtime_error("non-finite gradient in parameter " + path);
    }
    ss += kernels::sumsq(p.grad.data(), static_cast<std::size_t>(p.grad.numel()));
  }
  return std::sqrt(ss);
}

double clip_global_norm(ParamStore& store, double cap) {
  check(cap > 0.0, "clip_global_norm: cap must be > 0");
  const double norm = global_grad_norm(store);
  if (norm > cap) {
    // Shave one part in 2^50 so the recomputed norm lands strictly under the
    // cap and a second application is a bitwise no-op.
    const double s = cap / norm * (1.0 - 0x1.0p-50);
    for (auto& [path, p] : store) {
      if (!p.trainable) continue;
      kernels::scale(p.grad.data(), s, p.grad.data(), static_cast<std::size_t>(p.grad.numel()));
    }
  }
  return norm;
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

int64_t Optimizer::second_moment_size(const std::vector<int64_t>& dims) const {
  if (cfg_.kind == OptimizerKind::adafactor && cfg_.factored_second_moment && dims.size() >= 2) {
    const int64_t last = dims.back();
    return Tensor::numel_of(dims) / last + last;
  }
  return Tensor::numel_of(dims);
}

void Optimizer::step(ParamStore& store) {
  ++step_;
  last_lr_ = transformer_lr(step_, cfg_.peak_lr, cfg_.warmup_steps);
  for (auto& [path, p] : store) {
    if (!p.trainable) continue;
    if (cfg_.kind == OptimizerKind::adam) {
      adam_update(path, p, last_lr_);
    } else {
      adafactor_update(path, p, last_lr_);
    }
  }
}

void Optimizer::adam_update(const std::string& path, Parameter& p, double lr) {
  Slot& s = slots_[path];
  if (s.m.numel() == 0) {
    s.m = Tensor::zeros(p.value.dims());
    s.v = Tensor::zeros(p.value.dims());
  }
  check(s.m.same_shape(p.value), "adam: state/param shape mismatch for " + path);
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const int64_t n = p.value.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double g = p.grad[i];
    s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
    s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
    const double mhat = s.m[i] / corr1;
    const double vhat = s.v[i] / corr2;
    p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
  }
}

void Optimizer::adafactor_update(const std::string& path, Parameter& p, double lr) {
  Slot& s = slots_[path];
  const auto& dims = p.value.dims();
  const bool factored = cfg_.factored_second_moment && dims.size() >= 2;
  const int64_t n = p.value.numel();
  const int64_t ncols = factored ? dims.back() : 0;
  const int64_t nrows = factored ? n / ncols : 0;
  if (s.m.numel() == 0 && s.v.numel() == 0 && s.v_row.numel() == 0) {
    s.factored = factored;
    if (cfg_.beta1 > 0.0) s.m = Tensor::zeros(dims);
    if (factored) {
      s.v_row = Tensor::zeros({nrows});
      s.v_col = Tensor::zeros({ncols});
    } else {
      s.v = Tensor::zeros(dims);
    }
  }
  check(s.factored == factored, "adafactor: factorization mode changed for " + path);

  const double b2 = cfg_.beta2;
  Tensor update(dims);
  if (factored) {
    // Row/col sums of G^2 + eps1; V_hat = R C^T / sum(R). Exact for rank-1 G^2.
    std::vector<double> rsum(static_cast<std::size_t>(nrows), 0.0);
    std::vector<double> csum(static_cast<std::size_t>(ncols), 0.0);
    for (int64_t r = 0; r < nrows; ++r) {
      for (int64_t c = 0; c < ncols; ++c) {
        const double g2 = p.grad[r * ncols + c] * p.grad[r * ncols + c] + cfg_.adafactor_eps1;
        rsum[static_cast<std::size_t>(r)] += g2;
        csum[static_cast<std::size_t>(c)] += g2;
      }
    }
    for (int64_t r = 0; r < nrows; ++r) {
      s.v_row[r] = b2 * s.v_row[r] + (1.0 - b2) * rsum[static_cast<std::size_t>(r)];
    }
    for (int64_t c = 0; c < ncols; ++c) {
      s.v_col[c] = b2 * s.v_col[c] + (1.0 - b2) * csum[static_cast<std::size_t>(c)];
    }
    const double rtot = kernels::sum(s.v_row.data(), static_cast<std::size_t>(nrows));
    for (int64_t r = 0; r < nrows; ++r) {
      for (int64_t c = 0; c < ncols; ++c) {
        const double vhat = s.v_row[r] * s.v_col[c] / rtot;
        update[r * ncols + c] = p.grad[r * ncols + c] / std::sqrt(vhat);
      }
    }
  } else {
    for (int64_t i = 0; i < n; ++i) {
      const double g2 = p.grad[i] * p.grad[i] + cfg_.adafactor_eps1;
      s.v[i] = b2 * s.v[i] + (1.0 - b2) * g2;
      update[i] = p.grad[i] / std::sqrt(s.v[i]);
    }
  }

  const double rms =
      std::sqrt(kernels::sumsq(update.data(), static_cast<std::size_t>(n)) / static_cast<double>(n));
  const double denom = std::max(1.0, rms / cfg_.adafactor_clip);
  double step_scale = lr / denom;
  if (cfg_.adafactor_scale_parameter) {
    const double prms =
        std::sqrt(kernels::sumsq(p.value.data(), static_cast<std::size_t>(n)) / static_cast<double>(n));
    step_scale *= std::max(cfg_.adafactor_eps2, prms);
  }

  if (cfg_.beta1 > 0.0) {
    for (int64_t i = 0; i < n; ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * update[i] * step_scale;
      p.value[i] -= s.m[i];
    }
  } else {
    kernels::axpy(-step_scale, update.data(), p.value.data(), static_cast<std::size_t>(n));
  }
}

std::map<std::string, Tensor> Optimizer::export_state() const {
  std::map<std::string, Tensor> out;
  for (const auto& [path, s] : slots_) {
    if (s.m.numel() > 0) out["m/" + path] = s.m;
    if (s.v.numel() > 0) out["v/" + path] = s.v;
    if (s.v_row.numel() > 0) out["vr/" + path] = s.v_row;
    if (s.v_col.numel() > 0) out["vc/" + path] = s.v_col;
  }
  return out;
}

void Optimizer::import_state(const std::map<std::string, Tensor>& state, int64_t step) {
  slots_.clear();
  step_ = step;
  for (const auto& [key, tensor] : state) {
    const auto slash = key.find('/');
    check(slash != std::string::npos, "optimizer state key missing prefix: " + key);
    const std::string tag = key.substr(0, slash);
    const std::string path = key.substr(slash + 1);
    Slot& s = slots_[path];
    if (tag == "m") {
      s.m = tensor;
    } else if (tag == "v") {
      s.v = tensor;
    } else if (tag == "vr") {
      s.v_row = tensor;
      s.factored = true;
    } else if (tag == "vc") {
      s.v_col = tensor;
      s.factored = true;
    } else {
      throw std::invalid_argument("unknown optimizer state tag: " + tag);
    }
  }
}

EmaState::EmaState(double decay, const ParamStore& store) : decay_(decay) {
  check(decay >= 0.0 && decay <= 1.0, "ema: decay must be in [0,1]");
  for (const auto& [path, p] : store) {
    if (p.trainable) shadow_[path] = p.value;
  }
}

void EmaState::update(const ParamStore& store) {
  for (auto& [path, sh] : shadow_) {
    const Parameter& p = store.at(path);
    check(sh.same_shape(p.value), "ema: shadow/param shape mismatch for " + path);
    const int64_t n = sh.numel();
    for (int64_t i = 0; i < n; ++i) {
      sh[i] = decay_ * sh[i] + (1.0 - decay_) * p.value[i];
    }
  }
}

void EmaState::copy_to(ParamStore& store) const {
  for (const auto& [path, sh] : shadow_) {
    Parameter& p = store.at(path);
    check(sh.same_shape(p.value), "ema: shadow/param shape mismatch for " + path);
    p.value = sh;
  }
}

}  // namespace sslasr
