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

#ifndef SSLASR_OPTIM_HPP_
#define SSLASR_OPTIM_HPP_

#include <cstdint>
#include <map>
#include <string>

#include "sslasr/params.hpp"
#include "sslasr/tensor.hpp"

namespace sslasr {

enum class OptimizerKind { adam, adafactor };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double peak_lr = 2e-3;
  int64_t warmup_steps = 25000;
  double grad_norm_cap = 20.0;
  bool factored_second_moment = false;
  double adam_eps = 1e-8;
  double adafactor_eps1 = 1e-30;
  double adafactor_eps2 = 1e-3;
  double adafactor_clip = 1.0;
  bool adafactor_scale_parameter = false;

  void validate() const;
};

// lr(n) = peak * min(n / warmup, sqrt(warmup / n)); peaks exactly at n = warmup.
double transformer_lr(int64_t step, double peak_lr, int64_t warmup);

// L2 norm over trainable gradients. Throws on non-finite entries, naming the
// offending parameter.
double global_grad_norm(const ParamStore& store);

// Scales all trainable gradients by cap/norm when norm > cap; post-norm <= cap
// and a second application is a bitwise no-op. Returns the pre-clip norm.
double clip_global_norm(ParamStore& store, double cap);

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  // Applies one update from the accumulated gradients in `store`. The
  // internal step counter feeds the schedule (first call is step 1).
  void step(ParamStore& store);

  int64_t step_count() const { return step_; }
  double last_lr() const { return last_lr_; }
  const OptimizerConfig& config() const { return cfg_; }

  // Second-moment accumulator count for one parameter shape (factored
  // matrices store rows+cols, everything else numel).
  int64_t second_moment_size(const std::vector<int64_t>& dims) const;

  // Flattened state for checkpointing.
  std::map<std::string, Tensor> export_state() const;
  void import_state(const std::map<std::string, Tensor>& state, int64_t step);

 private:
  struct Slot {
    Tensor m;
    Tensor v;        // unfactored second moment
    Tensor v_row;    // factored accumulators
    Tensor v_col;
    bool factored = false;
  };

  void adam_update(const std::string& path, Parameter& p, double lr);
  void adafactor_update(const std::string& path, Parameter& p, double lr);

  OptimizerConfig cfg_;
  int64_t step_ = 0;
  double last_lr_ = 0.0;
  std::map<std::string, Slot> slots_;
};

// Exponential moving average of trainable parameters, kept as a separate copy
// for evaluation.
class EmaState {
 public:
  EmaState() = default;
  EmaState(double decay, const ParamStore& store);

  double decay() const { return decay_; }
  void update(const ParamStore& store);
  // Writes the shadow weights into `store` (e.g. a cloned eval model).
  void copy_to(ParamStore& store) const;

  const std::map<std::string, Tensor>& shadow() const { return shadow_; }
  std::map<std::string, Tensor>& shadow() { return shadow_; }
  void set_decay(double d) { decay_ = d; }

 private:
  double decay_ = 0.9999;
  std::map<std::string, Tensor> shadow_;
};

}  // namespace sslasr

#endif  // SSLASR_OPTIM_HPP_
