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

#ifndef SSLASR_CHECKPOINT_HPP_
#define SSLASR_CHECKPOINT_HPP_

#include <cstdint>
#include <map>
#include <string>

#include "sslasr/optim.hpp"
#include "sslasr/params.hpp"
#include "sslasr/tensor.hpp"

namespace sslasr {

// Self-describing container: versioned header, then named sections each
// holding a sorted path -> (shape, row-major float64 payload) map. Writing
// the same state twice produces identical bytes.
struct Checkpoint {
  std::map<std::string, Tensor> params;   // trainable parameter values
  std::map<std::string, Tensor> buffers;  // non-trainable state (e.g. BN stats)
  std::map<std::string, Tensor> optim;    // flattened optimizer slots
  std::map<std::string, Tensor> ema;      // EMA shadow weights
  std::map<std::string, double> meta;     // step counters and scalars
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint snapshot(const ParamStore& store, const Optimizer* optimizer = nullptr,
                    const EmaState* ema = nullptr,
                    const std::map<std::string, double>& meta = {});

// Restores parameter/buffer values into an existing store (shapes must match).
void restore_params(const Checkpoint& ckpt, ParamStore& store);

}  // namespace sslasr

#endif  // SSLASR_CHECKPOINT_HPP_
