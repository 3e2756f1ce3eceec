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

#ifndef SSLASR_PARAMS_HPP_
#define SSLASR_PARAMS_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sslasr/tensor.hpp"

namespace sslasr {

// Named model state. `trainable=false` marks buffers (e.g. batch-norm running
// statistics) that are checkpointed and transplanted but never updated by an
// optimizer.
struct Parameter {
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

// Ordered by path so every traversal (gradient accumulation, optimizer steps,
// checkpoint serialization) is deterministic.
class ParamStore {
 public:
  Parameter& create(const std::string& path, Tensor init, bool trainable = true) {
    auto [it, fresh] = entries_.emplace(path, Parameter{});
    if (!fresh) throw std::invalid_argument("duplicate parameter path: " + path);
    it->second.value = std::move(init);
    it->second.grad = Tensor::zeros(it->second.value.dims());
    it->second.trainable = trainable;
    return it->second;
  }

  Parameter& at(const std::string& path) {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw std::invalid_argument("unknown parameter path: " + path);
    return it->second;
  }
  const Parameter& at(const std::string& path) const {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw std::invalid_argument("unknown parameter path: " + path);
    return it->second;
  }
  bool contains(const std::string& path) const { return entries_.count(path) > 0; }

  void zero_grad() {
    for (auto& [path, p] : entries_) {
      std::fill(p.grad.vec().begin(), p.grad.vec().end(), 0.0);
    }
  }

  int64_t trainable_count() const {
    int64_t n = 0;
    for (const auto& [path, p] : entries_) {
      if (p.trainable) n += p.value.numel();
    }
    return n;
  }

  std::vector<std::string> paths() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [path, p] : entries_) out.push_back(path);
    return out;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Parameter> entries_;
};

}  // namespace sslasr

#endif  // SSLASR_PARAMS_HPP_
