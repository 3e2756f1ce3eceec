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

#include "sslasr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace sslasr {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }

void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
int64_t read_i64(std::istream& is) {
  int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

std::string read_string(std::istream& is) {
  const uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

void write_section(std::ostream& os, const std::string& name,
                   const std::map<std::string, Tensor>& entries) {
  write_string(os, name);
  write_u32(os, static_cast<uint32_t>(entries.size()));
  for (const auto& [path, tensor] : entries) {
    write_string(os, path);
    write_u32(os, static_cast<uint32_t>(tensor.rank()));
    for (int64_t d : tensor.dims()) write_i64(os, d);
    os.write(reinterpret_cast<const char*>(tensor.data()),
             static_cast<std::streamsize>(tensor.numel() * 8));
  }
}

std::map<std::string, Tensor> read_section(std::istream& is) {
  std::map<std::string, Tensor> out;
  const uint32_t n = read_u32(is);
  for (uint32_t i = 0; i < n; ++i) {
    const std::string path = read_string(is);
    const uint32_t rank = read_u32(is);
    std::vector<int64_t> dims(rank);
    for (uint32_t d = 0; d < rank; ++d) dims[d] = read_i64(is);
    Tensor t(dims);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
    out.emplace(path, std::move(t));
  }
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 8);
  write_u32(os, kVersion);
  write_u32(os, 5);
  write_section(os, "params", ckpt.params);
  write_section(os, "buffers", ckpt.buffers);
  write_section(os, "optim", ckpt.optim);
  write_section(os, "ema", ckpt.ema);
  write_string(os, "meta");
  write_u32(os, static_cast<uint32_t>(ckpt.meta.size()));
  for (const auto& [key, value] : ckpt.meta) {
    write_string(os, key);
    write_f64(os, value);
  }
  if (!os) throw std::runtime_error("write failure on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("bad checkpoint magic in " + path);
  }
  const uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const uint32_t n_sections = read_u32(is);
  Checkpoint ckpt;
  for (uint32_t s = 0; s < n_sections; ++s) {
    const std::string name = read_string(is);
    if (name == "meta") {
      const uint32_t n = read_u32(is);
      for (uint32_t i = 0; i < n; ++i) {
        const std::string key = read_string(is);
        ckpt.meta[key] = read_f64(is);
      }
    } else if (name == "params") {
      ckpt.params = read_section(is);
    } else if (name == "buffers") {
      ckpt.buffers = read_section(is);
    } else if (name == "optim") {
      ckpt.optim = read_section(is);
    } else if (name == "ema") {
      ckpt.ema = read_section(is);
    } else {
      throw std::runtime_error("unknown checkpoint section: " + name);
    }
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  return ckpt;
}

Checkpoint snapshot(const ParamStore& store, const Optimizer* optimizer, const EmaState* ema,
                    const std::map<std::string, double>& meta) {
  Checkpoint ckpt;
  for (const auto& [path, p] : store) {
    (p.trainable ? ckpt.params : ckpt.buffers).emplace(path, p.value);
  }
  if (optimizer != nullptr) {
    ckpt.optim = optimizer->export_state();
    ckpt.meta["optim_step"] = static_cast<double>(optimizer->step_count());
  }
  if (ema != nullptr) {
    ckpt.ema = ema->shadow();
    ckpt.meta["ema_decay"] = ema->decay();
  }
  for (const auto& [key, value] : meta) ckpt.meta[key] = value;
  return ckpt;
}

void restore_params(const Checkpoint& ckpt, ParamStore& store) {
  for (auto& [path, p] : store) {
    const auto& section = p.trainable ? ckpt.params : ckpt.buffers;
    auto it = section.find(path);
    if (it == section.end()) {
      throw std::runtime_error("checkpoint missing parameter " + path);
    }
    check(it->second.same_shape(p.value),
          "checkpoint shape conflict on " + path + ": " + it->second.shape_str() + " vs " +
              p.value.shape_str());
    p.value = it->second;
  }
}

}  // namespace sslasr
