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

#include "sslasr/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sslasr::frontend {

namespace {

constexpr char kFeatMagic[8] = {'S', 'S', 'L', 'F', 'E', 'A', 'T', '1'};

// Iterative radix-2 Cooley-Tukey; n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

int64_t next_pow2(int64_t n) {
  int64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void FrontendConfig::validate() const {
  check(n_mels >= 1, "frontend: n_mels must be >= 1");
  check(hop_ms <= window_ms, "frontend: hop must not exceed window");
  check(hop_ms > 0.0 && window_ms > 0.0, "frontend: window/hop must be positive");
  check(sample_rate > 0.0, "frontend: sample_rate must be positive");
  check(log_floor > 0.0, "frontend: log_floor must be positive");
}

void FeatureSequence::validate() const {
  check(frames.rank() == 2, "features: expected [T, n_mels] matrix");
  check(valid_length >= 0 && valid_length <= frames.dim(0),
        "features: valid_length exceeds frame count");
  check(frames.all_finite(), "features: non-finite values");
}

void SpecAugmentPolicy::validate(int64_t n_mels) const {
  check(freq_mask_size <= n_mels, "specaugment: F exceeds n_mels");
  check(freq_mask_size >= 0 && n_freq_masks >= 0 && n_time_masks >= 0,
        "specaugment: negative counts");
  check(time_mask_ratio >= 0.0 && time_mask_ratio <= 1.0, "specaugment: p_S must be in [0,1]");
}

void SegmentationPolicy::validate() const {
  check(min_len_s > 0.0 && min_len_s <= max_len_s, "segmentation: need 0 < min_len <= max_len");
  check(chunk_len_s > 0.0 && chunk_len_s <= max_len_s, "segmentation: chunk_len must be <= max_len");
}

Tensor mel_filterbank(int64_t n_mels, int64_t n_fft, double sample_rate) {
  const int64_t n_bins = n_fft / 2 + 1;
  Tensor fb({n_mels, n_bins});
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                    static_cast<double>(n_mels + 1);
    edges[i] = mel_to_hz(mel);
  }
  for (int64_t m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int64_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > lo && f < mid) {
        w = (f - lo) / (mid - lo);
      } else if (f == mid) {
        w = 1.0;
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      fb.at(m, k) = w;
    }
  }
  return fb;
}

FeatureSequence log_mel(const std::vector<double>& waveform, const FrontendConfig& config,
                        const std::string& source_id) {
  config.validate();
  check(!waveform.empty(), "log_mel: empty waveform rejected");
  const int64_t win = std::llround(config.window_ms / 1000.0 * config.sample_rate);
  const int64_t hop = std::llround(config.hop_ms / 1000.0 * config.sample_rate);
  const int64_t n = static_cast<int64_t>(waveform.size());
  check(n >= win, "log_mel: waveform shorter than one analysis window");
  const int64_t t_frames = (n - win) / hop + 1;
  const int64_t n_fft = next_pow2(win);
  const Tensor fb = mel_filterbank(config.n_mels, n_fft, config.sample_rate);
  const int64_t n_bins = n_fft / 2 + 1;

  std::vector<double> hann(static_cast<std::size_t>(win));
  for (int64_t i = 0; i < win; ++i) {
    hann[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(win - 1));
  }

  FeatureSequence out;
  out.frames = Tensor({t_frames, config.n_mels});
  out.valid_length = t_frames;
  out.source_id = source_id;

  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n_fft));
  std::vector<double> power(static_cast<std::size_t>(n_bins));
  for (int64_t t = 0; t < t_frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    const int64_t off = t * hop;
    for (int64_t i = 0; i < win; ++i) {
      buf[static_cast<std::size_t>(i)] =
          waveform[static_cast<std::size_t>(off + i)] * hann[static_cast<std::size_t>(i)];
    }
    fft_inplace(buf);
    for (int64_t k = 0; k < n_bins; ++k) {
      power[static_cast<std::size_t>(k)] = std::norm(buf[static_cast<std::size_t>(k)]);
    }
    for (int64_t m = 0; m < config.n_mels; ++m) {
      double e = 0.0;
      for (int64_t k = 0; k < n_bins; ++k) {
        e += fb.at(m, k) * power[static_cast<std::size_t>(k)];
      }
      out.frames.at(t, m) = std::log(std::max(e, config.log_floor));
    }
  }
  return out;
}

std::vector<std::pair<int64_t, int64_t>> random_segment(int64_t n_samples, double sample_rate,
                                                        const SegmentationPolicy& policy,
                                                        uint64_t seed) {
  policy.validate();
  check(n_samples > 0, "random_segment: empty audio");
  const int64_t min_s = std::llround(policy.min_len_s * sample_rate);
  const int64_t max_s = std::llround(policy.max_len_s * sample_rate);
  Rng rng = Rng(seed).fork("segment");
  std::vector<std::pair<int64_t, int64_t>> out;
  int64_t pos = 0;
  while (n_samples - pos > max_s) {
    const int64_t len = rng.uniform_int(min_s, max_s);
    out.emplace_back(pos, len);
    pos += len;
  }
  if (pos < n_samples) out.emplace_back(pos, n_samples - pos);
  return out;
}

std::pair<int64_t, int64_t> sample_chunk(int64_t n, int64_t chunk_len, Rng& rng) {
  check(chunk_len > 0, "sample_chunk: chunk_len must be > 0");
  if (n <= chunk_len) return {0, n};
  const int64_t start = rng.uniform_int(0, n - chunk_len);
  return {start, chunk_len};
}

MaskSet sample_masks(int64_t valid_length, int64_t n_mels, const SpecAugmentPolicy& policy,
                     uint64_t seed) {
  policy.validate(n_mels);
  check(valid_length >= 1, "sample_masks: empty sequence");
  MaskSet set;
  set.seed = seed;
  Rng rng = Rng(seed).fork("specaugment");
  const int64_t max_t = static_cast<int64_t>(
      std::floor(policy.time_mask_ratio * static_cast<double>(valid_length)));
  for (int64_t i = 0; i < policy.n_time_masks; ++i) {
    const int64_t w = rng.uniform_int(0, max_t);
    const int64_t start = rng.uniform_int(0, valid_length - w);
    set.time_masks.push_back({start, w});
  }
  for (int64_t i = 0; i < policy.n_freq_masks; ++i) {
    const int64_t w = rng.uniform_int(0, policy.freq_mask_size);
    const int64_t start = rng.uniform_int(0, n_mels - w);
    set.freq_masks.push_back({start, w});
  }
  return set;
}

FeatureSequence spec_augment(const FeatureSequence& features, const SpecAugmentPolicy& policy,
                             uint64_t seed, MaskSet* masks) {
  features.validate();
  const int64_t n_mels = features.frames.dim(1);
  MaskSet set = sample_masks(features.valid_length, n_mels, policy, seed);
  if (masks != nullptr) *masks = set;
  FeatureSequence out = features;
  for (const MaskSpan& span : set.time_masks) {
    for (int64_t t = span.start; t < span.start + span.width; ++t) {
      for (int64_t m = 0; m < n_mels; ++m) out.frames.at(t, m) = 0.0;
    }
  }
  for (const MaskSpan& span : set.freq_masks) {
    for (int64_t t = 0; t < features.valid_length; ++t) {
      for (int64_t m = span.start; m < span.start + span.width; ++m) out.frames.at(t, m) = 0.0;
    }
  }
  return out;
}

void save_features(const FeatureSequence& features, const std::string& path) {
  features.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open feature file for writing: " + path);
  os.write(kFeatMagic, 8);
  write_u32(os, 1);  // version
  write_u32(os, static_cast<uint32_t>(features.frames.dim(1)));
  write_u32(os, static_cast<uint32_t>(features.frames.dim(0)));
  write_u32(os, static_cast<uint32_t>(features.valid_length));
  write_u32(os, static_cast<uint32_t>(features.source_id.size()));
  os.write(features.source_id.data(), static_cast<std::streamsize>(features.source_id.size()));
  os.write(reinterpret_cast<const char*>(features.frames.data()),
           static_cast<std::streamsize>(features.frames.numel() * 8));
  if (!os) throw std::runtime_error("write failure on feature file: " + path);
}

FeatureSequence load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open feature file: " + path);
  char magic[8];
  is.read(magic, 8);
  if (std::memcmp(magic, kFeatMagic, 8) != 0) {
    throw std::runtime_error("bad feature file magic in " + path);
  }
  const uint32_t version = read_u32(is);
  if (version != 1) throw std::runtime_error("unsupported feature file version");
  const uint32_t n_mels = read_u32(is);
  const uint32_t t_frames = read_u32(is);
  const uint32_t valid = read_u32(is);
  const uint32_t id_len = read_u32(is);
  FeatureSequence out;
  out.source_id.resize(id_len);
  is.read(out.source_id.data(), id_len);
  out.frames = Tensor({static_cast<int64_t>(t_frames), static_cast<int64_t>(n_mels)});
  is.read(reinterpret_cast<char*>(out.frames.data()),
          static_cast<std::streamsize>(out.frames.numel() * 8));
  out.valid_length = valid;
  if (!is) throw std::runtime_error("truncated feature file: " + path);
  out.validate();
  return out;
}

std::vector<double> load_pcm16(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open PCM file: " + path);
  is.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(is.tellg());
  is.seekg(0);
  check(bytes % 2 == 0, "PCM16 file has odd byte count: " + path);
  std::vector<int16_t> raw(bytes / 2);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<double>(raw[i]) / 32768.0;
  return out;
}

void save_pcm16(const std::vector<double>& samples, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open PCM file for writing: " + path);
  for (double s : samples) {
    const double clamped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    const auto v = static_cast<int16_t>(std::lround(clamped * 32768.0));
    os.write(reinterpret_cast<const char*>(&v), 2);
  }
}

}  // namespace sslasr::frontend
