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

#ifndef SSLASR_FRONTEND_HPP_
#define SSLASR_FRONTEND_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "sslasr/rng.hpp"
#include "sslasr/tensor.hpp"

namespace sslasr::frontend {

struct FrontendConfig {
  double sample_rate = 16000.0;
  int64_t n_mels = 80;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  double log_floor = 1e-10;
  void validate() const;
};

struct FeatureSequence {
  Tensor frames;  // [T, n_mels]
  int64_t valid_length = 0;
  std::string source_id;

  int64_t total_frames() const { return frames.rank() == 2 ? frames.dim(0) : 0; }
  void validate() const;
};

struct SpecAugmentPolicy {
  int64_t n_freq_masks = 2;
  int64_t freq_mask_size = 27;   // F, in mel bins
  int64_t n_time_masks = 10;
  double time_mask_ratio = 0.05;  // p_S, fraction of valid_length
  void validate(int64_t n_mels) const;
};

struct SegmentationPolicy {
  double min_len_s = 32.0;
  double max_len_s = 64.0;
  double chunk_len_s = 32.0;
  void validate() const;
};

struct MaskSpan {
  int64_t start = 0;
  int64_t width = 0;
};

struct MaskSet {
  std::vector<MaskSpan> time_masks;
  std::vector<MaskSpan> freq_masks;
  uint64_t seed = 0;
};

// Log-mel filterbank energies: frame t covers samples [t*hop, t*hop+win);
// values are log(max(mel_energy, log_floor)).
FeatureSequence log_mel(const std::vector<double>& waveform, const FrontendConfig& config,
                        const std::string& source_id);

// Triangular HTK-mel filterbank, rows = mel bands, cols = FFT bins (0..n_fft/2).
Tensor mel_filterbank(int64_t n_mels, int64_t n_fft, double sample_rate);

// Cut points for Libri-Light-style random segmentation; (offset, length) pairs
// in samples that partition [0, n_samples) in order. Every segment except
// possibly the last lies in [min_len, max_len]; audio shorter than min_len is
// kept whole.
std::vector<std::pair<int64_t, int64_t>> random_segment(int64_t n_samples, double sample_rate,
                                                        const SegmentationPolicy& policy,
                                                        uint64_t seed);

// Uniformly positioned window of chunk_len elements; shorter inputs are
// returned whole. Used for both waveform samples and feature frames.
std::pair<int64_t, int64_t> sample_chunk(int64_t n, int64_t chunk_len, Rng& rng);

MaskSet sample_masks(int64_t valid_length, int64_t n_mels, const SpecAugmentPolicy& policy,
                     uint64_t seed);

// Adaptive SpecAugment; masked cells zeroed, frames beyond valid_length
// untouched. Returns the sampled spans through *masks when provided.
FeatureSequence spec_augment(const FeatureSequence& features, const SpecAugmentPolicy& policy,
                             uint64_t seed, MaskSet* masks = nullptr);

// Feature file: header (n_mels, T, valid_length, source_id), row-major
// float64 payload.
void save_features(const FeatureSequence& features, const std::string& path);
FeatureSequence load_features(const std::string& path);

// Single-channel 16-bit linear PCM.
std::vector<double> load_pcm16(const std::string& path);
void save_pcm16(const std::vector<double>& samples, const std::string& path);

}  // namespace sslasr::frontend

#endif  // SSLASR_FRONTEND_HPP_
