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

#ifndef SSLASR_TEXTKIT_HPP_
#define SSLASR_TEXTKIT_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sslasr/autodiff.hpp"
#include "sslasr/optim.hpp"
#include "sslasr/params.hpp"
#include "sslasr/rng.hpp"

namespace sslasr::textkit {

// ---------------------------------------------------------------------------
// Word-piece tokenizer: BPE-style frequency merges build the vocab, encoding
// is greedy longest-match. "\xe2\x96\x81" (lower one-eighth block) marks word
// starts, sentencepiece-style.
// ---------------------------------------------------------------------------

inline constexpr const char* kWordMarker = "\xe2\x96\x81";
inline constexpr const char* kUnkPiece = "<unk>";

class TokenizerModel {
 public:
  int64_t vocab_size() const { return static_cast<int64_t>(pieces_.size()); }
  int64_t unk_id() const { return unk_id_; }
  const std::string& piece(int64_t id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  double score(int64_t id) const { return scores_.at(static_cast<std::size_t>(id)); }

  std::vector<int64_t> encode(const std::string& text) const;
  std::string decode(const std::vector<int64_t>& ids) const;

  void save(const std::string& path) const;
  static TokenizerModel load(const std::string& path);

 private:
  friend TokenizerModel train_wpm(const std::vector<std::string>&, int64_t);
  std::vector<std::string> pieces_;
  std::vector<double> scores_;
  std::map<std::string, int64_t> piece_to_id_;
  int64_t unk_id_ = 0;
};

// Deterministic given corpus order; rejects budgets smaller than the
// character inventory (plus specials).
TokenizerModel train_wpm(const std::vector<std::string>& corpus, int64_t vocab_budget);

// ---------------------------------------------------------------------------
// WER
// ---------------------------------------------------------------------------

std::vector<std::string> split_words(const std::string& text);
int64_t word_edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);
// Levenshtein word edits / reference length; empty reference rejected.
double wer(const std::string& reference, const std::string& hypothesis);

// ---------------------------------------------------------------------------
// Transformer language model (relative positional bias, causal)
// ---------------------------------------------------------------------------

struct LmConfig {
  int64_t n_layers = 2;
  int64_t model_dim = 64;
  int64_t n_heads = 4;
  bool relative_positional = true;
  int64_t context_len = 256;
  int64_t rel_radius = 32;
  void validate() const;
};

struct FusionParams {
  double lambda = 0.0;  // LM weight
  double beta = 0.0;    // non-blank reward per emitted token
};

class TransformerLm {
 public:
  TransformerLm(LmConfig config, int64_t vocab_size, uint64_t init_seed);

  const LmConfig& config() const { return cfg_; }
  int64_t vocab_size() const { return vocab_; }
  int64_t bos_id() const { return vocab_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Mean next-token NLL over [BOS, tokens...] -> tokens. Tape-based.
  ad::Value train_loss(ad::Tape& tape, const std::vector<int64_t>& tokens);

  // Eager incremental scorer; caches are per-hypothesis and copyable.
  struct Cache {
    std::vector<Tensor> keys;    // per layer, [len, dim]
    std::vector<Tensor> values;  // per layer, [len, dim]
    int64_t len = 0;
  };
  Cache make_cache() const;
  // log P(token | cached prefix); extends the cache by one position. The
  // first call on a fresh cache conditions on BOS.
  double score_next(Cache& cache, int64_t token) const;

  // Total log-probability, full-sequence path (matches the incremental chain
  // exactly). Out-of-vocab ids are rejected.
  double score(const std::vector<int64_t>& tokens) const;

  // Test hook for the relative-attention shift invariance: logits computed at
  // sequence position `pos` when the attention window starts at `attend_from`.
  Tensor logits_at(const std::vector<int64_t>& tokens, int64_t pos, int64_t attend_from) const;

  void save(const std::string& path) const;
  static std::unique_ptr<TransformerLm> load_from(const std::string& path);

 private:
  Tensor forward_row(const Tensor& x_row, Cache& cache, int64_t attend_from) const;

  LmConfig cfg_;
  int64_t vocab_ = 0;
  ParamStore params_;
};

// -sum log P / n_tokens of the tokenized transcript; empty transcript rejected.
double log_perplexity(const TransformerLm& lm, const TokenizerModel& tokenizer,
                      const std::string& transcript);

// Simple Adam training loop over tokenized lines; returns final mean loss.
double train_lm(TransformerLm& lm, const std::vector<std::vector<int64_t>>& lines, int64_t steps,
                const OptimizerConfig& opt_cfg, uint64_t seed, int64_t batch_size = 8);

}  // namespace sslasr::textkit

#endif  // SSLASR_TEXTKIT_HPP_
