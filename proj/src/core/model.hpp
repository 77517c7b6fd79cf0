// Copyright 2026 The rtlm Authors.
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

#pragma once

// Language-model architectures: TLM, TLM-XL, R-TLM (direct / fused, with or
// without XL recurrence) and the LSTM-LM baseline.
//
// Token convention: forward() consumes input ids and logits row t predicts
// the token that follows ids[t]. Streams start from the eos id, so the first
// word of a document is predicted after an eos input.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "core/layers.hpp"
#include "core/tensor.hpp"

namespace rtlm::inline RTLM_PRECISION::lm {

using nn::TokenId;

inline constexpr TokenId kEosId = 0;
inline constexpr TokenId kUnkId = 1;

enum class Architecture {
  kTlm,
  kTlmXl,
  kRtlmDirect,
  kRtlmFused,
  kRtlmDirectXl,
  kRtlmFusedXl,
  kLstmLm,
};

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& s);

struct ModelConfig {
  Architecture arch = Architecture::kTlm;
  std::size_t n_blocks = 2;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t segment_len = 16;
  std::set<std::size_t> lstm_blocks;
  nn::Activation fusion_activation = nn::Activation::kLinear;
  std::size_t vocab_size = 2000;
  // 0 selects 4 * d_model.
  std::size_t ffn_inner = 0;
  nn::NormPlacement norm_placement = nn::NormPlacement::kPost;
  bool tie_embeddings = false;
  float dropout = 0.0F;
  float layer_norm_eps = 1e-5F;
  // LSTM-LM only. lstm_lm_hidden == 0 selects d_model.
  std::size_t lstm_lm_layers = 1;
  std::size_t lstm_lm_hidden = 0;

  bool is_lstm_lm() const { return arch == Architecture::kLstmLm; }
  bool uses_memory() const;
  bool has_lstm_module() const;
  bool fused() const;
  std::size_t ffn_dim() const { return ffn_inner ? ffn_inner : 4 * d_model; }
  std::size_t lstm_hidden() const { return lstm_lm_hidden ? lstm_lm_hidden : d_model; }
  // Width of the vectors fed to the output projection.
  std::size_t output_dim() const { return is_lstm_lm() ? lstm_hidden() : d_model; }

  // Throws ContractError when the fields are inconsistent.
  void validate() const;
};

// Desk-scale defaults with the block placement used for each R-TLM variant:
// the fused module sits in the third block, the direct one in the first.
ModelConfig default_config(Architecture arch, std::size_t vocab_size);

using Parameters = std::map<std::string, Tensor>;

enum class InitScheme { kRandom, kZero };

Parameters init_parameters(const ModelConfig& cfg, std::uint64_t seed,
                           InitScheme scheme = InitScheme::kRandom);

// Throws ContractError when a parameter is missing or has the wrong shape.
void check_parameters(const ModelConfig& cfg, const Parameters& params);

std::size_t parameter_count(const Parameters& params);

struct LstmState {
  Tensor h;  // [hidden]
  Tensor c;  // [hidden]
};

// State carried from one segment to the next. All tensors are detached
// values; forward() re-enters them through stop_gradient.
struct MemoryState {
  // XL variants: the last segment_len block inputs of each block. For R-TLM
  // blocks these are the post-fusion (or direct LSTM) outputs.
  std::map<std::size_t, Tensor> block_memory;
  // R-TLM: keyed by block index. LSTM-LM: keyed by layer index.
  std::map<std::size_t, LstmState> lstm;
};

MemoryState init_state(const ModelConfig& cfg);

// Throws ContractError when the state does not belong to the configuration.
void check_state(const ModelConfig& cfg, const MemoryState& state);

struct ForwardOptions {
  // Enables dropout when cfg.dropout > 0.
  std::mt19937_64* rng = nullptr;
};

struct ForwardResult {
  Tensor logits;  // T' x V
  MemoryState state;
};

ForwardResult forward(const ModelConfig& cfg, const Parameters& params,
                      std::span<const TokenId> ids, const MemoryState& state,
                      const ForwardOptions& options = {});

ForwardResult lstm_lm_forward(const ModelConfig& cfg, const Parameters& params,
                              std::span<const TokenId> ids,
                              const MemoryState& state,
                              const ForwardOptions& options = {});

struct TokenScores {
  // Natural-log probability of each target token.
  std::vector<double> log_probs;
  MemoryState state;
};

// Scores target_ids after context_ids. The input stream is
// [lead] + context + target (minus its last token), processed in
// segment_len chunks with state carried between chunks; only target
// positions are returned.
TokenScores score_tokens(const ModelConfig& cfg, const Parameters& params,
                         std::span<const TokenId> context_ids,
                         std::span<const TokenId> target_ids,
                         const MemoryState& state, TokenId lead = kEosId);

struct SequenceScore {
  double total_log_prob = 0.0;
  MemoryState state;
};

SequenceScore score_sequence(const ModelConfig& cfg, const Parameters& params,
                             std::span<const TokenId> context_ids,
                             std::span<const TokenId> target_ids,
                             const MemoryState& state, TokenId lead = kEosId);

// Runs ids through the model in segment_len chunks, discarding the logits.
MemoryState advance_state(const ModelConfig& cfg, const Parameters& params,
                          std::span<const TokenId> ids, MemoryState state);

struct Model {
  ModelConfig config;
  Parameters params;
};

}  // namespace rtlm::lm
