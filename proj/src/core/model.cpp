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

#include "core/model.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace rtlm::inline RTLM_PRECISION::lm {

namespace {

struct ParamSpec {
  std::string name;
  Shape shape;
  enum Kind { kMatrix, kEmbedding, kZero, kOne, kLstmMatrix, kLstmBias } kind;
  std::size_t fan_in = 1;
};

std::string block_prefix(std::size_t b) { return "block." + std::to_string(b) + "."; }

std::vector<ParamSpec> parameter_specs(const ModelConfig& cfg) {
  const std::size_t d = cfg.d_model, vocab = cfg.vocab_size;
  std::vector<ParamSpec> specs;
  specs.push_back({"embedding", {vocab, d}, ParamSpec::kEmbedding});
  if (cfg.is_lstm_lm()) {
    const std::size_t hidden = cfg.lstm_hidden();
    for (std::size_t l = 0; l < cfg.lstm_lm_layers; ++l) {
      const std::string p = "lstm." + std::to_string(l) + ".";
      const std::size_t in = l == 0 ? d : hidden;
      specs.push_back({p + "W_ih", {in, 4 * hidden}, ParamSpec::kLstmMatrix, hidden});
      specs.push_back({p + "W_hh", {hidden, 4 * hidden}, ParamSpec::kLstmMatrix, hidden});
      specs.push_back({p + "b", {4 * hidden}, ParamSpec::kLstmBias, hidden});
    }
  } else {
    const std::size_t f = cfg.ffn_dim();
    for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
      const std::string p = block_prefix(b);
      if (cfg.lstm_blocks.count(b)) {
        specs.push_back({p + "lstm.W_ih", {d, 4 * d}, ParamSpec::kLstmMatrix, d});
        specs.push_back({p + "lstm.W_hh", {d, 4 * d}, ParamSpec::kLstmMatrix, d});
        specs.push_back({p + "lstm.b", {4 * d}, ParamSpec::kLstmBias, d});
        if (cfg.fused()) {
          specs.push_back({p + "fusion.W_c", {d, d}, ParamSpec::kMatrix, 2 * d});
          specs.push_back({p + "fusion.U_c", {d, d}, ParamSpec::kMatrix, 2 * d});
          specs.push_back({p + "fusion.b_c", {d}, ParamSpec::kZero});
        }
      }
      for (const char* w : {"attn.W_q", "attn.W_k", "attn.W_v", "attn.W_o", "attn.W_r"})
        specs.push_back({p + w, {d, d}, ParamSpec::kMatrix, d});
      specs.push_back({p + "attn.u", {d}, ParamSpec::kZero});
      specs.push_back({p + "attn.v", {d}, ParamSpec::kZero});
      specs.push_back({p + "norm1.gamma", {d}, ParamSpec::kOne});
      specs.push_back({p + "norm1.beta", {d}, ParamSpec::kZero});
      specs.push_back({p + "ffn.W_1", {d, f}, ParamSpec::kMatrix, d});
      specs.push_back({p + "ffn.b_1", {f}, ParamSpec::kZero});
      specs.push_back({p + "ffn.W_2", {f, d}, ParamSpec::kMatrix, f});
      specs.push_back({p + "ffn.b_2", {d}, ParamSpec::kZero});
      specs.push_back({p + "norm2.gamma", {d}, ParamSpec::kOne});
      specs.push_back({p + "norm2.beta", {d}, ParamSpec::kZero});
    }
    if (cfg.norm_placement == nn::NormPlacement::kPre) {
      specs.push_back({"final_norm.gamma", {d}, ParamSpec::kOne});
      specs.push_back({"final_norm.beta", {d}, ParamSpec::kZero});
    }
  }
  if (!cfg.tie_embeddings)
    specs.push_back({"output.W", {cfg.output_dim(), vocab}, ParamSpec::kMatrix,
                     cfg.output_dim()});
  specs.push_back({"output.b", {vocab}, ParamSpec::kZero});
  return specs;
}

const Tensor& param(const Parameters& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ContractError("missing parameter '" + name + "'");
  return it->second;
}

nn::AttentionParams attention_params(const ModelConfig& cfg, const Parameters& ps,
                                     const std::string& p) {
  return {param(ps, p + "attn.W_q"), param(ps, p + "attn.W_k"),
          param(ps, p + "attn.W_v"), param(ps, p + "attn.W_o"),
          param(ps, p + "attn.W_r"), param(ps, p + "attn.u"),
          param(ps, p + "attn.v"),   cfg.n_heads};
}

nn::LayerNormParams norm_params(const ModelConfig& cfg, const Parameters& ps,
                                const std::string& p) {
  return {param(ps, p + "gamma"), param(ps, p + "beta"), cfg.layer_norm_eps};
}

nn::LstmParams lstm_params(const Parameters& ps, const std::string& p) {
  return {param(ps, p + "W_ih"), param(ps, p + "W_hh"), param(ps, p + "b")};
}

Tensor output_layer(const ModelConfig& cfg, const Parameters& ps, const Tensor& x) {
  const Tensor proj = cfg.tie_embeddings ? matmul(x, transpose(param(ps, "embedding")))
                                         : matmul(x, param(ps, "output.W"));
  return add_row(proj, param(ps, "output.b"));
}

// Keeps the last `limit` rows of [old; fresh].
Tensor roll_memory(const std::optional<Tensor>& old, const Tensor& fresh,
                   std::size_t limit) {
  const std::size_t d = fresh.cols();
  std::vector<Real> rows;
  if (old) rows.assign(old->data().begin(), old->data().end());
  rows.insert(rows.end(), fresh.data().begin(), fresh.data().end());
  const std::size_t total = rows.size() / d;
  const std::size_t keep = std::min(total, limit);
  std::vector<Real> tail(rows.end() - static_cast<std::ptrdiff_t>(keep * d), rows.end());
  return Tensor::from({keep, d}, std::move(tail));
}

void check_ids(const ModelConfig& cfg, std::span<const TokenId> ids) {
  if (ids.size() > cfg.segment_len)
    throw ContractError("forward: " + std::to_string(ids.size()) +
                        " inputs exceed segment length " +
                        std::to_string(cfg.segment_len));
}

}  // namespace

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kTlm: return "tlm";
    case Architecture::kTlmXl: return "tlm_xl";
    case Architecture::kRtlmDirect: return "rtlm_d";
    case Architecture::kRtlmFused: return "rtlm_f";
    case Architecture::kRtlmDirectXl: return "rtlm_d_xl";
    case Architecture::kRtlmFusedXl: return "rtlm_f_xl";
    case Architecture::kLstmLm: return "lstm_lm";
  }
  return "?";
}

Architecture parse_architecture(const std::string& s) {
  for (auto a : {Architecture::kTlm, Architecture::kTlmXl, Architecture::kRtlmDirect,
                 Architecture::kRtlmFused, Architecture::kRtlmDirectXl,
                 Architecture::kRtlmFusedXl, Architecture::kLstmLm})
    if (to_string(a) == s) return a;
  throw Error(ErrorCode::kInvalidArgument, "unknown architecture '" + s + "'");
}

bool ModelConfig::uses_memory() const {
  return arch == Architecture::kTlmXl || arch == Architecture::kRtlmDirectXl ||
         arch == Architecture::kRtlmFusedXl;
}

bool ModelConfig::has_lstm_module() const {
  return arch == Architecture::kRtlmDirect || arch == Architecture::kRtlmFused ||
         arch == Architecture::kRtlmDirectXl || arch == Architecture::kRtlmFusedXl;
}

bool ModelConfig::fused() const {
  return arch == Architecture::kRtlmFused || arch == Architecture::kRtlmFusedXl;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ContractError("model config: " + m); };
  if (vocab_size < 2) fail("vocab_size must be at least 2");
  if (d_model == 0) fail("d_model must be positive");
  if (segment_len == 0) fail("segment_len must be positive");
  if (dropout < 0.0F || dropout >= 1.0F) fail("dropout must lie in [0, 1)");
  if (is_lstm_lm()) {
    if (lstm_lm_layers == 0) fail("lstm_lm_layers must be positive");
    if (!lstm_blocks.empty()) fail("lstm_blocks must be empty for lstm_lm");
    if (tie_embeddings && lstm_hidden() != d_model)
      fail("tied embeddings need lstm_lm_hidden == d_model");
    return;
  }
  if (n_blocks == 0) fail("n_blocks must be positive");
  if (n_heads == 0 || d_model % n_heads != 0)
    fail("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
         std::to_string(n_heads));
  if (has_lstm_module()) {
    if (lstm_blocks.empty()) fail(to_string(arch) + " needs at least one LSTM block");
    for (auto b : lstm_blocks)
      if (b >= n_blocks)
        fail("LSTM block " + std::to_string(b) + " outside [0, " +
             std::to_string(n_blocks) + ")");
  } else if (!lstm_blocks.empty()) {
    fail("lstm_blocks must be empty for " + to_string(arch));
  }
}

ModelConfig default_config(Architecture arch, std::size_t vocab_size) {
  ModelConfig cfg;
  cfg.arch = arch;
  cfg.vocab_size = vocab_size;
  if (cfg.has_lstm_module()) {
    // The fused placement needs a third block to exist.
    if (cfg.fused()) cfg.n_blocks = 3;
    cfg.lstm_blocks = {cfg.fused() ? std::size_t{2} : std::size_t{0}};
  }
  return cfg;
}

Parameters init_parameters(const ModelConfig& cfg, std::uint64_t seed,
                           InitScheme scheme) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Parameters params;
  for (const auto& spec : parameter_specs(cfg)) {
    std::vector<Real> v(shape_size(spec.shape), 0.0F);
    if (spec.kind == ParamSpec::kOne) {
      std::fill(v.begin(), v.end(), 1.0F);
    } else if (scheme == InitScheme::kRandom) {
      auto fill_uniform = [&](Real bound) {
        std::uniform_real_distribution<Real> dist(-bound, bound);
        for (auto& x : v) x = dist(rng);
      };
      const Real inv_sqrt = 1.0F / std::sqrt(static_cast<Real>(spec.fan_in));
      switch (spec.kind) {
        case ParamSpec::kMatrix:
        case ParamSpec::kLstmMatrix: fill_uniform(inv_sqrt); break;
        case ParamSpec::kEmbedding: fill_uniform(0.1F); break;
        case ParamSpec::kLstmBias: {
          const std::size_t hidden = v.size() / 4;
          std::fill(v.begin() + hidden, v.begin() + 2 * hidden, 1.0F);
          break;
        }
        default: break;
      }
    }
    params.emplace(spec.name, Tensor::from(spec.shape, std::move(v), true));
  }
  return params;
}

void check_parameters(const ModelConfig& cfg, const Parameters& params) {
  const auto specs = parameter_specs(cfg);
  for (const auto& spec : specs) {
    const Tensor& t = param(params, spec.name);
    if (t.shape() != spec.shape)
      throw ContractError("parameter '" + spec.name + "' has shape " +
                          shape_string(t.shape()) + ", expected " +
                          shape_string(spec.shape));
  }
  if (params.size() != specs.size())
    throw ContractError("parameter set has " + std::to_string(params.size()) +
                        " entries, configuration expects " +
                        std::to_string(specs.size()));
}

std::size_t parameter_count(const Parameters& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

MemoryState init_state(const ModelConfig& cfg) {
  MemoryState state;
  if (cfg.is_lstm_lm()) {
    const std::size_t hidden = cfg.lstm_hidden();
    for (std::size_t l = 0; l < cfg.lstm_lm_layers; ++l)
      state.lstm[l] = {Tensor::zeros({hidden}), Tensor::zeros({hidden})};
  } else {
    for (auto b : cfg.lstm_blocks)
      state.lstm[b] = {Tensor::zeros({cfg.d_model}), Tensor::zeros({cfg.d_model})};
  }
  return state;
}

void check_state(const ModelConfig& cfg, const MemoryState& state) {
  auto fail = [](const std::string& m) { throw ContractError("memory state: " + m); };
  if (!state.block_memory.empty() && !cfg.uses_memory())
    fail("attention memory present for " + to_string(cfg.arch));
  for (const auto& [b, mem] : state.block_memory) {
    if (b >= cfg.n_blocks) fail("memory for block " + std::to_string(b) + " out of range");
    if (mem.ndim() != 2 || mem.cols() != cfg.d_model || mem.rows() > cfg.segment_len)
      fail("memory of block " + std::to_string(b) + " has shape " +
           shape_string(mem.shape()));
  }
  std::set<std::size_t> expected;
  std::size_t width = cfg.d_model;
  if (cfg.is_lstm_lm()) {
    for (std::size_t l = 0; l < cfg.lstm_lm_layers; ++l) expected.insert(l);
    width = cfg.lstm_hidden();
  } else {
    expected = cfg.lstm_blocks;
  }
  if (state.lstm.size() != expected.size()) fail("LSTM state count does not match");
  for (const auto& [b, st] : state.lstm) {
    if (!expected.count(b)) fail("unexpected LSTM state at " + std::to_string(b));
    if (st.h.size() != width || st.c.size() != width)
      fail("LSTM state " + std::to_string(b) + " has width " +
           std::to_string(st.h.size()) + ", expected " + std::to_string(width));
  }
}

ForwardResult forward(const ModelConfig& cfg, const Parameters& params,
                      std::span<const TokenId> ids, const MemoryState& state,
                      const ForwardOptions& options) {
  if (cfg.is_lstm_lm()) return lstm_lm_forward(cfg, params, ids, state, options);
  check_ids(cfg, ids);
  check_state(cfg, state);

  const bool pre_norm = cfg.norm_placement == nn::NormPlacement::kPre;
  std::mt19937_64* rng = cfg.dropout > 0.0F ? options.rng : nullptr;
  auto drop = [&](const Tensor& t) {
    return rng != nullptr ? dropout(t, cfg.dropout, *rng) : t;
  };

  ForwardResult result;
  Tensor x = nn::embed(ids, param(params, "embedding"));
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    const std::string p = block_prefix(b);
    Tensor block_in = x;
    if (cfg.lstm_blocks.count(b)) {
      const LstmState& carried = state.lstm.at(b);
      auto lstm = nn::lstm_forward(x, stop_gradient(carried.h), stop_gradient(carried.c),
                                   lstm_params(params, p + "lstm."));
      result.state.lstm[b] = {lstm.h.detach(), lstm.c.detach()};
      block_in = cfg.fused()
                     ? nn::fusion(lstm.outputs, x,
                                  {param(params, p + "fusion.W_c"),
                                   param(params, p + "fusion.U_c"),
                                   param(params, p + "fusion.b_c"),
                                   cfg.fusion_activation})
                     : lstm.outputs;
    }

    std::optional<Tensor> memory;
    if (cfg.uses_memory()) {
      auto it = state.block_memory.find(b);
      std::optional<Tensor> previous;
      if (it != state.block_memory.end() && it->second.rows() > 0) {
        previous = it->second;
        memory = stop_gradient(it->second);
      }
      result.state.block_memory[b] =
          roll_memory(previous, block_in.detach(), cfg.segment_len);
    }

    const auto attn = attention_params(cfg, params, p);
    const auto norm1 = norm_params(cfg, params, p + "norm1.");
    Tensor hidden;
    if (pre_norm) {
      std::optional<Tensor> normed_memory;
      if (memory) normed_memory = layer_norm(*memory, norm1.gamma, norm1.beta, norm1.eps);
      hidden = add(block_in,
                   drop(nn::attention(layer_norm(block_in, norm1.gamma, norm1.beta, norm1.eps),
                                      normed_memory, attn)));
    } else {
      hidden = layer_norm(add(block_in, drop(nn::attention(block_in, memory, attn))),
                          norm1.gamma, norm1.beta, norm1.eps);
    }
    const nn::FeedForwardParams ffn{param(params, p + "ffn.W_1"), param(params, p + "ffn.b_1"),
                                    param(params, p + "ffn.W_2"), param(params, p + "ffn.b_2")};
    x = nn::ffn_block(hidden, ffn, norm_params(cfg, params, p + "norm2."),
                      cfg.norm_placement, cfg.dropout, rng);
  }
  if (pre_norm) {
    const auto fin = norm_params(cfg, params, "final_norm.");
    x = layer_norm(x, fin.gamma, fin.beta, fin.eps);
  }
  result.logits = output_layer(cfg, params, x);
  return result;
}

ForwardResult lstm_lm_forward(const ModelConfig& cfg, const Parameters& params,
                              std::span<const TokenId> ids, const MemoryState& state,
                              const ForwardOptions& options) {
  if (!cfg.is_lstm_lm())
    throw ContractError("lstm_lm_forward called for " + to_string(cfg.arch));
  check_ids(cfg, ids);
  check_state(cfg, state);
  std::mt19937_64* rng = cfg.dropout > 0.0F ? options.rng : nullptr;

  ForwardResult result;
  Tensor x = nn::embed(ids, param(params, "embedding"));
  for (std::size_t l = 0; l < cfg.lstm_lm_layers; ++l) {
    const LstmState& carried = state.lstm.at(l);
    auto out = nn::lstm_forward(x, stop_gradient(carried.h), stop_gradient(carried.c),
                                lstm_params(params, "lstm." + std::to_string(l) + "."));
    result.state.lstm[l] = {out.h.detach(), out.c.detach()};
    x = rng != nullptr ? dropout(out.outputs, cfg.dropout, *rng) : out.outputs;
  }
  result.logits = output_layer(cfg, params, x);
  return result;
}

TokenScores score_tokens(const ModelConfig& cfg, const Parameters& params,
                         std::span<const TokenId> context_ids,
                         std::span<const TokenId> target_ids,
                         const MemoryState& state, TokenId lead) {
  TokenScores out;
  out.state = state;
  if (target_ids.empty()) return out;

  std::vector<TokenId> targets(context_ids.begin(), context_ids.end());
  targets.insert(targets.end(), target_ids.begin(), target_ids.end());
  std::vector<TokenId> inputs;
  inputs.reserve(targets.size());
  inputs.push_back(lead);
  inputs.insert(inputs.end(), targets.begin(), targets.end() - 1);

  const std::size_t first_target = context_ids.size();
  out.log_probs.reserve(target_ids.size());
  for (std::size_t start = 0; start < inputs.size(); start += cfg.segment_len) {
    const std::size_t len = std::min(cfg.segment_len, inputs.size() - start);
    auto fwd = forward(cfg, params, std::span(inputs).subspan(start, len), out.state);
    out.state = std::move(fwd.state);
    const std::size_t vocab = fwd.logits.cols();
    auto lv = fwd.logits.data();
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t pos = start + i;
      if (pos < first_target) continue;
      const Real* row = lv.data() + i * vocab;
      const Real mx = *std::max_element(row, row + vocab);
      double total = 0.0;
      for (std::size_t j = 0; j < vocab; ++j) total += std::exp(static_cast<double>(row[j]) - mx);
      if (targets[pos] >= vocab)
        throw IndexError("score: target id " + std::to_string(targets[pos]) +
                         " outside vocabulary of " + std::to_string(vocab));
      out.log_probs.push_back(static_cast<double>(row[targets[pos]]) - mx - std::log(total));
    }
  }
  return out;
}

SequenceScore score_sequence(const ModelConfig& cfg, const Parameters& params,
                             std::span<const TokenId> context_ids,
                             std::span<const TokenId> target_ids,
                             const MemoryState& state, TokenId lead) {
  auto scores = score_tokens(cfg, params, context_ids, target_ids, state, lead);
  SequenceScore out;
  for (double lp : scores.log_probs) out.total_log_prob += lp;
  out.state = std::move(scores.state);
  return out;
}

MemoryState advance_state(const ModelConfig& cfg, const Parameters& params,
                          std::span<const TokenId> ids, MemoryState state) {
  for (std::size_t start = 0; start < ids.size(); start += cfg.segment_len) {
    const std::size_t len = std::min(cfg.segment_len, ids.size() - start);
    state = forward(cfg, params, ids.subspan(start, len), state).state;
  }
  return state;
}

}  // namespace rtlm::lm
