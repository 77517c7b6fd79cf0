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

// Neural building blocks shared by every architecture. Vectors are rows and
// weights multiply from the right (y = x W).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>

#include "core/tensor.hpp"

namespace rtlm::inline RTLM_PRECISION::nn {

using TokenId = std::uint32_t;

enum class Activation { kLinear, kRelu };
enum class NormPlacement { kPost, kPre };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);
std::string to_string(NormPlacement p);
NormPlacement parse_norm_placement(const std::string& s);

// Per-head projections are stored joined: columns [h*d_k, (h+1)*d_k) of W_q,
// W_k and W_v belong to head h. Relative positions use a fixed sinusoidal
// distance encoding projected by W_r, plus the content bias u and the
// position bias v (one d_k slice per head).
struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o, w_r, u_bias, v_bias;
  std::size_t n_heads = 1;
};

struct LayerNormParams {
  Tensor gamma, beta;
  Real eps = 1e-5F;
};

struct FeedForwardParams {
  Tensor w_1, b_1, w_2, b_2;
};

// Gates are joined along columns in the order input, forget, candidate, output.
struct LstmParams {
  Tensor w_ih, w_hh, bias;
};

struct FusionParams {
  Tensor w_c, u_c, b_c;
  Activation activation = Activation::kLinear;
};

Tensor embed(std::span<const TokenId> ids, const Tensor& table);

// Row k encodes the distance k: [sin(k w_0) .. sin(k w_{d/2-1}), cos(...)].
Tensor sinusoid_distances(std::size_t count, std::size_t d_model);

// Multi-head attention output concat(heads) W_o, without the residual.
// Queries come from x; keys and values from [memory; x]. Query row i sits at
// absolute position M + i and sees key positions <= M + i.
Tensor attention(const Tensor& x, const std::optional<Tensor>& memory,
                 const AttentionParams& p);

// x + attention(x, memory).
Tensor causal_mha(const Tensor& x, const std::optional<Tensor>& memory,
                  const AttentionParams& p);

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p);

// kPost: norm(x + FFN(x)).  kPre: x + FFN(norm(x)).
Tensor ffn_block(const Tensor& x, const FeedForwardParams& ffn,
                 const LayerNormParams& norm, NormPlacement placement,
                 Real dropout_rate = 0.0F, std::mt19937_64* rng = nullptr);

struct LstmResult {
  Tensor outputs;  // T x d
  Tensor h;        // [d]
  Tensor c;        // [d]
};

LstmResult lstm_forward(const Tensor& x, const Tensor& h0, const Tensor& c0,
                        const LstmParams& p);

// f(x_lstm W_c + x U_c + b_c), row by row.
Tensor fusion(const Tensor& x_lstm, const Tensor& x, const FusionParams& p);

}  // namespace rtlm::nn
