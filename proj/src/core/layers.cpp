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

#include "core/layers.hpp"

#include <cmath>
#include <vector>

#include "core/errors.hpp"

namespace rtlm::inline RTLM_PRECISION::nn {

std::string to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "linear";
}

Activation parse_activation(const std::string& s) {
  if (s == "linear") return Activation::kLinear;
  if (s == "relu") return Activation::kRelu;
  throw Error(ErrorCode::kInvalidArgument, "unknown activation '" + s + "'");
}

std::string to_string(NormPlacement p) {
  return p == NormPlacement::kPre ? "pre" : "post";
}

NormPlacement parse_norm_placement(const std::string& s) {
  if (s == "post") return NormPlacement::kPost;
  if (s == "pre") return NormPlacement::kPre;
  throw Error(ErrorCode::kInvalidArgument, "unknown norm placement '" + s + "'");
}

Tensor embed(std::span<const TokenId> ids, const Tensor& table) {
  return embedding(ids, table);
}

Tensor sinusoid_distances(std::size_t count, std::size_t d_model) {
  std::vector<Real> v(count * d_model, 0.0F);
  const std::size_t half = d_model / 2;
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq =
          std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d_model));
      const double angle = static_cast<double>(k) * freq;
      v[k * d_model + i] = static_cast<Real>(std::sin(angle));
      v[k * d_model + half + i] = static_cast<Real>(std::cos(angle));
    }
  }
  return Tensor::from({count, d_model}, std::move(v));
}

Tensor attention(const Tensor& x, const std::optional<Tensor>& memory,
                 const AttentionParams& p) {
  if (x.ndim() != 2) throw ShapeError("attention: x must be 2-D, got " + shape_string(x.shape()));
  const std::size_t steps = x.rows(), d = x.cols();
  if (p.w_q.ndim() != 2 || p.w_q.rows() != d)
    throw ShapeError("attention: input width " + std::to_string(d) +
                     " does not match W_q " + shape_string(p.w_q.shape()));
  if (p.n_heads == 0 || d % p.n_heads != 0)
    throw ShapeError("attention: width " + std::to_string(d) +
                     " not divisible by " + std::to_string(p.n_heads) + " heads");
  std::size_t mem_rows = 0;
  if (memory && memory->defined() && memory->rows() > 0) {
    if (memory->ndim() != 2 || memory->cols() != d)
      throw ShapeError("attention: memory " + shape_string(memory->shape()) +
                       " does not match input width " + std::to_string(d));
    mem_rows = memory->rows();
  }
  const std::size_t keys = mem_rows + steps;
  const std::size_t d_k = d / p.n_heads;

  Tensor context = x;
  if (mem_rows > 0) {
    const Tensor parts[] = {*memory, x};
    context = concat_rows(parts);
  }
  const Tensor q = matmul(x, p.w_q);
  const Tensor k = matmul(context, p.w_k);
  const Tensor v = matmul(context, p.w_v);
  const Tensor r = matmul(sinusoid_distances(keys, d), p.w_r);
  const Real inv_sqrt_dk = 1.0F / std::sqrt(static_cast<Real>(d_k));

  std::vector<Tensor> heads;
  heads.reserve(p.n_heads);
  for (std::size_t h = 0; h < p.n_heads; ++h) {
    const std::size_t off = h * d_k;
    const Tensor qh = slice_cols(q, off, d_k);
    const Tensor kh = slice_cols(k, off, d_k);
    const Tensor vh = slice_cols(v, off, d_k);
    const Tensor rh = slice_cols(r, off, d_k);
    const Tensor content =
        matmul(add_row(qh, slice_cols(p.u_bias, off, d_k)), transpose(kh));
    const Tensor position = relative_shift(
        matmul(add_row(qh, slice_cols(p.v_bias, off, d_k)), transpose(rh)),
        mem_rows);
    const Tensor probs =
        masked_softmax_rows(scale(add(content, position), inv_sqrt_dk), mem_rows);
    heads.push_back(matmul(probs, vh));
  }
  return matmul(concat_cols(heads), p.w_o);
}

Tensor causal_mha(const Tensor& x, const std::optional<Tensor>& memory,
                  const AttentionParams& p) {
  return add(x, attention(x, memory, p));
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
  const Tensor hidden = relu(add_row(matmul(x, p.w_1), p.b_1));
  return add_row(matmul(hidden, p.w_2), p.b_2);
}

Tensor ffn_block(const Tensor& x, const FeedForwardParams& ffn,
                 const LayerNormParams& norm, NormPlacement placement,
                 Real dropout_rate, std::mt19937_64* rng) {
  auto drop = [&](const Tensor& t) {
    return (rng != nullptr && dropout_rate > 0.0F) ? dropout(t, dropout_rate, *rng) : t;
  };
  if (placement == NormPlacement::kPre)
    return add(x, drop(feed_forward(layer_norm(x, norm.gamma, norm.beta, norm.eps), ffn)));
  return layer_norm(add(x, drop(feed_forward(x, ffn))), norm.gamma, norm.beta, norm.eps);
}

LstmResult lstm_forward(const Tensor& x, const Tensor& h0, const Tensor& c0,
                        const LstmParams& p) {
  if (x.ndim() != 2) throw ShapeError("lstm_forward: x must be 2-D, got " + shape_string(x.shape()));
  const std::size_t hidden = p.w_hh.rows();
  const std::size_t steps = x.rows();
  if (p.w_ih.ndim() != 2 || p.w_ih.rows() != x.cols() || p.w_ih.cols() != 4 * hidden ||
      p.w_hh.cols() != 4 * hidden || p.bias.size() != 4 * hidden)
    throw ShapeError("lstm_forward: input " + shape_string(x.shape()) +
                     " incompatible with W_ih " + shape_string(p.w_ih.shape()) +
                     ", W_hh " + shape_string(p.w_hh.shape()) + ", b " +
                     shape_string(p.bias.shape()));
  if (h0.size() != hidden || c0.size() != hidden)
    throw ShapeError("lstm_forward: state " + shape_string(h0.shape()) + "/" +
                     shape_string(c0.shape()) + " does not match hidden size " +
                     std::to_string(hidden));
  if (steps == 0) return {Tensor::zeros({0, hidden}), h0, c0};

  const Tensor projected = add_row(matmul(x, p.w_ih), p.bias);
  Tensor h = reshape(h0, {1, hidden});
  Tensor c = reshape(c0, {1, hidden});
  std::vector<Tensor> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor gates = add(slice_rows(projected, t, 1), matmul(h, p.w_hh));
    const Tensor in_gate = sigmoid(slice_cols(gates, 0, hidden));
    const Tensor forget_gate = sigmoid(slice_cols(gates, hidden, hidden));
    const Tensor candidate = tanh(slice_cols(gates, 2 * hidden, hidden));
    const Tensor out_gate = sigmoid(slice_cols(gates, 3 * hidden, hidden));
    c = add(mul(forget_gate, c), mul(in_gate, candidate));
    h = mul(out_gate, tanh(c));
    outputs.push_back(h);
  }
  return {concat_rows(outputs), reshape(h, {hidden}), reshape(c, {hidden})};
}

Tensor fusion(const Tensor& x_lstm, const Tensor& x, const FusionParams& p) {
  if (x_lstm.shape() != x.shape())
    throw ShapeError("fusion: LSTM output " + shape_string(x_lstm.shape()) +
                     " and block input " + shape_string(x.shape()) + " differ");
  const Tensor pre =
      add_row(add(matmul(x_lstm, p.w_c), matmul(x, p.u_c)), p.b_c);
  return p.activation == Activation::kRelu ? relu(pre) : pre;
}

}  // namespace rtlm::nn
