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

#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "core/errors.hpp"
#include "core/layers.hpp"
#include "fixtures.hpp"

using namespace rtlm;
using testing::bit_equal;
using testing::identity;
using testing::uniform_tensor;

namespace {

nn::AttentionParams random_attention(std::size_t d, std::size_t heads, std::mt19937_64& rng) {
  nn::AttentionParams p;
  p.n_heads = heads;
  for (Tensor* w : {&p.w_q, &p.w_k, &p.w_v, &p.w_o, &p.w_r}) *w = uniform_tensor({d, d}, rng, 0.6);
  p.u_bias = uniform_tensor({d}, rng, 0.5);
  p.v_bias = uniform_tensor({d}, rng, 0.5);
  return p;
}

Tensor rows(const Tensor& x, std::size_t start, std::size_t count) {
  return slice_rows(x, start, count);
}

nn::LstmParams zero_lstm(std::size_t d) {
  return {Tensor::zeros({d, 4 * d}), Tensor::zeros({d, 4 * d}), Tensor::zeros({4 * d})};
}

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("embed picks table rows") {
  const std::vector<nn::TokenId> first = {0};
  const Tensor e = nn::embed(first, identity(3));
  CHECK(bit_equal(e, Tensor::from({1, 3}, {1, 0, 0})));

  Tensor table = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  const std::vector<nn::TokenId> twice = {2, 2};
  Tape tape;
  {
    TapeScope scope(tape);
    const Tensor out = nn::embed(twice, table);
    CHECK(bit_equal(out, Tensor::from({2, 2}, {5, 6, 5, 6})));
    tape.backward(sum(out));
  }
  const std::vector<Real> expect = {0, 0, 0, 0, 2, 2};
  CHECK(table.grad() == expect);

  const std::vector<nn::TokenId> bad = {5};
  CHECK_THROWS_AS(nn::embed(bad, Tensor::zeros({4, 2})), IndexError);
}

TEST_CASE("single query attends to itself with weight one") {
  std::mt19937_64 rng(1);
  const auto p = random_attention(8, 2, rng);
  const Tensor x = uniform_tensor({1, 8}, rng);
  const Tensor out = nn::causal_mha(x, std::nullopt, p);
  const Tensor expect = add(x, matmul(matmul(x, p.w_v), p.w_o));
  CHECK(testing::max_abs_diff(out.data(), expect.data()) < 1e-6);
}

TEST_CASE("later inputs leave earlier outputs untouched") {
  std::mt19937_64 rng(2);
  const auto p = random_attention(8, 2, rng);
  Tensor x = uniform_tensor({4, 8}, rng);
  const Tensor mem = uniform_tensor({3, 8}, rng);
  for (const auto& memory : {std::optional<Tensor>{}, std::optional<Tensor>{mem}}) {
    const Tensor base = nn::causal_mha(x, memory, p);
    Tensor moved = Tensor::from(x.shape(), {x.data().begin(), x.data().end()});
    for (std::size_t c = 0; c < 8; ++c) moved.mutable_data()[2 * 8 + c] += 0.75F;
    const Tensor out = nn::causal_mha(moved, memory, p);
    CHECK(bit_equal(rows(out, 0, 2), rows(base, 0, 2)));
    CHECK_FALSE(bit_equal(rows(out, 2, 1), rows(base, 2, 1)));
  }
}

TEST_CASE("attention with memory equals the suffix of a full pass") {
  for (std::uint64_t seed : {3, 4, 5}) {
    std::mt19937_64 rng(seed);
    const auto p = random_attention(8, 2, rng);
    const Tensor full = uniform_tensor({4, 8}, rng);
    const Tensor mem = rows(full, 0, 2), cur = rows(full, 2, 2);
    const Tensor oracle = rows(nn::causal_mha(full, std::nullopt, p), 2, 2);
    const Tensor out = nn::causal_mha(cur, mem, p);
    CHECK(testing::max_abs_diff(out.data(), oracle.data()) < 1e-5);
  }
}

TEST_CASE("attention weights over memory and input form distributions") {
  // Every key row carries the same value, so each output row equals that
  // value exactly when the weights of the row sum to one.
  std::mt19937_64 rng(6);
  const auto p = random_attention(8, 4, rng);
  const Tensor r = uniform_tensor({1, 8}, rng);
  const Tensor xs[] = {r, r, r};
  const Tensor x = concat_rows(xs);
  const Tensor ms[] = {r, r};
  const Tensor mem = concat_rows(ms);
  const Tensor out = nn::attention(x, mem, p);
  const Tensor value = matmul(matmul(r, p.w_v), p.w_o);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 8; ++c)
      CHECK(std::abs(out.at(i, c) - value.at(0, c)) <= 1e-6 * (1 + std::abs(value.at(0, c))));
}

TEST_CASE("attention rejects mismatched widths") {
  std::mt19937_64 rng(7);
  const auto p = random_attention(8, 2, rng);
  CHECK_THROWS_AS(nn::causal_mha(Tensor::zeros({2, 6}), std::nullopt, p), ShapeError);
  CHECK_THROWS_AS(nn::causal_mha(Tensor::zeros({2, 8}), Tensor::zeros({2, 4}), p), ShapeError);
}

TEST_CASE("ffn block with zero weights is the residual path") {
  std::mt19937_64 rng(8);
  const Tensor x = uniform_tensor({3, 4}, rng);
  const nn::FeedForwardParams zero{Tensor::zeros({4, 16}), Tensor::zeros({16}),
                                   Tensor::zeros({16, 4}), Tensor::zeros({4})};
  const nn::LayerNormParams unit{Tensor::full({4}, 1), Tensor::zeros({4}), Real(1e-5)};
  CHECK(bit_equal(nn::ffn_block(x, zero, unit, nn::NormPlacement::kPre), x));
  // post-norm normalizes the residual sum, which is x itself here
  CHECK(bit_equal(nn::ffn_block(x, zero, unit, nn::NormPlacement::kPost),
                  layer_norm(x, unit.gamma, unit.beta, unit.eps)));
}

TEST_CASE("pre-norm ffn block adds FFN of the normalized input") {
  std::mt19937_64 rng(9);
  const Tensor x = uniform_tensor({3, 4}, rng);
  const nn::FeedForwardParams f{uniform_tensor({4, 16}, rng), uniform_tensor({16}, rng),
                                uniform_tensor({16, 4}, rng), uniform_tensor({4}, rng)};
  const nn::LayerNormParams n{uniform_tensor({4}, rng), uniform_tensor({4}, rng), Real(1e-5)};
  const Tensor out = nn::ffn_block(x, f, n, nn::NormPlacement::kPre);
  // components recomputed by hand
  const Tensor xhat = layer_norm(x, n.gamma, n.beta, n.eps);
  const Tensor hidden = relu(add_row(matmul(xhat, f.w_1), f.b_1));
  const Tensor ffn = add_row(matmul(hidden, f.w_2), f.b_2);
  const Tensor delta = sub(out, x);
  CHECK(testing::max_abs_diff(delta.data(), ffn.data()) < 1e-6);

  const Tensor post = nn::ffn_block(x, f, n, nn::NormPlacement::kPost);
  const Tensor oracle = layer_norm(add(x, nn::feed_forward(x, f)), n.gamma, n.beta, n.eps);
  CHECK(testing::max_abs_diff(post.data(), oracle.data()) < 1e-6);
}

TEST_CASE("lstm with zero parameters and state outputs zeros") {
  std::mt19937_64 rng(10);
  const auto r = nn::lstm_forward(uniform_tensor({3, 4}, rng), Tensor::zeros({4}),
                                  Tensor::zeros({4}), zero_lstm(4));
  for (Real v : r.outputs.data()) CHECK(v == 0.0F);
  for (Real v : r.h.data()) CHECK(v == 0.0F);
  for (Real v : r.c.data()) CHECK(v == 0.0F);
}

TEST_CASE("lstm run in two halves matches one run") {
  std::mt19937_64 rng(11);
  const std::size_t d = 5;
  const nn::LstmParams p{uniform_tensor({d, 4 * d}, rng), uniform_tensor({d, 4 * d}, rng),
                         uniform_tensor({4 * d}, rng)};
  const Tensor x = uniform_tensor({4, d}, rng);
  const Tensor h0 = uniform_tensor({d}, rng), c0 = uniform_tensor({d}, rng);
  const auto whole = nn::lstm_forward(x, h0, c0, p);
  const auto a = nn::lstm_forward(rows(x, 0, 2), h0, c0, p);
  const auto b = nn::lstm_forward(rows(x, 2, 2), a.h, a.c, p);
  const Tensor parts[] = {a.outputs, b.outputs};
  CHECK(testing::max_abs_diff(concat_rows(parts).data(), whole.outputs.data()) <= 1e-6);
  CHECK(testing::max_abs_diff(b.h.data(), whole.h.data()) <= 1e-6);
  CHECK(testing::max_abs_diff(b.c.data(), whole.c.data()) <= 1e-6);
}

TEST_CASE("a forget bias of +10 keeps the cell state") {
  const std::size_t d = 4;
  auto p = zero_lstm(d);
  // gate order input, forget, candidate, output; zero candidate adds nothing
  for (std::size_t j = d; j < 2 * d; ++j) p.bias.mutable_data()[j] = 10.0F;
  std::mt19937_64 rng(12);
  const Tensor c0 = uniform_tensor({d}, rng);
  const auto r = nn::lstm_forward(uniform_tensor({3, d}, rng), Tensor::zeros({d}), c0, p);
  CHECK(testing::max_abs_diff(r.c.data(), c0.data()) < 1e-3);
}

TEST_CASE("lstm rejects inconsistent shapes") {
  CHECK_THROWS_AS(nn::lstm_forward(Tensor::zeros({2, 3}), Tensor::zeros({4}), Tensor::zeros({4}),
                                   zero_lstm(4)),
                  ShapeError);
  CHECK_THROWS_AS(nn::lstm_forward(Tensor::zeros({2, 4}), Tensor::zeros({3}), Tensor::zeros({4}),
                                   zero_lstm(4)),
                  ShapeError);
}

TEST_CASE("fusion examples") {
  std::mt19937_64 rng(13);
  const Tensor xl = uniform_tensor({3, 4}, rng), x = uniform_tensor({3, 4}, rng);
  const nn::FusionParams shortcut{Tensor::zeros({4, 4}), identity(4), Tensor::zeros({4}),
                                  nn::Activation::kLinear};
  CHECK(bit_equal(nn::fusion(xl, x, shortcut), x));
  const nn::FusionParams lstm_path{identity(4), Tensor::zeros({4, 4}), Tensor::zeros({4}),
                                   nn::Activation::kLinear};
  CHECK(bit_equal(nn::fusion(xl, x, lstm_path), xl));
  const nn::FusionParams dead{uniform_tensor({4, 4}, rng), uniform_tensor({4, 4}, rng),
                              Tensor::full({4}, -1000), nn::Activation::kRelu};
  const Tensor saturated = nn::fusion(xl, x, dead);
  for (Real v : saturated.data()) CHECK(v == 0.0F);
  CHECK_THROWS_AS(nn::fusion(xl, Tensor::zeros({2, 4}), shortcut), ShapeError);
}

TEST_CASE("sinusoid distance table") {
  const Tensor s = nn::sinusoid_distances(3, 4);
  CHECK(s.rows() == 3);
  CHECK(s.cols() == 4);
  // distance 0: sin parts 0, cos parts 1
  CHECK(s.at(0, 0) == 0.0F);
  CHECK(s.at(0, 2) == 1.0F);
  CHECK(s.at(1, 0) == doctest::Approx(std::sin(1.0)));
}

TEST_CASE("activation and norm placement names round-trip") {
  for (auto a : {nn::Activation::kLinear, nn::Activation::kRelu})
    CHECK(nn::parse_activation(nn::to_string(a)) == a);
  for (auto p : {nn::NormPlacement::kPost, nn::NormPlacement::kPre})
    CHECK(nn::parse_norm_placement(nn::to_string(p)) == p);
  CHECK_THROWS_AS(nn::parse_activation("gelu"), Error);
}

}  // TEST_SUITE
