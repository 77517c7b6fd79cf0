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

#include "core/selftest.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "core/corpus.hpp"
#include "core/errors.hpp"
#include "core/gradcheck.hpp"
#include "core/layers.hpp"
#include "core/model.hpp"
#include "core/rescoring.hpp"

namespace rtlm {

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, Real bound = 1.0F) {
  std::uniform_real_distribution<Real> dist(-bound, bound);
  std::vector<Real> v(shape_size(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Values bounded away from zero so relu kinks stay out of the stencil.
Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<Real> dist(0.2F, 1.0F);
  std::bernoulli_distribution sign(0.5);
  std::vector<Real> v(shape_size(shape));
  for (auto& x : v) x = sign(rng) ? dist(rng) : -dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Scalar probe sum(y * r) with a fixed random r.
Tensor probe(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor r = random_tensor(y.shape(), rng);
  r.set_requires_grad(false);
  return sum(mul(y, r));
}

constexpr double kGradTolerance = 1e-3;

struct GradCase {
  std::string name;
  std::function<double(std::uint64_t)> run;
};

std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;
  auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> f, bool kinked) {
    cases.push_back({name, [f, kinked](std::uint64_t seed) {
                       std::mt19937_64 rng(seed);
                       Tensor x = kinked ? away_from_zero({3, 5}, rng) : random_tensor({3, 5}, rng);
                       return max_gradient_error([&] { return probe(f(x), seed + 1); }, {x});
                     }});
  };
  unary("sigmoid", [](const Tensor& x) { return sigmoid(x); }, false);
  unary("tanh", [](const Tensor& x) { return tanh(x); }, false);
  unary("relu", [](const Tensor& x) { return relu(x); }, true);
  unary("softmax_rows", [](const Tensor& x) { return softmax_rows(x); }, false);
  unary("log_softmax_rows", [](const Tensor& x) { return log_softmax_rows(x); }, false);
  unary("masked_softmax_rows", [](const Tensor& x) { return masked_softmax_rows(x, 1); }, false);
  unary("relative_shift", [](const Tensor& x) { return relative_shift(x, 2); }, false);
  unary("transpose", [](const Tensor& x) { return transpose(x); }, false);
  unary("slice", [](const Tensor& x) { return slice_rows(slice_cols(x, 1, 3), 1, 2); }, false);

  cases.push_back({"matmul", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
                     return max_gradient_error([&] { return probe(matmul(a, b), seed); }, {a, b});
                   }});
  cases.push_back({"add_row_mul", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
                     Tensor c = random_tensor({4}, rng);
                     return max_gradient_error(
                         [&] { return probe(add_row(mul(a, sub(b, scale(a, 0.5F))), c), seed); },
                         {a, b, c});
                   }});
  cases.push_back({"concat", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 2}, rng);
                     return max_gradient_error(
                         [&] {
                           const Tensor cols[] = {a, b};
                           const Tensor wide = concat_cols(cols);
                           const Tensor rows[] = {wide, wide};
                           return probe(tanh(concat_rows(rows)), seed);
                         },
                         {a, b});
                   }});
  cases.push_back({"layer_norm", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Tensor x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng);
                     Tensor b = random_tensor({6}, rng);
                     return max_gradient_error([&] { return probe(layer_norm(x, g, b, 1e-5F), seed); },
                                               {x, g, b});
                   }});
  cases.push_back({"embedding_cross_entropy", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Tensor table = random_tensor({6, 4}, rng), w = random_tensor({4, 6}, rng);
                     const std::vector<std::uint32_t> ids = {1, 5, 0, 3};
                     const std::vector<std::uint32_t> targets = {2, 0, 5, 1};
                     const std::vector<std::uint8_t> mask = {1, 1, 0, 1};
                     return max_gradient_error(
                         [&] { return cross_entropy_logits(matmul(embedding(ids, table), w), targets, mask); },
                         {table, w});
                   }});
  cases.push_back({"attention", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t d = 8;
                     nn::AttentionParams p;
                     p.n_heads = 2;
                     p.w_q = random_tensor({d, d}, rng, 0.5F);
                     p.w_k = random_tensor({d, d}, rng, 0.5F);
                     p.w_v = random_tensor({d, d}, rng, 0.5F);
                     p.w_o = random_tensor({d, d}, rng, 0.5F);
                     p.w_r = random_tensor({d, d}, rng, 0.5F);
                     p.u_bias = random_tensor({d}, rng, 0.5F);
                     p.v_bias = random_tensor({d}, rng, 0.5F);
                     Tensor x = random_tensor({3, d}, rng), mem = random_tensor({2, d}, rng);
                     return max_gradient_error(
                         [&] { return probe(nn::causal_mha(x, mem, p), seed); },
                         {x, mem, p.w_q, p.w_k, p.w_v, p.w_o, p.w_r, p.u_bias, p.v_bias});
                   }});
  for (auto placement : {nn::NormPlacement::kPost, nn::NormPlacement::kPre}) {
    cases.push_back({"ffn_block_" + nn::to_string(placement), [placement](std::uint64_t seed) {
                       std::mt19937_64 rng(seed);
                       nn::FeedForwardParams f{random_tensor({4, 8}, rng), random_tensor({8}, rng),
                                               random_tensor({8, 4}, rng), random_tensor({4}, rng)};
                       nn::LayerNormParams n{random_tensor({4}, rng), random_tensor({4}, rng), 1e-5F};
                       Tensor x = random_tensor({3, 4}, rng);
                       return max_gradient_error(
                           [&] { return probe(nn::ffn_block(x, f, n, placement), seed); },
                           {x, f.w_1, f.b_1, f.w_2, f.b_2, n.gamma, n.beta});
                     }});
  }
  cases.push_back({"lstm", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     nn::LstmParams p{random_tensor({3, 16}, rng, 0.5F), random_tensor({4, 16}, rng, 0.5F),
                                      random_tensor({16}, rng, 0.5F)};
                     Tensor x = random_tensor({4, 3}, rng), h0 = random_tensor({4}, rng);
                     Tensor c0 = random_tensor({4}, rng);
                     return max_gradient_error(
                         [&] {
                           auto r = nn::lstm_forward(x, h0, c0, p);
                           return add(add(probe(r.outputs, seed), probe(r.h, seed + 1)),
                                      probe(r.c, seed + 2));
                         },
                         {x, h0, c0, p.w_ih, p.w_hh, p.bias});
                   }});
  for (auto act : {nn::Activation::kLinear, nn::Activation::kRelu}) {
    cases.push_back({"fusion_" + nn::to_string(act), [act](std::uint64_t seed) {
                       std::mt19937_64 rng(seed);
                       nn::FusionParams p{random_tensor({4, 4}, rng), random_tensor({4, 4}, rng),
                                          random_tensor({4}, rng), act};
                       Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
                       if (act == nn::Activation::kRelu) {
                         // Keep pre-activations off the kink.
                         auto pre = add_row(add(matmul(a, p.w_c), matmul(b, p.u_c)), p.b_c);
                         auto bias = p.b_c.mutable_data();
                         for (std::size_t j = 0; j < 4; ++j) {
                           Real nearest = 1e9F;
                           for (std::size_t i = 0; i < 3; ++i)
                             if (std::fabs(pre.at(i, j)) < std::fabs(nearest)) nearest = pre.at(i, j);
                           if (std::fabs(nearest) < 0.2F) bias[j] += nearest >= 0 ? 0.3F : -0.3F;
                         }
                       }
                       return max_gradient_error([&] { return probe(nn::fusion(a, b, p), seed); },
                                                 {a, b, p.w_c, p.u_c, p.b_c});
                     }});
  }
  cases.push_back({"rtlm_segment_loss", [](std::uint64_t seed) {
                     auto cfg = lm::default_config(lm::Architecture::kRtlmFusedXl, 10);
                     cfg.d_model = 8;
                     cfg.n_heads = 2;
                     cfg.segment_len = 4;
                     cfg.ffn_inner = 8;
                     auto params = lm::init_parameters(cfg, seed);
                     std::mt19937_64 rng(seed);
                     std::uniform_real_distribution<Real> jitter(-0.2F, 0.2F);
                     for (auto& [name, t] : params)
                       for (auto& v : t.mutable_data()) v += jitter(rng);
                     const std::vector<std::uint32_t> first = {0, 4, 5, 2}, second = {7, 3, 9, 0};
                     const auto state = lm::forward(cfg, params, first, lm::init_state(cfg)).state;
                     const std::vector<std::uint32_t> targets = {3, 9, 0, 6};
                     const std::vector<std::uint8_t> mask(4, 1);
                     std::vector<Tensor> inputs;
                     for (auto& [name, t] : params) inputs.push_back(t);
                     return max_gradient_error(
                         [&] {
                           return cross_entropy_logits(lm::forward(cfg, params, second, state).logits,
                                                       targets, mask);
                         },
                         inputs);
                   }});
  return cases;
}

std::vector<CheckOutcome> oracle_checks() {
  std::vector<CheckOutcome> out;
  {
    // Exhaustive edit distance over a 2-symbol alphabet up to length 4.
    std::vector<std::vector<std::string>> seqs = {{}};
    for (std::size_t len = 1; len <= 4; ++len)
      for (std::size_t code = 0; code < (1U << len); ++code) {
        std::vector<std::string> s;
        for (std::size_t i = 0; i < len; ++i) s.push_back((code >> i) & 1U ? "a" : "b");
        seqs.push_back(s);
      }
    std::function<std::size_t(std::span<const std::string>, std::span<const std::string>)> brute =
        [&](std::span<const std::string> r, std::span<const std::string> h) -> std::size_t {
      if (r.empty()) return h.size();
      if (h.empty()) return r.size();
      return std::min({brute(r.subspan(1), h.subspan(1)) + (r[0] == h[0] ? 0U : 1U),
                       brute(r.subspan(1), h) + 1, brute(r, h.subspan(1)) + 1});
    };
    bool ok = true;
    for (const auto& r : seqs)
      for (const auto& h : seqs) ok = ok && scoring::compute_wer(r, h).errors() == brute(r, h);
    out.push_back({"wer_exhaustive", ok, ""});
  }
  {
    const std::vector<double> a = {1, 2, 0, 3}, b = a;
    const auto r = scoring::mpsswe(a, b);
    out.push_back({"mpsswe_identical", r.z == 0.0 && r.p_value == 1.0 && !r.significant, ""});
  }
  {
    bool ok = true;
    for (double a : {-0.1, -2.0, -7.5})
      for (double b : {-0.3, -4.0})
        ok = ok && scoring::interpolate_log_prob(a, b, 1.0) == a &&
             scoring::interpolate_log_prob(a, b, 0.0) == b;
    const double mixed = scoring::interpolate_log_prob(std::log(0.2), std::log(0.5), 0.6);
    ok = ok && std::fabs(std::exp(mixed) - 0.32) < 1e-12;
    out.push_back({"interpolation", ok, ""});
  }
  {
    // Causality: changing a later token leaves earlier logits untouched.
    bool ok = true;
    for (auto arch : {lm::Architecture::kTlm, lm::Architecture::kRtlmFusedXl,
                      lm::Architecture::kLstmLm}) {
      auto cfg = lm::default_config(arch, 12);
      cfg.d_model = 8;
      cfg.n_heads = 2;
      cfg.segment_len = 6;
      const auto params = lm::init_parameters(cfg, 3);
      std::vector<std::uint32_t> ids = {0, 3, 4, 5, 6, 7};
      const auto base = lm::forward(cfg, params, ids, lm::init_state(cfg)).logits;
      ids[3] = 11;
      const auto moved = lm::forward(cfg, params, ids, lm::init_state(cfg)).logits;
      for (std::size_t i = 0; i < 3 * cfg.vocab_size; ++i)
        ok = ok && base.data()[i] == moved.data()[i];
    }
    out.push_back({"causality", ok, ""});
  }
  return out;
}

}  // namespace

std::vector<CheckOutcome> run_self_test(std::uint64_t seed, std::size_t seeds,
                                        const CheckLog& log) {
  std::vector<CheckOutcome> results;
  auto emit = [&](CheckOutcome c) {
    if (log) log(c);
    results.push_back(std::move(c));
  };
  for (const auto& c : gradient_cases()) {
    double worst = 0.0;
    std::string failure;
    for (std::size_t s = 0; s < seeds; ++s) {
      try {
        worst = std::max(worst, c.run(seed + s));
      } catch (const std::exception& e) {
        failure = e.what();
        break;
      }
    }
    std::ostringstream detail;
    detail << "max relative error " << worst;
    if (!failure.empty()) detail.str(failure);
    emit({"grad/" + c.name, failure.empty() && worst < kGradTolerance, detail.str()});
  }
  for (auto& c : oracle_checks()) {
    c.name = "oracle/" + c.name;
    emit(std::move(c));
  }
  return results;
}

}  // namespace rtlm
