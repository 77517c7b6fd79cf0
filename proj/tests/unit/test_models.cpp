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
#include <set>
#include <vector>

#include <doctest.h>

#include "core/checkpoint.hpp"
#include "core/errors.hpp"
#include "core/model.hpp"
#include "fixtures.hpp"

using namespace rtlm;
using lm::Architecture;
using testing::bit_equal;
using testing::small_config;

namespace {

using Ids = std::vector<lm::TokenId>;

void jitter(lm::Parameters& params, std::uint64_t seed, double amount = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-amount, amount);
  for (auto& [name, t] : params)
    for (auto& v : t.mutable_data()) v += static_cast<Real>(d(rng));
}

// The parameters of `cfg` taken from `source` (same names, same values).
lm::Parameters shared_subset(const lm::ModelConfig& cfg, const lm::Parameters& source) {
  lm::Parameters out;
  for (const auto& [name, t] : lm::init_parameters(cfg, 0)) out.emplace(name, source.at(name));
  return out;
}

void make_shortcut_fusion(const lm::ModelConfig& cfg, lm::Parameters& params) {
  for (std::size_t b : cfg.lstm_blocks) {
    const std::string p = "block." + std::to_string(b) + ".fusion.";
    auto w = params.at(p + "W_c").mutable_data();
    std::fill(w.begin(), w.end(), Real(0));
    auto u = params.at(p + "U_c").mutable_data();
    std::fill(u.begin(), u.end(), Real(0));
    for (std::size_t i = 0; i < cfg.d_model; ++i) u[i * cfg.d_model + i] = Real(1);
    auto bias = params.at(p + "b_c").mutable_data();
    std::fill(bias.begin(), bias.end(), Real(0));
  }
}

double row_prob_sum(const Tensor& logits, std::size_t r) {
  const auto sm = softmax_rows(logits);
  double total = 0.0;
  for (std::size_t c = 0; c < sm.cols(); ++c) total += sm.at(r, c);
  return total;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("default configurations and validation") {
  const auto fused = lm::default_config(Architecture::kRtlmFused, 100);
  CHECK(fused.lstm_blocks == std::set<std::size_t>{2});
  CHECK(fused.n_blocks == 3);
  const auto direct = lm::default_config(Architecture::kRtlmDirectXl, 100);
  CHECK(direct.lstm_blocks == std::set<std::size_t>{0});
  CHECK(direct.n_blocks == 2);
  CHECK(direct.d_model == 64);
  CHECK(direct.n_heads == 4);
  CHECK(direct.segment_len == 16);
  CHECK(direct.ffn_dim() == 256);

  auto bad = small_config(Architecture::kRtlmDirect);
  bad.lstm_blocks = {5};
  CHECK_THROWS_AS(bad.validate(), ContractError);
  auto heads = small_config(Architecture::kTlm);
  heads.n_heads = 3;
  CHECK_THROWS_AS(heads.validate(), ContractError);
  auto stray = small_config(Architecture::kTlmXl);
  stray.lstm_blocks = {0};
  CHECK_THROWS_AS(stray.validate(), ContractError);
  auto lstm = small_config(Architecture::kLstmLm);
  lstm.lstm_blocks = {0};
  CHECK_THROWS_AS(lstm.validate(), ContractError);
}

TEST_CASE("architecture names round-trip") {
  for (auto arch : testing::all_architectures())
    CHECK(lm::parse_architecture(lm::to_string(arch)) == arch);
  CHECK_THROWS_AS(lm::parse_architecture("gpt"), Error);
}

TEST_CASE("parameters are complete and checked") {
  for (auto arch : testing::all_architectures()) {
    const auto cfg = small_config(arch);
    auto params = lm::init_parameters(cfg, 1);
    CHECK_NOTHROW(lm::check_parameters(cfg, params));
    CHECK(lm::parameter_count(params) > 0);
    params.erase(params.begin());
    CHECK_THROWS_AS(lm::check_parameters(cfg, params), ContractError);
  }
}

TEST_CASE("shortcut fusion reduces to the plain transformer bit for bit") {
  const std::pair<Architecture, Architecture> pairs[] = {
      {Architecture::kRtlmFused, Architecture::kTlm},
      {Architecture::kRtlmFusedXl, Architecture::kTlmXl}};
  for (auto [rtlm_arch, tlm_arch] : pairs) {
    const auto rcfg = small_config(rtlm_arch, 12, 4);
    auto tcfg = rcfg;
    tcfg.arch = tlm_arch;
    tcfg.lstm_blocks.clear();
    auto rparams = lm::init_parameters(rcfg, 21);
    jitter(rparams, 22);
    make_shortcut_fusion(rcfg, rparams);
    const auto tparams = shared_subset(tcfg, rparams);
    auto rstate = lm::init_state(rcfg);
    auto tstate = lm::init_state(tcfg);
    for (const Ids& seg : {Ids{0, 3, 4, 5}, Ids{6, 7, 8, 9}, Ids{10, 11}}) {
      auto r = lm::forward(rcfg, rparams, seg, rstate);
      auto t = lm::forward(tcfg, tparams, seg, tstate);
      CHECK(bit_equal(r.logits, t.logits));
      rstate = std::move(r.state);
      tstate = std::move(t.state);
    }
  }
}

TEST_CASE("single-block XL second segment equals the suffix of a full pass") {
  auto xl = small_config(Architecture::kTlmXl, 12, 2);
  xl.n_blocks = 1;
  auto full = xl;
  full.arch = Architecture::kTlm;
  full.segment_len = 4;
  auto params = lm::init_parameters(xl, 31);
  jitter(params, 32);
  const Ids ids = {0, 5, 7, 2};
  const auto first = lm::forward(xl, params, Ids{0, 5}, lm::init_state(xl));
  const auto second = lm::forward(xl, params, Ids{7, 2}, first.state);
  const auto oracle = slice_rows(lm::forward(full, params, ids, lm::init_state(full)).logits, 2, 2);
  CHECK(testing::max_abs_diff(second.logits.data(), oracle.data()) < 1e-5);
}

TEST_CASE("output rows are distributions for every architecture") {
  for (auto arch : testing::all_architectures()) {
    const auto cfg = small_config(arch);
    auto params = lm::init_parameters(cfg, 4);
    jitter(params, 5, 1.0);
    const auto out = lm::forward(cfg, params, Ids{0, 1, 2, 3}, lm::init_state(cfg));
    for (std::size_t r = 0; r < 4; ++r) {
      CHECK(std::abs(row_prob_sum(out.logits, r) - 1.0) <= 1e-6);
      const auto lsm = log_softmax_rows(out.logits);
      for (std::size_t c = 0; c < lsm.cols(); ++c) CHECK(std::isfinite(lsm.at(r, c)));
    }
  }
}

TEST_CASE("forward enforces segment length and state shape") {
  const auto cfg = small_config(Architecture::kTlmXl, 12, 4);
  const auto params = lm::init_parameters(cfg, 1);
  CHECK_THROWS_AS(lm::forward(cfg, params, Ids{0, 1, 2, 3, 4}, lm::init_state(cfg)),
                  ContractError);
  const auto rcfg = small_config(Architecture::kRtlmDirectXl, 12, 4);
  const auto rstate = lm::forward(rcfg, lm::init_parameters(rcfg, 1), Ids{0, 1}, lm::init_state(rcfg)).state;
  CHECK_THROWS_AS(lm::forward(cfg, params, Ids{0}, rstate), ContractError);
  lm::MemoryState wide;
  wide.block_memory[0] = Tensor::zeros({2, 6});
  CHECK_THROWS_AS(lm::check_state(cfg, wide), ContractError);
}

TEST_CASE("init_state examples") {
  const auto tlm = lm::init_state(small_config(Architecture::kTlm));
  CHECK(tlm.block_memory.empty());
  CHECK(tlm.lstm.empty());

  const auto cfg = small_config(Architecture::kRtlmDirectXl);
  const auto s = lm::init_state(cfg);
  CHECK(s.block_memory.empty());
  REQUIRE(s.lstm.size() == 1);
  const auto& hc = s.lstm.at(0);
  CHECK(hc.h.size() == cfg.d_model);
  for (Real v : hc.h.data()) CHECK(v == 0.0F);
  for (Real v : hc.c.data()) CHECK(v == 0.0F);

  const auto params = lm::init_parameters(cfg, 2);
  auto state = s;
  for (int i = 0; i < 3; ++i) {
    state = lm::forward(cfg, params, Ids{0, 1, 2, 3}, state).state;
    CHECK_NOTHROW(lm::check_state(cfg, state));
    CHECK(state.lstm.at(0).h.shape() == hc.h.shape());
    CHECK(state.block_memory.at(0).rows() == cfg.segment_len);
  }
}

TEST_CASE("score_sequence examples") {
  const auto cfg = small_config(Architecture::kRtlmFusedXl, 9, 4);
  const auto params = lm::init_parameters(cfg, 3);
  const auto empty = lm::score_sequence(cfg, params, Ids{1, 2}, Ids{}, lm::init_state(cfg));
  CHECK(empty.total_log_prob == 0.0);

  for (auto arch : testing::all_architectures()) {
    const auto c = small_config(arch, 9, 4);
    const auto zero = lm::init_parameters(c, 3, lm::InitScheme::kZero);
    const Ids target = {3, 4, 5, 6, 7, 8, 2};
    const auto r = lm::score_sequence(c, zero, Ids{1, 2}, target, lm::init_state(c));
    CHECK(r.total_log_prob == doctest::Approx(7 * std::log(1.0 / 9)).epsilon(1e-9));
  }
}

TEST_CASE("lstm_lm scores a long sequence identically in chunks") {
  auto chunked = small_config(Architecture::kLstmLm, 11, 4);
  chunked.lstm_lm_layers = 2;
  auto whole = chunked;
  whole.segment_len = 12;
  auto params = lm::init_parameters(chunked, 8);
  jitter(params, 9);
  const Ids target = {3, 4, 5, 6, 7, 8, 9, 10, 2, 3, 4, 0};
  const auto a = lm::score_sequence(chunked, params, Ids{}, target, lm::init_state(chunked));
  const auto b = lm::score_sequence(whole, params, Ids{}, target, lm::init_state(whole));
  CHECK(std::abs(a.total_log_prob - b.total_log_prob) <= 1e-4);
}

TEST_CASE("lstm_lm examples") {
  const auto cfg = small_config(Architecture::kLstmLm, 6, 4);
  const auto zero = lm::init_parameters(cfg, 1, lm::InitScheme::kZero);
  const auto out = lm::forward(cfg, zero, Ids{0, 1, 2}, lm::init_state(cfg));
  for (Real v : out.logits.data()) CHECK(v == 0.0F);

  auto params = lm::init_parameters(cfg, 2);
  jitter(params, 3);
  const auto whole = lm::lstm_lm_forward(cfg, params, Ids{0, 3, 4, 5}, lm::init_state(cfg));
  const auto a = lm::lstm_lm_forward(cfg, params, Ids{0, 3}, lm::init_state(cfg));
  const auto b = lm::lstm_lm_forward(cfg, params, Ids{4, 5}, a.state);
  const Tensor parts[] = {a.logits, b.logits};
  CHECK(testing::max_abs_diff(concat_rows(parts).data(), whole.logits.data()) <= 1e-6);
  CHECK_THROWS_AS(lm::lstm_lm_forward(small_config(Architecture::kTlm), params, Ids{0},
                                      lm::init_state(cfg)),
                  ContractError);
}

TEST_CASE("carried state changes the next segment's predictions") {
  for (auto arch : testing::all_architectures()) {
    if (arch == Architecture::kTlm) continue;
    const auto cfg = small_config(arch, 12, 4);
    auto params = lm::init_parameters(cfg, 12);
    jitter(params, 13);
    const auto first = lm::forward(cfg, params, Ids{0, 3, 4, 5}, lm::init_state(cfg));
    const auto carried = lm::forward(cfg, params, Ids{6, 7, 8, 9}, first.state);
    const auto fresh = lm::forward(cfg, params, Ids{6, 7, 8, 9}, lm::init_state(cfg));
    CAPTURE(lm::to_string(arch));
    CHECK(testing::max_abs_diff(carried.logits.data(), fresh.logits.data()) > 1e-4);
  }
}

TEST_CASE("carried state receives no gradient but does move the loss") {
  for (auto arch : {Architecture::kTlmXl, Architecture::kRtlmDirectXl,
                    Architecture::kRtlmFusedXl, Architecture::kLstmLm}) {
    const auto cfg = small_config(arch, 12, 4);
    auto params = lm::init_parameters(cfg, 14);
    jitter(params, 15);
    auto state = lm::forward(cfg, params, Ids{0, 3, 4, 5}, lm::init_state(cfg)).state;
    std::vector<Tensor> carried;
    for (auto& [b, m] : state.block_memory) carried.push_back(m);
    for (auto& [b, hc] : state.lstm) {
      carried.push_back(hc.h);
      carried.push_back(hc.c);
    }
    for (auto& t : carried) t.set_requires_grad(true);

    const Ids seg = {6, 7, 8, 9}, targets = {7, 8, 9, 10};
    const std::vector<std::uint8_t> mask(4, 1);
    auto loss_value = [&] {
      return double(cross_entropy_logits(lm::forward(cfg, params, seg, state).logits, targets, mask).item());
    };
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(cross_entropy_logits(lm::forward(cfg, params, seg, state).logits, targets, mask));
    }
    CAPTURE(lm::to_string(arch));
    for (const auto& t : carried) {
      CHECK_FALSE(t.has_grad());
      for (Real g : t.grad()) CHECK(g == 0.0F);
    }
    // parameters do receive gradient
    CHECK(params.at("embedding").has_grad());

    const double base = loss_value();
    auto values = carried.front().mutable_data();
    values[0] += 0.5F;
    CHECK(loss_value() != base);
    values[0] -= 0.5F;
  }
}

TEST_CASE("checkpoints round-trip bit for bit") {
  testing::TempDir dir("ckpt");
  for (auto arch : testing::all_architectures()) {
    auto cfg = small_config(arch, 15, 4);
    cfg.tie_embeddings = arch != Architecture::kLstmLm;
    auto params = lm::init_parameters(cfg, 40);
    jitter(params, 41);
    const auto path = dir.file(lm::to_string(arch) + ".ckpt");
    lm::save_checkpoint(path, cfg, params);
    const auto loaded = lm::load_checkpoint(path);
    CHECK(lm::model_config_entries(loaded.config) == lm::model_config_entries(cfg));
    REQUIRE(loaded.params.size() == params.size());
    for (const auto& [name, t] : params) CHECK(bit_equal(loaded.params.at(name), t));
    const auto again = dir.file("again.ckpt");
    lm::save_checkpoint(again, loaded.config, loaded.params);
    CHECK(testing::read_file(again + ".bin") == testing::read_file(path + ".bin"));
    CHECK(testing::read_file(again) == testing::read_file(path));
  }
  CHECK_THROWS_AS(lm::load_checkpoint(dir.file("missing.ckpt")), IoError);
  dir.write("broken.ckpt", "not a checkpoint\n");
  CHECK_THROWS(lm::load_checkpoint(dir.file("broken.ckpt")));
}

}  // TEST_SUITE
