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

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <doctest.h>

#include "core/corpus.hpp"
#include "core/errors.hpp"
#include "core/training.hpp"
#include "fixtures.hpp"

using namespace rtlm;
using lm::Architecture;
using testing::small_config;

namespace {

struct Data {
  text::Vocab vocab;
  std::vector<text::Document> docs;
};

Data load(const std::string& text_data) {
  std::istringstream in(text_data);
  Data d;
  d.docs = text::parse_corpus(in);
  d.vocab = text::build_vocab(d.docs, 1);
  return d;
}

std::string alternating(std::size_t docs, std::size_t words) {
  std::string out;
  for (std::size_t d = 0; d < docs; ++d) {
    for (std::size_t w = 0; w < words; ++w) out += (w % 2 ? "b " : "a ");
    out += "\n\n";
  }
  return out;
}

lm::TrainConfig quick(std::size_t epochs = 1) {
  lm::TrainConfig tc;
  tc.epochs = epochs;
  tc.seed = 7;
  tc.warmup_steps = 5;
  tc.learning_rate = 3e-3;
  return tc;
}

lm::Parameters copy_params(const lm::Parameters& p) {
  lm::Parameters out;
  for (const auto& [name, t] : p) out.emplace(name, t.detach());
  return out;
}

const char* kToyText =
    "the cat sat on the mat\nthe dog sat on the log\n\n"
    "a cat and a dog sat\nthe mat and the log\n\n"
    "the dog sat on the mat\nthe cat sat on the log\n\n";

}  // namespace

TEST_SUITE("training") {

TEST_CASE("alternating corpus is learned within 200 steps") {
  // 20 documents of 159 words plus eos: 10 segments of 16 each
  const auto d = load(alternating(20, 159));
  auto cfg = lm::default_config(Architecture::kTlm, d.vocab.size());
  const auto streams = text::make_streams(d.docs, d.vocab, cfg.segment_len);
  auto params = lm::init_parameters(cfg, 1);
  lm::TrainConfig tc;
  tc.epochs = 1;
  tc.seed = 1;
  const auto r = lm::train(cfg, params, streams, tc);
  CHECK(r.steps == 200);
  const double ppl = lm::evaluate_ppl(cfg, params, streams);
  MESSAGE("alternating corpus PPL after 200 steps: " << ppl);
  CHECK(ppl < 1.2);
}

TEST_CASE("a zero learning rate leaves parameters bit-identical") {
  const auto d = load(kToyText);
  for (auto arch : {Architecture::kTlm, Architecture::kRtlmFusedXl, Architecture::kLstmLm}) {
    const auto cfg = small_config(arch, d.vocab.size(), 4);
    auto params = lm::init_parameters(cfg, 2);
    const auto before = copy_params(params);
    auto tc = quick(2);
    tc.learning_rate = 0.0;
    lm::train(cfg, params, text::make_streams(d.docs, d.vocab, 4), tc);
    for (const auto& [name, t] : before) CHECK(testing::bit_equal(params.at(name), t));
  }
}

TEST_CASE("the same seed reproduces the loss log and parameters") {
  const auto d = load(kToyText);
  const auto cfg = small_config(Architecture::kRtlmDirectXl, d.vocab.size(), 4);
  const auto streams = text::make_streams(d.docs, d.vocab, 4);
  auto tc = quick(3);
  tc.log_every = 2;
  auto run = [&] {
    auto params = lm::init_parameters(cfg, 3);
    auto r = lm::train(cfg, params, streams, tc);
    return std::pair{r, params};
  };
  const auto [a, pa] = run();
  const auto [b, pb] = run();
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.log[i].step == b.log[i].step);
  }
  for (const auto& [name, t] : pa) CHECK(testing::bit_equal(pb.at(name), t));
}

TEST_CASE("a non-finite loss aborts with the document and segment") {
  const auto d = load(kToyText);
  const auto cfg = small_config(Architecture::kTlm, d.vocab.size(), 4);
  auto params = lm::init_parameters(cfg, 4);
  params.at("output.b").mutable_data()[0] = std::numeric_limits<Real>::infinity();
  const auto streams = text::make_streams(d.docs, d.vocab, 4);
  auto tc = quick();
  tc.shuffle_documents = false;
  try {
    lm::train(cfg, params, streams, tc);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("doc0") != std::string::npos);
    CHECK(msg.find("segment 0") != std::string::npos);
  }
}

TEST_CASE("a uniform model has perplexity V") {
  const auto d = load(kToyText);
  for (auto arch : testing::all_architectures()) {
    const auto cfg = small_config(arch, d.vocab.size(), 4);
    const auto zero = lm::init_parameters(cfg, 1, lm::InitScheme::kZero);
    const double ppl = lm::evaluate_ppl(cfg, zero, text::make_streams(d.docs, d.vocab, 4));
    CHECK(std::abs(ppl - double(d.vocab.size())) <= 1e-3);
  }
}

TEST_CASE("lstm_lm perplexity does not depend on the segment length") {
  const auto d = load(kToyText);
  auto c8 = small_config(Architecture::kLstmLm, d.vocab.size(), 8);
  auto c16 = c8;
  c16.segment_len = 16;
  auto params = lm::init_parameters(c8, 5);
  lm::train(c8, params, text::make_streams(d.docs, d.vocab, 8), quick(2));
  const double p8 = lm::evaluate_ppl(c8, params, text::make_streams(d.docs, d.vocab, 8));
  const double p16 = lm::evaluate_ppl(c16, params, text::make_streams(d.docs, d.vocab, 16));
  CHECK(std::abs(p8 - p16) <= 1e-4);
}

TEST_CASE("lstm_lm training loss is the same for one segment or chained segments") {
  const auto d = load("a b c d e f g h i j k\n");
  auto c4 = small_config(Architecture::kLstmLm, d.vocab.size(), 4);
  auto c12 = c4;
  c12.segment_len = 12;
  const auto params = lm::init_parameters(c4, 6);
  auto nll = [&](const lm::ModelConfig& cfg) {
    double total = 0.0;
    auto state = lm::init_state(cfg);
    for (const auto& seg : text::make_segments(d.docs[0], d.vocab, cfg.segment_len).segments) {
      Tape tape;
      TapeScope scope(tape);
      auto fwd = lm::forward(cfg, params, seg.inputs, state);
      const auto n = std::count(seg.mask.begin(), seg.mask.end(), 1);
      total += double(cross_entropy_logits(fwd.logits, seg.targets, seg.mask).item()) * n;
      state = fwd.state;
    }
    return total;
  };
  CHECK(std::abs(nll(c4) - nll(c12)) <= 1e-4);
}

TEST_CASE("training lowers held-out perplexity below the uniform model") {
  const auto train = load(kToyText);
  std::istringstream held("the cat sat on the mat\nthe dog sat on the log\n");
  const auto valid_docs = text::parse_corpus(held);
  for (auto arch : {Architecture::kTlmXl, Architecture::kRtlmFused, Architecture::kLstmLm}) {
    const auto cfg = small_config(arch, train.vocab.size(), 4);
    auto params = lm::init_parameters(cfg, 8);
    lm::train(cfg, params, text::make_streams(train.docs, train.vocab, 4), quick(15));
    const double ppl = lm::evaluate_ppl(cfg, params, text::make_streams(valid_docs, train.vocab, 4));
    CAPTURE(lm::to_string(arch));
    CHECK(ppl < double(train.vocab.size()));
  }
}

TEST_CASE("padded positions contribute nothing to loss or gradients") {
  const auto cfg = small_config(Architecture::kRtlmDirect, 10, 4);
  auto params = lm::init_parameters(cfg, 9);
  const std::vector<lm::TokenId> inputs = {0, 3, 4, 0};
  const std::vector<std::uint8_t> mask = {1, 1, 0, 0};
  auto run = [&](std::vector<lm::TokenId> targets) {
    for (auto& [n, t] : params) t.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    const Tensor loss =
        cross_entropy_logits(lm::forward(cfg, params, inputs, lm::init_state(cfg)).logits, targets, mask);
    tape.backward(loss);
    std::vector<Real> grads;
    for (const auto& [n, t] : params) {
      const auto g = t.grad();
      grads.insert(grads.end(), g.begin(), g.end());
    }
    return std::pair{double(loss.item()), grads};
  };
  const auto a = run({3, 4, 0, 0});
  const auto b = run({3, 4, 9, 7});
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("clipping bounds the global gradient norm") {
  const auto cfg = small_config(Architecture::kTlm, 10, 4);
  auto params = lm::init_parameters(cfg, 10);
  std::mt19937_64 rng(1);
  for (auto& [n, t] : params)
    for (auto& g : t.mutable_grad()) g = static_cast<Real>(std::uniform_real_distribution<>(-3, 3)(rng));
  const double before = lm::gradient_norm(params);
  for (double clip : {100.0, 5.0, 0.5, 1e-3}) {
    const double reported = lm::clip_gradients(params, clip);
    CHECK(reported >= lm::gradient_norm(params) - 1e-9);
    CHECK(lm::gradient_norm(params) <= clip + 1e-6);
  }
  CHECK(before > 5.0);
}

TEST_CASE("training configuration checks") {
  lm::TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  tc.clip_norm = 0;
  CHECK_THROWS_AS(tc.validate(), ContractError);
  tc = {};
  tc.learning_rate = -1;
  CHECK_THROWS_AS(tc.validate(), ContractError);
  tc = {};
  tc.beta1 = 1.0;
  CHECK_THROWS_AS(tc.validate(), ContractError);
  const auto cfg = small_config(Architecture::kTlm, 10, 4);
  auto params = lm::init_parameters(cfg, 1);
  CHECK_THROWS_AS(lm::train(cfg, params, {}, lm::TrainConfig{}), ContractError);
  CHECK(lm::parse_optimizer(lm::to_string(lm::Optimizer::kSgd)) == lm::Optimizer::kSgd);
}

TEST_CASE("sgd takes a plain gradient step") {
  const auto cfg = small_config(Architecture::kTlm, 10, 4);
  auto params = lm::init_parameters(cfg, 11);
  auto& b = params.at("output.b");
  b.mutable_grad()[0] = 2.0F;
  const Real before = b.data()[0];
  lm::TrainConfig tc;
  tc.optimizer = lm::Optimizer::kSgd;
  lm::OptimizerState opt(tc);
  opt.step(params, 0.25);
  CHECK(b.data()[0] == before - 0.5F);
  CHECK(opt.steps() == 1);
}

TEST_CASE("threaded evaluation matches the serial sum") {
  const auto d = load(kToyText);
  const auto cfg = small_config(Architecture::kRtlmFusedXl, d.vocab.size(), 4);
  const auto params = lm::init_parameters(cfg, 12);
  const auto streams = text::make_streams(d.docs, d.vocab, 4);
  const auto serial = lm::evaluate_nll(cfg, params, streams, 1);
  const auto threaded = lm::evaluate_nll(cfg, params, streams, 3);
  CHECK(serial.tokens == threaded.tokens);
  CHECK(serial.nll == threaded.nll);
}

TEST_CASE("loss log CSV") {
  testing::TempDir dir("loss");
  const std::vector<lm::LossRecord> log = {{1, 10, 2.0, std::exp(2.0)}};
  lm::write_loss_csv(dir.file("loss.csv"), log);
  const auto text_out = testing::read_file(dir.file("loss.csv"));
  CHECK(text_out.rfind("epoch,step,loss,ppl\n1,10,2,", 0) == 0);
}

}  // TEST_SUITE
