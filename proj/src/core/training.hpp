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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "core/corpus.hpp"
#include "core/model.hpp"

namespace rtlm::inline RTLM_PRECISION::lm {

enum class Optimizer { kSgd, kAdam };

std::string to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;
  std::size_t warmup_steps = 100;
  // Shuffles document order each epoch. Segments inside a document always
  // stay in order so the carried state is meaningful.
  bool shuffle_documents = true;
  // 0 logs one row per epoch; otherwise also every log_every steps.
  std::size_t log_every = 0;

  void validate() const;
};

struct LossRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double ppl = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> log;      // all rows, in order
  std::vector<double> epoch_loss;   // token-averaged loss per epoch
  std::size_t steps = 0;
};

// Global L2 norm over the gradients of every parameter.
double gradient_norm(const Parameters& params);

// Rescales gradients so their global norm is at most max_norm. Returns the
// norm before clipping.
double clip_gradients(Parameters& params, double max_norm);

class OptimizerState {
 public:
  explicit OptimizerState(const TrainConfig& tc) : tc_(tc) {}
  void step(Parameters& params, double learning_rate);
  std::size_t steps() const { return t_; }

 private:
  TrainConfig tc_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

using ProgressFn = std::function<void(const LossRecord&)>;

// Segment-stream training with state carried inside each document and reset
// at document boundaries.
TrainResult train(const ModelConfig& cfg, Parameters& params,
                  std::span<const text::SegmentStream> streams,
                  const TrainConfig& tc, const ProgressFn& progress = {});

struct NllTotals {
  double nll = 0.0;
  std::size_t tokens = 0;
};

NllTotals evaluate_nll(const ModelConfig& cfg, const Parameters& params,
                       std::span<const text::SegmentStream> streams,
                       std::size_t threads = 1);

// exp(total NLL / unmasked tokens) with state carried inside documents.
double evaluate_ppl(const ModelConfig& cfg, const Parameters& params,
                    std::span<const text::SegmentStream> streams,
                    std::size_t threads = 1);

void write_loss_csv(const std::string& path, std::span<const LossRecord> log);

}  // namespace rtlm::lm
