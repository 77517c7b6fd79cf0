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

#include "core/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "core/errors.hpp"
#include "core/parallel.hpp"

namespace rtlm::inline RTLM_PRECISION::lm {

std::string to_string(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(const std::string& s) {
  if (s == "sgd") return Optimizer::kSgd;
  if (s == "adam") return Optimizer::kAdam;
  throw Error(ErrorCode::kInvalidArgument, "unknown optimizer '" + s + "'");
}

void TrainConfig::validate() const {
  // A zero rate is accepted so a run can be checked for side effects.
  if (!(learning_rate >= 0.0)) throw ContractError("train config: learning_rate must be >= 0");
  if (!(clip_norm > 0.0)) throw ContractError("train config: clip_norm must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ContractError("train config: adam betas must lie in [0, 1)");
}

double gradient_norm(const Parameters& params) {
  double total = 0.0;
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (Real g : t.node().grad) total += static_cast<double>(g) * g;
  }
  return std::sqrt(total);
}

double clip_gradients(Parameters& params, double max_norm) {
  const double norm = gradient_norm(params);
  if (norm > max_norm) {
    const auto factor = static_cast<Real>(max_norm / norm);
    for (auto& [name, t] : params) {
      if (!t.has_grad()) continue;
      for (auto& g : t.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

void OptimizerState::step(Parameters& params, double learning_rate) {
  ++t_;
  const double bias1 = 1.0 - std::pow(tc_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(tc_.beta2, static_cast<double>(t_));
  for (auto& [name, tensor] : params) {
    if (!tensor.has_grad()) continue;
    auto values = tensor.mutable_data();
    const auto& grad = tensor.node().grad;
    if (tc_.optimizer == Optimizer::kSgd) {
      for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = static_cast<Real>(values[i] - learning_rate * grad[i]);
      continue;
    }
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(values.size(), 0.0);
      v.assign(values.size(), 0.0);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m[i] = tc_.beta1 * m[i] + (1.0 - tc_.beta1) * g;
      v[i] = tc_.beta2 * v[i] + (1.0 - tc_.beta2) * g * g;
      const double update = (m[i] / bias1) / (std::sqrt(v[i] / bias2) + tc_.epsilon);
      values[i] = static_cast<Real>(values[i] - learning_rate * update);
    }
  }
}

TrainResult train(const ModelConfig& cfg, Parameters& params,
                  std::span<const text::SegmentStream> streams,
                  const TrainConfig& tc, const ProgressFn& progress) {
  cfg.validate();
  tc.validate();
  check_parameters(cfg, params);
  if (streams.empty()) throw ContractError("train: no segment streams");
  for (auto& [name, t] : params) t.set_requires_grad(true);

  std::mt19937_64 rng(tc.seed);
  OptimizerState optimizer(tc);
  TrainResult result;
  std::vector<std::size_t> order(streams.size());

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    if (tc.shuffle_documents) std::shuffle(order.begin(), order.end(), rng);
    double epoch_nll = 0.0, window_nll = 0.0;
    std::size_t epoch_tokens = 0, window_tokens = 0;

    for (std::size_t doc : order) {
      const auto& stream = streams[doc];
      MemoryState state = init_state(cfg);
      for (const auto& seg : stream.segments) {
        Tape tape;
        ForwardResult fwd;
        Tensor loss;
        {
          TapeScope scope(tape);
          fwd = forward(cfg, params, seg.inputs, state, {&rng});
          loss = cross_entropy_logits(fwd.logits, seg.targets, seg.mask);
          const double value = loss.item();
          if (!std::isfinite(value))
            throw NumericError("train: non-finite loss in document '" +
                               stream.document_id + "' segment " +
                               std::to_string(seg.index));
          for (auto& [name, t] : params) t.zero_grad();
          tape.backward(loss);
        }
        clip_gradients(params, tc.clip_norm);
        const double warm = tc.warmup_steps == 0
                                ? 1.0
                                : std::min(1.0, static_cast<double>(result.steps + 1) /
                                                    static_cast<double>(tc.warmup_steps));
        optimizer.step(params, tc.learning_rate * warm);
        ++result.steps;
        state = std::move(fwd.state);

        const auto count = static_cast<std::size_t>(
            std::count(seg.mask.begin(), seg.mask.end(), std::uint8_t{1}));
        const double nll = static_cast<double>(loss.item()) * static_cast<double>(count);
        epoch_nll += nll;
        epoch_tokens += count;
        window_nll += nll;
        window_tokens += count;
        if (tc.log_every > 0 && result.steps % tc.log_every == 0 && window_tokens > 0) {
          const double mean = window_nll / static_cast<double>(window_tokens);
          result.log.push_back({epoch, result.steps, mean, std::exp(mean)});
          if (progress) progress(result.log.back());
          window_nll = 0.0;
          window_tokens = 0;
        }
      }
    }
    const double mean = epoch_tokens ? epoch_nll / static_cast<double>(epoch_tokens) : 0.0;
    result.epoch_loss.push_back(mean);
    result.log.push_back({epoch, result.steps, mean, std::exp(mean)});
    if (progress) progress(result.log.back());
  }
  for (auto& [name, t] : params) t.zero_grad();
  return result;
}

NllTotals evaluate_nll(const ModelConfig& cfg, const Parameters& params,
                       std::span<const text::SegmentStream> streams, std::size_t threads) {
  std::vector<NllTotals> per_stream(streams.size());
  parallel_for(streams.size(), threads, [&](std::size_t i) {
    MemoryState state = init_state(cfg);
    NllTotals totals;
    for (const auto& seg : streams[i].segments) {
      auto fwd = forward(cfg, params, seg.inputs, state);
      state = std::move(fwd.state);
      const std::size_t vocab = fwd.logits.cols();
      auto lv = fwd.logits.data();
      for (std::size_t t = 0; t < seg.targets.size(); ++t) {
        if (!seg.mask[t]) continue;
        const Real* row = lv.data() + t * vocab;
        const Real mx = *std::max_element(row, row + vocab);
        double total = 0.0;
        for (std::size_t j = 0; j < vocab; ++j)
          total += std::exp(static_cast<double>(row[j]) - mx);
        totals.nll += mx + std::log(total) - row[seg.targets[t]];
        ++totals.tokens;
      }
    }
    per_stream[i] = totals;
  });
  NllTotals sum;
  for (const auto& t : per_stream) {
    sum.nll += t.nll;
    sum.tokens += t.tokens;
  }
  return sum;
}

double evaluate_ppl(const ModelConfig& cfg, const Parameters& params,
                    std::span<const text::SegmentStream> streams, std::size_t threads) {
  if (streams.empty()) throw ContractError("evaluate_ppl: no segment streams");
  const auto totals = evaluate_nll(cfg, params, streams, threads);
  if (totals.tokens == 0) throw ContractError("evaluate_ppl: no scored tokens");
  return std::exp(totals.nll / static_cast<double>(totals.tokens));
}

void write_loss_csv(const std::string& path, std::span<const LossRecord> log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss log '" + path + "'");
  out << "epoch,step,loss,ppl\n";
  out.precision(9);
  for (const auto& r : log) out << r.epoch << ',' << r.step << ',' << r.loss << ',' << r.ppl << '\n';
}

}  // namespace rtlm::lm
