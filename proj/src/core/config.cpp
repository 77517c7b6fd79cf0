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

#include "core/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "core/checkpoint.hpp"
#include "core/errors.hpp"
#include "core/strings.hpp"

namespace rtlm::inline RTLM_PRECISION {

namespace {

const std::set<std::string> kModelKeys = {
    "arch",         "n_blocks",     "d_model",         "n_heads",
    "segment_len",  "lstm_blocks",  "fusion_activation", "vocab_size",
    "ffn_inner",    "norm_placement", "tie_embeddings", "dropout",
    "layer_norm_eps", "lstm_lm_layers", "lstm_lm_hidden"};

const std::set<std::string> kPathKeys = {"train_corpus", "valid_corpus", "test_corpus",
                                         "checkpoint",   "loss_csv",     "nbest",
                                         "out"};

const std::set<std::string> kOtherKeys = {
    "learning_rate", "optimizer",    "beta1",        "beta2",         "epsilon",
    "clip_norm",     "epochs",       "warmup_steps", "shuffle_documents", "log_every",
    "lm_scale",      "interp_weight", "history_mode", "min_count",    "init",
    "context_mode",  "insert_eos",   "seed"};

}  // namespace

std::string to_string(ContextMode m) {
  return m == ContextMode::kUtterance ? "utterance" : "document";
}

ContextMode parse_context_mode(const std::string& s) {
  if (s == "document") return ContextMode::kDocument;
  if (s == "utterance") return ContextMode::kUtterance;
  throw Error(ErrorCode::kInvalidArgument, "unknown context mode '" + s + "'");
}

bool ExperimentConfig::is_known_key(const std::string& key) {
  return kModelKeys.count(key) || kPathKeys.count(key) || kOtherKeys.count(key);
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& base_dir) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (!is_known_key(key)) throw ParseError(line_no, "unknown config key '" + key + "'");
    cfg.set_at(key, value, line_no, base_dir);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), std::filesystem::path(path).parent_path().string());
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (!is_known_key(key))
    throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
  set_at(key, value, 0, "");
}

void ExperimentConfig::set_at(const std::string& key, const std::string& value, std::size_t line,
                              const std::string& base_dir) {
  if (value.empty()) throw ParseError(line, "empty value for '" + key + "'");
  std::string v = value;
  if (kPathKeys.count(key) && !base_dir.empty() && std::filesystem::path(v).is_relative())
    v = (std::filesystem::path(base_dir) / v).lexically_normal().string();
  entries_[key] = v;
}

std::optional<std::string> ExperimentConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

Experiment ExperimentConfig::resolve() const {
  Experiment e;
  const auto arch = lm::parse_architecture(get("arch").value_or("tlm"));
  e.model = lm::default_config(arch, e.model.vocab_size);
  for (const auto& [key, value] : entries_) {
    if (kModelKeys.count(key)) {
      if (key != "arch") lm::apply_model_config_entry(e.model, key, value);
    } else if (key == "train_corpus") {
      e.train_corpus = value;
    } else if (key == "valid_corpus") {
      e.valid_corpus = value;
    } else if (key == "test_corpus") {
      e.test_corpus = value;
    } else if (key == "checkpoint") {
      e.checkpoint = value;
    } else if (key == "loss_csv") {
      e.loss_csv = value;
    } else if (key == "nbest") {
      e.nbest = value;
    } else if (key == "out") {
      e.out = value;
    } else if (key == "learning_rate") {
      e.train.learning_rate = parse_double(value);
    } else if (key == "optimizer") {
      e.train.optimizer = lm::parse_optimizer(value);
    } else if (key == "beta1") {
      e.train.beta1 = parse_double(value);
    } else if (key == "beta2") {
      e.train.beta2 = parse_double(value);
    } else if (key == "epsilon") {
      e.train.epsilon = parse_double(value);
    } else if (key == "clip_norm") {
      e.train.clip_norm = parse_double(value);
    } else if (key == "epochs") {
      e.train.epochs = parse_size(value);
    } else if (key == "warmup_steps") {
      e.train.warmup_steps = parse_size(value);
    } else if (key == "shuffle_documents") {
      e.train.shuffle_documents = parse_bool(value);
    } else if (key == "log_every") {
      e.train.log_every = parse_size(value);
    } else if (key == "lm_scale") {
      e.rescore.lm_scale = parse_double(value);
    } else if (key == "interp_weight") {
      e.rescore.interp_weight = parse_double(value);
    } else if (key == "history_mode") {
      e.rescore.history_mode = scoring::parse_history_mode(value);
    } else if (key == "min_count") {
      e.min_count = parse_size(value);
    } else if (key == "init") {
      if (value == "random") {
        e.init = lm::InitScheme::kRandom;
      } else if (value == "zero") {
        e.init = lm::InitScheme::kZero;
      } else {
        throw Error(ErrorCode::kInvalidArgument, "unknown init scheme '" + value + "'");
      }
    } else if (key == "context_mode") {
      e.context_mode = parse_context_mode(value);
    } else if (key == "insert_eos") {
      e.insert_eos = parse_bool(value);
    } else if (key == "seed") {
      e.seed = parse_size(value);
    }
  }
  e.train.seed = e.seed;
  e.train.validate();
  e.rescore.validate();
  return e;
}

}  // namespace rtlm
