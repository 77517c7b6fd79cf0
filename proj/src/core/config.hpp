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

// Experiment configuration: flat `key = value` text, '#' starts a comment.
// Entries are kept verbatim and resolved into typed settings on demand, so
// command-line overrides can be layered on top of a file. Relative paths in a
// file are taken relative to the file's directory.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "core/model.hpp"
#include "core/rescoring.hpp"
#include "core/training.hpp"

namespace rtlm::inline RTLM_PRECISION {

enum class ContextMode { kDocument, kUtterance };

std::string to_string(ContextMode m);
ContextMode parse_context_mode(const std::string& s);

struct Experiment {
  lm::ModelConfig model;
  lm::TrainConfig train;
  scoring::RescoreConfig rescore;
  std::string train_corpus;
  std::string valid_corpus;
  std::string test_corpus;
  std::string checkpoint;
  std::string loss_csv;
  std::string nbest;
  std::string out;
  std::size_t min_count = 1;
  lm::InitScheme init = lm::InitScheme::kRandom;
  ContextMode context_mode = ContextMode::kDocument;
  bool insert_eos = true;
  std::uint64_t seed = 1;
};

class ExperimentConfig {
 public:
  static ExperimentConfig parse(const std::string& text, const std::string& base_dir = "");
  static ExperimentConfig load(const std::string& path);

  // Throws Error(kInvalidArgument) for unknown keys.
  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Model settings start from default_config(arch) so that unset keys keep
  // the per-architecture defaults. Throws on malformed or inconsistent values.
  Experiment resolve() const;

  static bool is_known_key(const std::string& key);

 private:
  void set_at(const std::string& key, const std::string& value, std::size_t line,
              const std::string& base_dir);
  std::map<std::string, std::string> entries_;
};

}  // namespace rtlm
