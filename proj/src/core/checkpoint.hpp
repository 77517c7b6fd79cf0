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

// Checkpoints are two files: a text manifest at `path` and a little-endian
// float32 blob at `path + ".bin"`. The manifest carries the model
// configuration and one line per parameter:
//
//   rtlm-checkpoint 1
//   config arch=rtlm_d_xl
//   ...
//   param block.0.attn.W_q 64,64 16384
//
// where the last two fields are the shape and the byte offset in the blob.

#include <string>
#include <utility>
#include <vector>

#include "core/model.hpp"

namespace rtlm::inline RTLM_PRECISION::lm {

std::vector<std::pair<std::string, std::string>> model_config_entries(
    const ModelConfig& cfg);

// Returns false when the key is not a model setting.
bool apply_model_config_entry(ModelConfig& cfg, const std::string& key,
                              const std::string& value);

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const Parameters& params);

Model load_checkpoint(const std::string& path);

}  // namespace rtlm::lm
