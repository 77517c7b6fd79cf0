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
#include <string>
#include <string_view>
#include <vector>

#include "core/precision.hpp"

namespace rtlm::inline RTLM_PRECISION {

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_whitespace(std::string_view s);
std::string to_lower(std::string_view s);

// Strict numeric parsing; `line` is reported in the ParseError (0 = none).
std::size_t parse_size(std::string_view s, std::size_t line = 0);
double parse_double(std::string_view s, std::size_t line = 0);
bool parse_bool(std::string_view s, std::size_t line = 0);

}  // namespace rtlm
