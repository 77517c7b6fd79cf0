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

// Built-in checks run by `rtlm self-test`: finite-difference gradient checks
// of the primitives and blocks in double precision, plus small oracles for
// the scoring code. Defined by the double-precision core only.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rtlm {

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

using CheckLog = std::function<void(const CheckOutcome&)>;

std::vector<CheckOutcome> run_self_test(std::uint64_t seed, std::size_t seeds = 3,
                                        const CheckLog& log = {});

}  // namespace rtlm
