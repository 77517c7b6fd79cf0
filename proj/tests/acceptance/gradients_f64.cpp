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

#include <chrono>

#include "criteria.hpp"
#include "gradient_suite.hpp"

namespace rtlm::acceptance {

GradientReport run_gradient_suite(std::size_t seeds) {
  const auto start = std::chrono::steady_clock::now();
  GradientReport report;
  for (const auto& c : testing::gradient_suite()) {
    const auto r = testing::run_case(c, 1, seeds);
    report.cases.push_back({c.name, r.worst_error, r.valid_seeds, r.skipped_seeds});
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace rtlm::acceptance
