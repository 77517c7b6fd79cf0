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

#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace rtlm::inline RTLM_PRECISION {

double max_gradient_error(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                          Real step) {
  for (auto& t : inputs) {
    if (!t.requires_grad()) throw ContractError("max_gradient_error: input without gradient");
    t.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(loss_fn());
  }
  auto eval = [&] { return static_cast<double>(loss_fn().item()); };
  double worst = 0.0;
  for (auto& t : inputs) {
    const auto analytic = t.grad();
    auto values = t.mutable_data();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real saved = values[i];
      auto at = [&](Real delta) {
        values[i] = saved + delta;
        return eval();
      };
      const double numeric =
          (-at(2 * step) + 8 * at(step) - 8 * at(-step) + at(-2 * step)) / (12.0 * step);
      values[i] = saved;
      const double d = analytic[i] - numeric;
      diff2 += d * d;
      a2 += static_cast<double>(analytic[i]) * analytic[i];
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

}  // namespace rtlm::inline RTLM_PRECISION
