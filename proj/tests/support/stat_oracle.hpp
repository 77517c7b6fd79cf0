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

#include <cmath>
#include <span>

#include "core/precision.hpp"

namespace rtlm::inline RTLM_PRECISION::testing {

// Standard normal density integrated over [0, |z|] with composite Simpson's
// rule; the two-tailed p-value is 1 - 2 * that area.
inline double simpson_two_tailed_p(double z, int intervals = 20000) {
  const double b = std::fabs(z);
  if (b == 0.0) return 1.0;
  const double h = b / intervals;
  auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
  double s = phi(0.0) + phi(b);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * phi(i * h);
  return 1.0 - 2.0 * (s * h / 3.0);
}

// Paired z statistic over the non-zero differences, written out directly.
inline double paired_z(std::span<const double> d) {
  double n = 0, sum = 0, sum_sq = 0;
  for (double x : d) {
    if (x == 0.0) continue;
    n += 1;
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double var = (sum_sq - n * mean * mean) / (n - 1);
  return mean / std::sqrt(var / n);
}

}  // namespace rtlm::testing
