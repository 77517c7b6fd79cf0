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

// Tape gradients against central finite differences, in double precision.

#include <doctest.h>

#include "gradient_suite.hpp"

using namespace rtlm;
using testing::gradient_suite;

TEST_CASE("every primitive and block matches central differences") {
  for (const auto& c : gradient_suite()) {
    const auto r = testing::run_case(c, 11, 3);
    CAPTURE(c.name);
    CAPTURE(r.skipped_seeds);
    CHECK(r.valid_seeds == 3);
    CHECK(r.worst_error < 1e-3);
  }
}

TEST_CASE("kink detection flags a relu input that changes sign within the step") {
  Tensor x = Tensor::from({1, 2}, {Real(0.0004), Real(0.7)});
  const auto r = testing::compare_gradients([&] { return sum(relu(x)); }, {x});
  CHECK(r.crossed_kink);
  Tensor y = Tensor::from({1, 2}, {Real(0.4), Real(-0.7)});
  const auto s = testing::compare_gradients([&] { return sum(relu(y)); }, {y});
  CHECK_FALSE(s.crossed_kink);
  CHECK(s.relative_error < 1e-9);
}

TEST_CASE("matmul backward with unit upstream is ones times b transposed") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(matmul(a, b)));
  }
  // ones(2x2) * b^T: row sums of b
  const std::vector<Real> expect_a = {11, 15, 11, 15};
  // a^T * ones(2x2): column sums of a
  const std::vector<Real> expect_b = {4, 4, 6, 6};
  CHECK(a.grad() == expect_a);
  CHECK(b.grad() == expect_b);
  const auto cmp = testing::compare_gradients([&] { return sum(matmul(a, b)); }, {a, b});
  CHECK(cmp.relative_error < 1e-3);
}
