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

#include <functional>
#include <vector>

#include "core/tensor.hpp"

namespace rtlm::inline RTLM_PRECISION {

// Step suited to the scalar type: large enough to rise above rounding,
// small enough to keep the stencil off relu kinks.
inline constexpr Real kDefaultGradStep = sizeof(Real) == 8 ? Real(1e-5) : Real(1e-2);

// Largest norm-wise relative error ||g - n|| / max(||g||, ||n||) between the
// tape gradient g of loss_fn() and the fourth-order central difference n,
// taken per input and maximised over inputs. Inputs must be leaves with
// requires_grad set; their values are restored afterwards.
double max_gradient_error(const std::function<Tensor()>& loss_fn,
                          std::vector<Tensor> inputs, Real step = kDefaultGradStep);

}  // namespace rtlm::inline RTLM_PRECISION
