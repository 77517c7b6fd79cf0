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

#include "core/precision.hpp"

namespace rtlm::inline RTLM_PRECISION::kernels {

// All matrices are row-major and C is accumulated into (C += ...). Each output
// row depends only on the matching row of the left operand, with a fixed
// summation order, so results are independent of how many rows are computed
// together.

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const Real* a,
             const Real* b, Real* c);
// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const Real* a,
             const Real* b, Real* c);
// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const Real* a,
             const Real* b, Real* c);

}  // namespace rtlm::kernels
