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

// Scalar type of tensor values. Builds with RTLM_USE_F64 compute in double
// and place their symbols in rtlm::f64, so a binary can link both variants.

#if defined(RTLM_USE_F64)
#define RTLM_PRECISION f64
#else
#define RTLM_PRECISION f32
#endif

namespace rtlm::inline RTLM_PRECISION {

#if defined(RTLM_USE_F64)
using Real = double;
#else
using Real = float;
#endif

}  // namespace rtlm::inline RTLM_PRECISION
