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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "core/model.hpp"
#include "core/tensor.hpp"

namespace rtlm::inline RTLM_PRECISION::testing {

inline Tensor uniform_tensor(Shape shape, std::mt19937_64& rng, double bound = 1.0,
                             bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<Real> v(shape_size(shape));
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Entries with magnitude in [0.2, 1], so a step of 1e-3 never crosses zero.
inline Tensor nonzero_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.2, 1.0);
  std::bernoulli_distribution neg(0.5);
  std::vector<Real> v(shape_size(shape));
  for (auto& x : v) x = static_cast<Real>(neg(rng) ? -mag(rng) : mag(rng));
  return Tensor::from(std::move(shape), std::move(v), false);
}

inline Tensor identity(std::size_t n) {
  std::vector<Real> v(n * n, Real(0));
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = Real(1);
  return Tensor::from({n, n}, std::move(v));
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

inline double max_abs_diff(std::span<const Real> a, std::span<const Real> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return worst;
}

// Compact configuration that keeps model tests fast.
inline lm::ModelConfig small_config(lm::Architecture arch, std::size_t vocab = 12,
                                    std::size_t segment_len = 4) {
  auto cfg = lm::default_config(arch, vocab);
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.segment_len = segment_len;
  cfg.ffn_inner = 16;
  return cfg;
}

inline const std::vector<lm::Architecture>& all_architectures() {
  static const std::vector<lm::Architecture> archs = {
      lm::Architecture::kTlm,          lm::Architecture::kTlmXl,
      lm::Architecture::kRtlmDirect,   lm::Architecture::kRtlmFused,
      lm::Architecture::kRtlmDirectXl, lm::Architecture::kRtlmFusedXl,
      lm::Architecture::kLstmLm};
  return archs;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("rtlm-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    const auto p = file(name);
    std::ofstream(p) << text;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace rtlm::testing
