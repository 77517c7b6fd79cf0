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

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// Operations record themselves on the thread's active Tape (see TapeScope)
// whenever at least one input requires a gradient. Without an active tape the
// same functions compute values only, which is how evaluation and rescoring
// run. There is no implicit broadcasting apart from add_row(), which adds a
// vector to every row.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "core/precision.hpp"

namespace rtlm::inline RTLM_PRECISION {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatmul,
  kTranspose,
  kReshape,
  kAdd,
  kSub,
  kAddRow,
  kMul,
  kScale,
  kSigmoid,
  kTanh,
  kRelu,
  kConcatCols,
  kSliceCols,
  kConcatRows,
  kSliceRows,
  kEmbedding,
  kSoftmaxRows,
  kMaskedSoftmaxRows,
  kLogSoftmaxRows,
  kLayerNorm,
  kRelativeShift,
  kSum,
  kCrossEntropy,
  kDropout,
  kStopGradient,
};

const char* op_name(OpKind op);

struct Node {
  Shape shape;
  std::vector<Real> value;
  // Empty until a backward pass reaches the node; same length as value after.
  std::vector<Real> grad;
  bool requires_grad = false;
  OpKind op = OpKind::kLeaf;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<Real>& ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> values,
                     bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t size() const { return node().value.size(); }
  // Treats a 1-D tensor as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const Real> data() const { return node().value; }
  std::span<Real> mutable_data() { return node().value; }
  Real item() const;
  Real at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool on) { node().requires_grad = on; }
  bool has_grad() const { return !node().grad.empty(); }
  // Zeros when no gradient has been accumulated yet.
  std::vector<Real> grad() const;
  std::span<Real> mutable_grad() { return node().ensure_grad(); }
  void zero_grad() { node().grad.clear(); }

  OpKind op() const { return node().op; }
  // Value copy that is not connected to any tape.
  Tensor detach() const;
  // Runs backward on the thread's active tape.
  void backward() const;

  Node& node() const;
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Ordered record of executed operations. Backward replays it in reverse, so
// every recorded op is visited exactly once per call.
class Tape {
 public:
  void record(std::shared_ptr<Node> node);
  // Leaf gradients accumulate across calls; intermediate gradients are reset.
  void backward(const Tensor& loss);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  std::span<const std::shared_ptr<Node>> nodes() const { return nodes_; }
  bool contains(const Node* node) const;

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Shorthand for active_tape()->backward(loss).
void backward(const Tensor& loss);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// x[m x n] + bias[n] on every row.
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor embedding(std::span<const std::uint32_t> ids, const Tensor& table);
Tensor softmax_rows(const Tensor& x);
// Row i keeps columns j <= offset + i; the rest get probability exactly 0.
Tensor masked_softmax_rows(const Tensor& x, std::size_t offset);
Tensor log_softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Real eps);
// out[i][j] = x[i][offset + i - j] for j <= offset + i, else 0. Turns scores
// indexed by distance into scores indexed by key position.
Tensor relative_shift(const Tensor& x, std::size_t offset);
Tensor sum(const Tensor& x);
// Mean negative log-likelihood over positions with mask != 0. Returns 0 when
// every position is masked.
Tensor cross_entropy_logits(const Tensor& logits,
                            std::span<const std::uint32_t> targets,
                            std::span<const std::uint8_t> mask);
Tensor dropout(const Tensor& x, Real rate, std::mt19937_64& rng);
// Forward identity; contributes nothing to the gradient of x.
Tensor stop_gradient(const Tensor& x);

}  // namespace rtlm
