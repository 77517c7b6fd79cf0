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

#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "core/errors.hpp"
#include "core/kernels.hpp"

namespace rtlm::inline RTLM_PRECISION {

namespace {

thread_local Tape* g_active_tape = nullptr;

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

// Builds the output node and, when gradients are needed, wires it into the
// active tape.
Tensor make_result(Shape shape, std::vector<Real> value, OpKind op,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (any_requires_grad(inputs)) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->inputs.push_back(t->node_ptr());
    node->backward = std::move(backward_fn);
    g_active_tape->record(node);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of input i, or nullptr when that input is not trainable.
Real* input_grad(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  return in.ensure_grad().data();
}

void require_2d(const Tensor& x, const char* op) {
  if (x.ndim() != 2)
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " +
                     shape_string(x.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, OpKind op, Forward f, Derivative dfdy) {
  std::vector<Real> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result(x.shape(), std::move(out), op, {&x},
                     [dfdy](Node& self) {
                       Real* gx = input_grad(self, 0);
                       if (gx == nullptr) return;
                       const auto& xv = self.inputs[0]->value;
                       for (std::size_t i = 0; i < self.value.size(); ++i)
                         gx[i] += self.grad[i] * dfdy(xv[i], self.value[i]);
                     });
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kReshape: return "reshape";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kSliceRows: return "slice_rows";
    case OpKind::kEmbedding: return "embedding";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kMaskedSoftmaxRows: return "masked_softmax_rows";
    case OpKind::kLogSoftmaxRows: return "log_softmax_rows";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kRelativeShift: return "relative_shift";
    case OpKind::kSum: return "sum";
    case OpKind::kCrossEntropy: return "cross_entropy_logits";
    case OpKind::kDropout: return "dropout";
    case OpKind::kStopGradient: return "stop_gradient";
  }
  return "?";
}

std::vector<Real>& Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0F);
  return grad;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0F, requires_grad);
}

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value.assign(shape_size(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<Real> values, bool requires_grad) {
  if (shape_size(shape) != values.size())
    throw ShapeError("Tensor::from: shape " + shape_string(shape) + " needs " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(values.size()));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

Node& Tensor::node() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  if (s.empty()) return 1;
  if (s.size() == 1) return 1;
  return s[0];
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.empty()) return 1;
  return s.back();
}

Real Tensor::item() const {
  if (size() != 1)
    throw ContractError("item() on a tensor of shape " + shape_string(shape()));
  return node().value[0];
}

Real Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols())
    throw IndexError("at(" + std::to_string(r) + "," + std::to_string(c) +
                     ") outside " + shape_string(shape()));
  return node().value[r * cols() + c];
}

std::vector<Real> Tensor::grad() const {
  if (node().grad.empty()) return std::vector<Real>(size(), 0.0F);
  return node().grad;
}

Tensor Tensor::detach() const {
  return Tensor::from(shape(), node().value, false);
}

void Tensor::backward() const { rtlm::backward(*this); }

// ---------------------------------------------------------------------------
// Tape

void Tape::record(std::shared_ptr<Node> node) { nodes_.push_back(std::move(node)); }

bool Tape::contains(const Node* node) const {
  return std::any_of(nodes_.begin(), nodes_.end(),
                     [node](const auto& n) { return n.get() == node; });
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(loss.shape()));
  if (!contains(&loss.node())) {
    // Nothing that requires a gradient reaches a constant loss.
    if (!loss.requires_grad()) return;
    throw ContractError("backward: loss is not recorded on this tape");
  }
  for (auto& n : nodes_) n->grad.assign(n->value.size(), 0.0F);
  loss.node().grad[0] = 1.0F;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.backward) n.backward(n);
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss) {
  if (g_active_tape == nullptr)
    throw ContractError("backward: no active tape");
  g_active_tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw ShapeError("matmul: inner dimensions differ, " +
                     shape_string(a.shape()) + " x " + shape_string(b.shape()));
  std::vector<Real> out(m * n, 0.0F);
  kernels::gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
  return make_result({m, n}, std::move(out), OpKind::kMatmul, {&a, &b},
                     [m, k, n](Node& self) {
                       const Real* av = self.inputs[0]->value.data();
                       const Real* bv = self.inputs[1]->value.data();
                       if (Real* ga = input_grad(self, 0))
                         kernels::gemm_nt(m, n, k, self.grad.data(), bv, ga);
                       if (Real* gb = input_grad(self, 1))
                         kernels::gemm_tn(m, k, n, av, self.grad.data(), gb);
                     });
}

Tensor transpose(const Tensor& x) {
  require_2d(x, "transpose");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<Real> out(m * n);
  auto in = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  return make_result({n, m}, std::move(out), OpKind::kTranspose, {&x},
                     [m, n](Node& self) {
                       Real* gx = input_grad(self, 0);
                       if (gx == nullptr) return;
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j)
                           gx[i * n + j] += self.grad[j * m + i];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                     shape_string(shape));
  return make_result(std::move(shape), x.node().value, OpKind::kReshape, {&x},
                     [](Node& self) {
                       Real* gx = input_grad(self, 0);
                       if (gx == nullptr) return;
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         gx[i] += self.grad[i];
                     });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<Real> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), OpKind::kAdd, {&a, &b},
                     [](Node& self) {
                       for (std::size_t k = 0; k < 2; ++k) {
                         Real* g = input_grad(self, k);
                         if (g == nullptr) continue;
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[i] += self.grad[i];
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<Real> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), OpKind::kSub, {&a, &b},
                     [](Node& self) {
                       if (Real* g = input_grad(self, 0))
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[i] += self.grad[i];
                       if (Real* g = input_grad(self, 1))
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[i] -= self.grad[i];
                     });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.cols();
  if (bias.size() != n || (bias.ndim() == 2 && bias.rows() != 1))
    throw ShapeError("add_row: bias " + shape_string(bias.shape()) +
                     " does not match rows of " + shape_string(x.shape()));
  const std::size_t m = x.size() / std::max<std::size_t>(n, 1);
  std::vector<Real> out(x.size());
  auto xv = x.data(), bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
  return make_result(x.shape(), std::move(out), OpKind::kAddRow, {&x, &bias},
                     [m, n](Node& self) {
                       if (Real* gx = input_grad(self, 0))
                         for (std::size_t i = 0; i < m * n; ++i)
                           gx[i] += self.grad[i];
                       if (Real* gb = input_grad(self, 1))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             gb[j] += self.grad[i * n + j];
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<Real> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), OpKind::kMul, {&a, &b},
                     [](Node& self) {
                       const auto& av = self.inputs[0]->value;
                       const auto& bv = self.inputs[1]->value;
                       if (Real* ga = input_grad(self, 0))
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           ga[i] += self.grad[i] * bv[i];
                       if (Real* gb = input_grad(self, 1))
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           gb[i] += self.grad[i] * av[i];
                     });
}

Tensor scale(const Tensor& x, Real factor) {
  std::vector<Real> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  return make_result(x.shape(), std::move(out), OpKind::kScale, {&x},
                     [factor](Node& self) {
                       Real* gx = input_grad(self, 0);
                       if (gx == nullptr) return;
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         gx[i] += self.grad[i] * factor;
                     });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, OpKind::kSigmoid,
      [](Real v) {
        return v >= 0.0F ? 1.0F / (1.0F + std::exp(-v))
                         : std::exp(v) / (1.0F + std::exp(v));
      },
      [](Real, Real y) { return y * (1.0F - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, OpKind::kTanh, [](Real v) { return std::tanh(v); },
      [](Real, Real y) { return 1.0F - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, OpKind::kRelu, [](Real v) { return v > 0.0F ? v : 0.0F; },
      [](Real v, Real) { return v > 0.0F ? 1.0F : 0.0F; });
}

// ---------------------------------------------------------------------------
// Concatenation and slicing

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m || p.ndim() != parts[0].ndim())
      throw ShapeError("concat_cols: row mismatch " +
                       shape_string(parts[0].shape()) + " vs " +
                       shape_string(p.shape()));
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<Real> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.data() + i * widths[k], widths[k],
                  out.data() + i * total + offset);
    offset += widths[k];
  }
  Shape shape = parts[0].ndim() == 2 ? Shape{m, total} : Shape{total};

  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(out);
  node->op = OpKind::kConcatCols;
  const bool grad = g_active_tape != nullptr &&
                    std::any_of(parts.begin(), parts.end(),
                                [](const Tensor& t) { return t.requires_grad(); });
  if (grad) {
    node->requires_grad = true;
    for (const auto& p : parts) node->inputs.push_back(p.node_ptr());
    node->backward = [m, total, widths](Node& self) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        if (Real* g = input_grad(self, k))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j)
              g[i * widths[k] + j] += self.grad[i * total + off + j];
        off += widths[k];
      }
    };
    g_active_tape->record(node);
  }
  return Tensor(std::move(node));
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  const std::size_t m = x.rows(), n = x.cols();
  if (start + count > n)
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " +
                     shape_string(x.shape()));
  std::vector<Real> out(m * count);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.data() + i * n + start, count, out.data() + i * count);
  Shape shape = x.ndim() == 2 ? Shape{m, count} : Shape{count};
  return make_result(std::move(shape), std::move(out), OpKind::kSliceCols, {&x},
                     [m, n, start, count](Node& self) {
                       Real* gx = input_grad(self, 0);
                       if (gx == nullptr) return;
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < count; ++j)
                           gx[i * n + start + j] += self.grad[i * count + j];
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    if (p.cols() != n)
      throw ShapeError("concat_rows: width mismatch " +
                       shape_string(parts[0].shape()) + " vs " +
                       shape_string(p.shape()));
    m += p.rows();
    sizes.push_back(p.size());
  }
  std::vector<Real> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());

  auto node = std::make_shared<Node>();
  node->shape = {m, n};
  node->value = std::move(out);
  node->op = OpKind::kConcatRows;
  const bool grad = g_active_tape != nullptr &&
                    std::any_of(parts.begin(), parts.end(),
                                [](const Tensor& t) { return t.requires_grad(); });
  if (grad) {
    node->requires_grad = true;
    for (const auto& p : parts) node->inputs.push_back(p.node_ptr());
    node->backward = [sizes](Node& self) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        if (Real* g = input_grad(self, k))
          for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[off + i];
        off += sizes[k];
      }
    };
    g_active_tape->record(node);
  }
  return Tensor(std::move(node));
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_2d(x, "slice_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (start + count > m)
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " +
                     shape_string(x.shape()));
  auto xv = x.data();
  std::vector<Real> out(xv.begin() + start * n, xv.begin() + (start + count) * n);
  return make_result({count, n}, std::move(out), OpKind::kSliceRows, {&x},
                     [start, n](Node& self) {
                       Real* gx = input_grad(self, 0);
                       if (gx == nullptr) return;
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         gx[start * n + i] += self.grad[i];
                     });
}

Tensor embedding(std::span<const std::uint32_t> ids, const Tensor& table) {
  require_2d(table, "embedding");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<std::uint32_t> idx(ids.begin(), ids.end());
  std::vector<Real> out(idx.size() * d);
  auto tv = table.data();
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (idx[t] >= vocab)
      throw IndexError("embedding: id " + std::to_string(idx[t]) +
                       " out of range for vocabulary of " + std::to_string(vocab));
    std::copy_n(tv.data() + idx[t] * d, d, out.data() + t * d);
  }
  const std::size_t rows = idx.size();
  return make_result({rows, d}, std::move(out), OpKind::kEmbedding, {&table},
                     [idx = std::move(idx), d](Node& self) {
                       Real* gt = input_grad(self, 0);
                       if (gt == nullptr) return;
                       for (std::size_t t = 0; t < idx.size(); ++t)
                         for (std::size_t j = 0; j < d; ++j)
                           gt[idx[t] * d + j] += self.grad[t * d + j];
                     });
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

void check_finite(std::span<const Real> v, const char* op) {
  for (Real f : v)
    if (std::isnan(f)) throw NumericError(std::string(op) + ": NaN input");
}

// Softmax over the first `valid[i]` entries of each row; the rest are 0.
Tensor softmax_impl(const Tensor& x, OpKind op,
                    const std::vector<std::size_t>& valid) {
  require_2d(x, op_name(op));
  check_finite(x.data(), op_name(op));
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<Real> out(m * n, 0.0F);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t len = valid[i];
    if (len == 0) continue;
    const Real* row = xv.data() + i * n;
    const Real mx = *std::max_element(row, row + len);
    double total = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const Real e = std::exp(row[j] - mx);
      out[i * n + j] = e;
      total += e;
    }
    const Real inv = static_cast<Real>(1.0 / total);
    for (std::size_t j = 0; j < len; ++j) out[i * n + j] *= inv;
  }
  return make_result(x.shape(), std::move(out), op, {&x}, [m, n](Node& self) {
    Real* gx = input_grad(self, 0);
    if (gx == nullptr) return;
    for (std::size_t i = 0; i < m; ++i) {
      const Real* p = self.value.data() + i * n;
      const Real* g = self.grad.data() + i * n;
      Real dot = 0.0F;
      for (std::size_t j = 0; j < n; ++j) dot += p[j] * g[j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += p[j] * (g[j] - dot);
    }
  });
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  return softmax_impl(x, OpKind::kSoftmaxRows,
                      std::vector<std::size_t>(x.rows(), x.cols()));
}

Tensor masked_softmax_rows(const Tensor& x, std::size_t offset) {
  std::vector<std::size_t> valid(x.rows());
  for (std::size_t i = 0; i < valid.size(); ++i)
    valid[i] = std::min(x.cols(), offset + i + 1);
  return softmax_impl(x, OpKind::kMaskedSoftmaxRows, valid);
}

Tensor log_softmax_rows(const Tensor& x) {
  require_2d(x, "log_softmax_rows");
  check_finite(x.data(), "log_softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<Real> out(m * n);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = xv.data() + i * n;
    const Real mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(static_cast<double>(row[j] - mx));
    const Real lse = mx + static_cast<Real>(std::log(total));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return make_result(x.shape(), std::move(out), OpKind::kLogSoftmaxRows, {&x},
                     [m, n](Node& self) {
                       Real* gx = input_grad(self, 0);
                       if (gx == nullptr) return;
                       for (std::size_t i = 0; i < m; ++i) {
                         const Real* y = self.value.data() + i * n;
                         const Real* g = self.grad.data() + i * n;
                         Real gsum = 0.0F;
                         for (std::size_t j = 0; j < n; ++j) gsum += g[j];
                         for (std::size_t j = 0; j < n; ++j)
                           gx[i * n + j] += g[j] - std::exp(y[j]) * gsum;
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Real eps) {
  const std::size_t n = x.cols();
  if (n == 0) throw ShapeError("layer_norm: rows must be non-empty");
  if (gamma.size() != n || beta.size() != n)
    throw ShapeError("layer_norm: gamma " + shape_string(gamma.shape()) +
                     " / beta " + shape_string(beta.shape()) +
                     " do not match width of " + shape_string(x.shape()));
  const std::size_t m = x.size() / n;
  std::vector<Real> out(m * n), xhat(m * n), rstd(m);
  auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = xv.data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    rstd[i] = static_cast<Real>(1.0 / std::sqrt(var + eps));
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = static_cast<Real>(row[j] - mean) * rstd[i];
      out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), OpKind::kLayerNorm, {&x, &gamma, &beta},
      [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        const auto& gv = self.inputs[1]->value;
        Real* gx = input_grad(self, 0);
        Real* gg = input_grad(self, 1);
        Real* gb = input_grad(self, 2);
        for (std::size_t i = 0; i < m; ++i) {
          const Real* g = self.grad.data() + i * n;
          const Real* xh = xhat.data() + i * n;
          if (gg != nullptr)
            for (std::size_t j = 0; j < n; ++j) gg[j] += g[j] * xh[j];
          if (gb != nullptr)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[j];
          if (gx == nullptr) continue;
          double mean_dy = 0.0, mean_dy_xh = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dy = static_cast<double>(g[j]) * gv[j];
            mean_dy += dy;
            mean_dy_xh += dy * xh[j];
          }
          mean_dy /= static_cast<double>(n);
          mean_dy_xh /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const double dy = static_cast<double>(g[j]) * gv[j];
            gx[i * n + j] += static_cast<Real>(
                rstd[i] * (dy - mean_dy - xh[j] * mean_dy_xh));
          }
        }
      });
}

Tensor relative_shift(const Tensor& x, std::size_t offset) {
  require_2d(x, "relative_shift");
  const std::size_t m = x.rows(), n = x.cols();
  if (offset + m > n)
    throw ShapeError("relative_shift: " + shape_string(x.shape()) +
                     " too narrow for offset " + std::to_string(offset));
  std::vector<Real> out(m * n, 0.0F);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j <= offset + i; ++j)
      out[i * n + j] = xv[i * n + (offset + i - j)];
  return make_result(x.shape(), std::move(out), OpKind::kRelativeShift, {&x},
                     [m, n, offset](Node& self) {
                       Real* gx = input_grad(self, 0);
                       if (gx == nullptr) return;
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j <= offset + i; ++j)
                           gx[i * n + (offset + i - j)] += self.grad[i * n + j];
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (Real v : x.data()) total += v;
  return make_result({}, {static_cast<Real>(total)}, OpKind::kSum, {&x},
                     [](Node& self) {
                       Real* gx = input_grad(self, 0);
                       if (gx == nullptr) return;
                       const Real g = self.grad[0];
                       const std::size_t len = self.inputs[0]->value.size();
                       for (std::size_t i = 0; i < len; ++i) gx[i] += g;
                     });
}

Tensor cross_entropy_logits(const Tensor& logits,
                            std::span<const std::uint32_t> targets,
                            std::span<const std::uint8_t> mask) {
  require_2d(logits, "cross_entropy_logits");
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m || mask.size() != m)
    throw ShapeError("cross_entropy_logits: " + std::to_string(targets.size()) +
                     " targets / " + std::to_string(mask.size()) +
                     " mask entries for logits " + shape_string(logits.shape()));
  check_finite(logits.data(), "cross_entropy_logits");
  std::vector<Real> probs(m * n, 0.0F);
  std::vector<std::uint32_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  auto lv = logits.data();
  double nll = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!msk[i]) continue;
    if (tgt[i] >= n)
      throw IndexError("cross_entropy_logits: target " + std::to_string(tgt[i]) +
                       " out of range for " + std::to_string(n) + " classes");
    const Real* row = lv.data() + i * n;
    const Real mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(static_cast<double>(row[j] - mx));
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j)
      probs[i * n + j] = static_cast<Real>(std::exp(row[j] - lse));
    nll += lse - row[tgt[i]];
    ++count;
  }
  const Real loss = count ? static_cast<Real>(nll / count) : 0.0F;
  return make_result(
      {}, {loss}, OpKind::kCrossEntropy, {&logits},
      [m, n, count, probs = std::move(probs), tgt = std::move(tgt),
       msk = std::move(msk)](Node& self) {
        Real* gl = input_grad(self, 0);
        if (gl == nullptr || count == 0) return;
        const Real g = self.grad[0] / static_cast<Real>(count);
        for (std::size_t i = 0; i < m; ++i) {
          if (!msk[i]) continue;
          for (std::size_t j = 0; j < n; ++j) gl[i * n + j] += g * probs[i * n + j];
          gl[i * n + tgt[i]] -= g;
        }
      });
}

Tensor dropout(const Tensor& x, Real rate, std::mt19937_64& rng) {
  if (rate <= 0.0F) return x;
  if (rate >= 1.0F) throw ContractError("dropout: rate must be below 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const Real inv = 1.0F / (1.0F - rate);
  std::vector<Real> factor(x.size());
  for (auto& f : factor) f = keep(rng) ? inv : 0.0F;
  std::vector<Real> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor[i];
  return make_result(x.shape(), std::move(out), OpKind::kDropout, {&x},
                     [factor = std::move(factor)](Node& self) {
                       Real* gx = input_grad(self, 0);
                       if (gx == nullptr) return;
                       for (std::size_t i = 0; i < factor.size(); ++i)
                         gx[i] += self.grad[i] * factor[i];
                     });
}

Tensor stop_gradient(const Tensor& x) {
  auto node = std::make_shared<Node>();
  node->shape = x.shape();
  node->value = x.node().value;
  node->op = OpKind::kStopGradient;
  // Recorded without an input edge so tape inspection can see the cut.
  if (g_active_tape != nullptr) g_active_tape->record(node);
  return Tensor(std::move(node));
}

}  // namespace rtlm
