// Copyright 2026 The shape_tta Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "shape_tta/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace shape_tta {
namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local Precision g_precision = Precision::kF64;

std::string describe(const std::string& op, const std::vector<Shape>& shapes,
                     const std::string& detail) {
  std::ostringstream os;
  os << op << ": incompatible shapes";
  for (const auto& s : shapes) os << ' ' << to_string(s);
  if (!detail.empty()) os << " (" << detail << ')';
  return os.str();
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

ShapeError::ShapeError(std::string op, std::vector<Shape> shapes,
                       std::string detail)
    : std::invalid_argument(describe(op, shapes, detail)),
      op_(std::move(op)),
      shapes_(std::move(shapes)) {}

std::span<double> TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  if (values.size() != shape_tta::numel(shape)) {
    throw ShapeError("tensor", {shape},
                     "expected " + std::to_string(shape_tta::numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_tta::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::from_impl(std::shared_ptr<TensorImpl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

const Shape& Tensor::shape() const {
  if (!impl_) throw std::logic_error("tensor: undefined");
  return impl_->shape;
}

std::size_t Tensor::size(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("size", {s}, "axis " + std::to_string(axis) + " out of range");
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::values() const {
  if (!impl_) throw std::logic_error("tensor: undefined");
  return impl_->data;
}

std::span<double> Tensor::mutable_values() {
  if (!impl_) throw std::logic_error("tensor: undefined");
  if (!impl_->is_leaf) {
    throw std::logic_error("tensor: cannot mutate the output of a recorded op");
  }
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item", {shape()}, "not a scalar");
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw ShapeError("at", {s}, "rank mismatch");
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw ShapeError("at", {s}, "index out of range");
    offset = offset * s[axis] + i;
    ++axis;
  }
  return impl_->data[offset];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!impl_) throw std::logic_error("tensor: undefined");
  if (!impl_->is_leaf) {
    throw std::logic_error("tensor: requires_grad can only be set on leaves");
  }
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return !impl_ || impl_->is_leaf; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor: gradient not populated");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::clone() const {
  return Tensor(shape(), impl_->data, impl_->requires_grad);
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::vector<std::shared_ptr<TensorImpl>> inputs,
                  std::shared_ptr<TensorImpl> output, BackwardFn backward) {
  if (consumed_) {
    throw std::logic_error("tape: cannot record after backward; create a new tape");
  }
  output->requires_grad = true;
  output->is_leaf = false;
  nodes_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw std::logic_error("tape: backward already ran on this tape");
  }
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward", {loss.defined() ? loss.shape() : Shape{}},
                     "loss must be a scalar");
  }
  consumed_ = true;
  if (!loss.requires_grad()) {
    nodes_.clear();
    return;
  }
  loss.impl()->grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    TensorImpl& out = *it->output;
    if (!out.grad.empty()) it->backward(out);
    // Intermediate gradients are not needed once propagated.
    out.grad.clear();
    out.grad.shrink_to_fit();
    it->backward = nullptr;
  }
  nodes_.clear();
}

Precision matmul_precision() { return g_precision; }

PrecisionScope::PrecisionScope(Precision precision) : previous_(g_precision) {
  g_precision = precision;
}

PrecisionScope::~PrecisionScope() { g_precision = previous_; }

}  // namespace shape_tta
