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

#ifndef SHAPE_TTA_TENSOR_HPP_
#define SHAPE_TTA_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace shape_tta {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Raised when an op receives operands whose shapes it cannot combine.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string op, std::vector<Shape> shapes, std::string detail = {});

  const std::string& op() const { return op_; }
  const std::vector<Shape>& shapes() const { return shapes_; }

 private:
  std::string op_;
  std::vector<Shape> shapes_;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until populated by a backward pass
  bool requires_grad = false;
  bool is_leaf = true;

  std::span<double> grad_buffer();  // allocates zeros on first use
};

// Dense row-major real tensor. Copies share storage; use clone() for a deep
// copy. Tensors created while a Tape is active and derived from inputs that
// require gradients are recorded on that tape.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_impl(std::shared_ptr<TensorImpl> impl);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Writable view of a leaf's storage. Throws for op outputs.
  std::span<double> mutable_values();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  Tensor clone() const;   // deep copy, detached leaf, same requires_grad
  Tensor detach() const;  // deep copy, no gradient tracking

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Records differentiable operations in execution order. Constructing a Tape
// makes it the calling thread's active tape until it is destroyed; ops run
// with no active tape produce untracked outputs. A tape may be backpropagated
// exactly once.
class Tape {
 public:
  using BackwardFn = std::function<void(const TensorImpl& output)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::vector<std::shared_ptr<TensorImpl>> inputs,
              std::shared_ptr<TensorImpl> output, BackwardFn backward);

  // Accumulates d(loss)/d(leaf) into every leaf that requires gradients.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
  Tape* previous_ = nullptr;
};

// Numeric precision used for the convolution matrix products. Everything
// else is computed in double.
enum class Precision { kF64, kF32 };

Precision matmul_precision();

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision precision);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision previous_;
};

}  // namespace shape_tta

#endif  // SHAPE_TTA_TENSOR_HPP_
