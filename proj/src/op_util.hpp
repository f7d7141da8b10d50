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

#ifndef SHAPE_TTA_SRC_OP_UTIL_HPP_
#define SHAPE_TTA_SRC_OP_UTIL_HPP_

#include <initializer_list>
#include <memory>
#include <utility>
#include <vector>

#include "shape_tta/tensor.hpp"

namespace shape_tta::detail {

inline bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

inline Tensor make_output(Shape shape, std::vector<double> data) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor::from_impl(std::move(impl));
}

inline void record(std::initializer_list<const Tensor*> inputs, const Tensor& out,
                   Tape::BackwardFn fn) {
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const Tensor* t : inputs) {
    if (t->defined()) impls.push_back(t->impl());
  }
  Tape::active()->record(std::move(impls), out.impl(), std::move(fn));
}

// Gradient buffer of `t` if it participates in differentiation, else null.
inline double* grad_target(const std::shared_ptr<TensorImpl>& t) {
  if (!t || !t->requires_grad) return nullptr;
  return t->grad_buffer().data();
}

}  // namespace shape_tta::detail

#endif  // SHAPE_TTA_SRC_OP_UTIL_HPP_
