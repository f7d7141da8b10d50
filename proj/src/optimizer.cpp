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

#include "shape_tta/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace shape_tta {

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Tensor& p : params_) {
    if (!p.is_leaf()) throw std::invalid_argument("Adam: parameters must be leaf tensors");
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Adam::step(double lr) {
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const bool has_grad = p.has_grad();
    const std::span<const double> g = has_grad ? p.grad() : std::span<const double>{};
    std::span<double> w = p.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = (has_grad ? g[j] : 0.0) + config_.weight_decay * w[j];
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
  }
}

void Adam::rebind(std::vector<Tensor> params) {
  if (params.size() != params_.size()) {
    throw std::invalid_argument("Adam::rebind: parameter count changed");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != params_[i].shape()) {
      throw ShapeError("Adam::rebind", {params_[i].shape(), params[i].shape()});
    }
  }
  params_ = std::move(params);
}

}  // namespace shape_tta
