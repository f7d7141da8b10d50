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

#ifndef SHAPE_TTA_OPS_HPP_
#define SHAPE_TTA_OPS_HPP_

#include <cstddef>
#include <vector>

#include "shape_tta/tensor.hpp"

namespace shape_tta {

// Element-wise binary ops with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor neg(const Tensor& x);
Tensor square(const Tensor& x);

Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
// Gradient is taken as zero where the output is exactly zero.
Tensor sqrt(const Tensor& x);
Tensor relu(const Tensor& x);
// max(x, floor); gradient flows only where x > floor.
Tensor clamp_min(const Tensor& x, double floor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Reduces one axis, removing it from the shape.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length);

// Softmax along `axis` (the channel axis of a B x K x H x W tensor is 1).
Tensor softmax(const Tensor& x, std::size_t axis);

// x: B x C x H x W, weight: O x C x kh x kw, bias: O (may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding);
// Nearest-neighbour upsampling of the two trailing axes by an integer factor.
Tensor upsample_nearest(const Tensor& x, std::size_t factor);

struct BatchNormOutput {
  Tensor output;
  std::vector<double> batch_mean;  // per channel
  std::vector<double> batch_var;   // per channel, biased
};

// Normalizes x (B x C x H x W) with the statistics of the presented batch.
BatchNormOutput batch_norm(const Tensor& x, const Tensor& gamma,
                           const Tensor& beta, double eps);
// Normalizes with fixed per-channel statistics.
Tensor batch_norm_fixed(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        const std::vector<double>& mean,
                        const std::vector<double>& var, double eps);

}  // namespace shape_tta

#endif  // SHAPE_TTA_OPS_HPP_
