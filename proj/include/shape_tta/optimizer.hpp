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

#ifndef SHAPE_TTA_OPTIMIZER_HPP_
#define SHAPE_TTA_OPTIMIZER_HPP_

#include <cstddef>
#include <vector>

#include "shape_tta/tensor.hpp"

namespace shape_tta {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // L2 term added to the gradient before the moment updates.
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void zero_grad();
  // A parameter without a populated gradient is treated as having zero
  // gradient, so only weight decay moves it.
  void step(double lr);

  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& params() const { return params_; }

  // Points the optimizer at a new parameter list of identical shapes,
  // keeping the accumulated moments.
  void rebind(std::vector<Tensor> params);

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

}  // namespace shape_tta

#endif  // SHAPE_TTA_OPTIMIZER_HPP_
