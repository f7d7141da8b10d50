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

#ifndef SHAPE_TTA_MOMENTS_HPP_
#define SHAPE_TTA_MOMENTS_HPP_

#include <cstdint>
#include <span>

#include "shape_tta/tensor.hpp"

// Differentiable 2D shape moments of soft segmentation maps.
//
// Coordinates are 0-based pixel indices: u is the row, v the column. All
// functions reduce over the two trailing axes of their input, so a
// B x K x H x W softmax yields B x K moments in one call.
//
// Descriptors that divide by the zeroth moment use max(mu_00, eps_mass) with
// eps_mass = 1e-6 * H * W, which leaves them exact whenever the class carries
// more mass than eps_mass and keeps gradients finite when it vanishes.
namespace shape_tta {

struct CoordinateGrids {
  Tensor u;  // H x W, u[r][c] = r
  Tensor v;  // H x W, v[r][c] = c
};

CoordinateGrids make_coordinate_grids(std::size_t height, std::size_t width);

inline constexpr double kMassEpsilonFraction = 1e-6;

inline double mass_epsilon(std::size_t height, std::size_t width) {
  return kMassEpsilonFraction * static_cast<double>(height * width);
}

// mu_pq(s) = sum_i s(i) u_i^p v_i^q, for p + q <= 2.
Tensor raw_moment(const Tensor& maps, int p, int q);

// Moment about the centroid (mu_10 / mu_00, mu_01 / mu_00).
Tensor central_moment(const Tensor& maps, int p, int q);

// (..., K, H, W) -> (..., K): zeroth moment over the slice pixel count.
Tensor class_ratio(const Tensor& softmax);

// (..., H, W) -> (..., 2) as (u, v).
Tensor centroid(const Tensor& maps);

// (..., H, W) -> (..., 2): (sqrt(cmu_20 / mu_00), sqrt(cmu_02 / mu_00)).
Tensor dist_to_centroid(const Tensor& maps);

enum class Descriptor { kCentroid, kDistance };

const char* to_string(Descriptor d);
Tensor shape_descriptor(const Tensor& maps, Descriptor d);

// N x H x W class indices -> N x K x H x W one-hot maps (no gradient).
Tensor one_hot(std::span<const std::uint8_t> labels, std::size_t slices,
               std::size_t height, std::size_t width, std::size_t num_classes);

}  // namespace shape_tta

#endif  // SHAPE_TTA_MOMENTS_HPP_
