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

#include "shape_tta/moments.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "shape_tta/ops.hpp"

namespace shape_tta {
namespace {

void check_order(int p, int q) {
  if (p < 0 || q < 0 || p + q > 2) {
    throw std::invalid_argument("moments: unsupported order (" + std::to_string(p) + ", " +
                                std::to_string(q) + "); need p, q >= 0 and p + q <= 2");
  }
}

void check_maps(const char* op, const Tensor& maps) {
  if (maps.dim() < 2) throw ShapeError(op, {maps.shape()}, "need at least H x W");
}

// Sums the two trailing axes.
Tensor sum_plane(const Tensor& x) {
  const std::size_t rank = x.dim();
  return sum(sum(x, rank - 1), rank - 2);
}

// Appends two unit axes so a per-map scalar broadcasts over H x W.
Tensor as_plane(const Tensor& x) {
  Shape s = x.shape();
  s.push_back(1);
  s.push_back(1);
  return reshape(x, std::move(s));
}

Tensor stack_pair(const Tensor& a, const Tensor& b) {
  Shape s = a.shape();
  s.push_back(1);
  return concat({reshape(a, s), reshape(b, s)}, s.size() - 1);
}

struct Centroid {
  Tensor mass;
  Tensor safe_mass;
  Tensor u;
  Tensor v;
};

Centroid compute_centroid(const Tensor& maps) {
  const std::size_t h = maps.size(maps.dim() - 2);
  const std::size_t w = maps.size(maps.dim() - 1);
  Centroid c;
  c.mass = raw_moment(maps, 0, 0);
  c.safe_mass = clamp_min(c.mass, mass_epsilon(h, w));
  c.u = div(raw_moment(maps, 1, 0), c.safe_mass);
  c.v = div(raw_moment(maps, 0, 1), c.safe_mass);
  return c;
}

Tensor powi(const Tensor& x, int p) {
  if (p == 1) return x;
  return square(x);  // p == 2
}

}  // namespace

CoordinateGrids make_coordinate_grids(std::size_t height, std::size_t width) {
  std::vector<double> u(height * width);
  std::vector<double> v(height * width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      u[r * width + c] = static_cast<double>(r);
      v[r * width + c] = static_cast<double>(c);
    }
  }
  return {Tensor({height, width}, std::move(u)), Tensor({height, width}, std::move(v))};
}

Tensor raw_moment(const Tensor& maps, int p, int q) {
  check_order(p, q);
  check_maps("raw_moment", maps);
  if (p == 0 && q == 0) return sum_plane(maps);
  const std::size_t h = maps.size(maps.dim() - 2);
  const std::size_t w = maps.size(maps.dim() - 1);
  std::vector<double> weight(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      weight[r * w + c] = std::pow(static_cast<double>(r), p) * std::pow(static_cast<double>(c), q);
    }
  }
  return sum_plane(mul(maps, Tensor({h, w}, std::move(weight))));
}

Tensor central_moment(const Tensor& maps, int p, int q) {
  check_order(p, q);
  check_maps("central_moment", maps);
  if (p == 0 && q == 0) return raw_moment(maps, 0, 0);
  const std::size_t h = maps.size(maps.dim() - 2);
  const std::size_t w = maps.size(maps.dim() - 1);
  const CoordinateGrids grids = make_coordinate_grids(h, w);
  const Centroid c = compute_centroid(maps);
  Tensor weight;
  if (p > 0) weight = powi(sub(grids.u, as_plane(c.u)), p);
  if (q > 0) {
    Tensor dv = powi(sub(grids.v, as_plane(c.v)), q);
    weight = weight.defined() ? mul(weight, dv) : dv;
  }
  return sum_plane(mul(maps, weight));
}

Tensor class_ratio(const Tensor& softmax) {
  if (softmax.dim() < 3) throw ShapeError("class_ratio", {softmax.shape()}, "need K x H x W");
  const std::size_t h = softmax.size(softmax.dim() - 2);
  const std::size_t w = softmax.size(softmax.dim() - 1);
  return mul_scalar(raw_moment(softmax, 0, 0), 1.0 / static_cast<double>(h * w));
}

Tensor centroid(const Tensor& maps) {
  check_maps("centroid", maps);
  const Centroid c = compute_centroid(maps);
  return stack_pair(c.u, c.v);
}

Tensor dist_to_centroid(const Tensor& maps) {
  check_maps("dist_to_centroid", maps);
  const std::size_t h = maps.size(maps.dim() - 2);
  const std::size_t w = maps.size(maps.dim() - 1);
  const Tensor safe_mass = clamp_min(raw_moment(maps, 0, 0), mass_epsilon(h, w));
  const Tensor du = sqrt(div(central_moment(maps, 2, 0), safe_mass));
  const Tensor dv = sqrt(div(central_moment(maps, 0, 2), safe_mass));
  return stack_pair(du, dv);
}

const char* to_string(Descriptor d) {
  return d == Descriptor::kCentroid ? "centroid" : "distance";
}

Tensor shape_descriptor(const Tensor& maps, Descriptor d) {
  return d == Descriptor::kCentroid ? centroid(maps) : dist_to_centroid(maps);
}

Tensor one_hot(std::span<const std::uint8_t> labels, std::size_t slices, std::size_t height,
               std::size_t width, std::size_t num_classes) {
  const std::size_t plane = height * width;
  if (labels.size() != slices * plane) {
    throw ShapeError("one_hot", {Shape{labels.size()}, Shape{slices, height, width}});
  }
  std::vector<double> out(slices * num_classes * plane, 0.0);
  for (std::size_t n = 0; n < slices; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = labels[n * plane + i];
      if (k >= num_classes) {
        throw std::invalid_argument("one_hot: label " + std::to_string(k) + " >= K = " +
                                    std::to_string(num_classes));
      }
      out[(n * num_classes + k) * plane + i] = 1.0;
    }
  }
  return Tensor({slices, num_classes, height, width}, std::move(out));
}

}  // namespace shape_tta
