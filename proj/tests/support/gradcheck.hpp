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

#ifndef SHAPE_TTA_TESTS_SUPPORT_GRADCHECK_HPP_
#define SHAPE_TTA_TESTS_SUPPORT_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "shape_tta/random.hpp"
#include "shape_tta/tensor.hpp"

namespace shape_tta::testing {

inline constexpr double kFiniteStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;
// Gradients smaller than this are compared absolutely.
inline constexpr double kGradFloor = 1e-6;

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Partials where the central difference straddles a ReLU kink; see
  // check_gradients.
  std::size_t kinks = 0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
}

// Compares tape gradients of f with central differences for every element of
// every leaf. f must be a pure function of the leaf values.
//
// With allow_kinks, a partial whose central difference fails but whose
// analytic value matches a second-order one-sided difference is counted in
// `kinks` instead of the error: a ReLU switched inside the interval on the
// other side.
inline GradCheck check_gradients(std::vector<Tensor> leaves,
                                 const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                 double step = kFiniteStep, bool allow_kinks = false) {
  for (Tensor& t : leaves) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    const Tensor loss = f(leaves);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (const Tensor& t : leaves) {
    analytic.emplace_back(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.back().begin());
  }
  GradCheck result;
  const double center = allow_kinks ? f(leaves).item() : 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = f(leaves).item();
      values[i] = saved - step;
      const double down = f(leaves).item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[l][i];
      double err = relative_error(a, numeric);
      if (allow_kinks && err > kGradTolerance) {
        // Second-order one-sided stencils on [x - 2h, x] and [x, x + 2h].
        values[i] = saved + 2.0 * step;
        const double up2 = f(leaves).item();
        values[i] = saved - 2.0 * step;
        const double down2 = f(leaves).item();
        values[i] = saved;
        const double forward = (-3.0 * center + 4.0 * up - up2) / (2.0 * step);
        const double backward = (3.0 * center - 4.0 * down + down2) / (2.0 * step);
        if (std::min(relative_error(a, forward), relative_error(a, backward)) <= kGradTolerance) {
          ++result.kinks;
          err = 0.0;
        }
      }
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.checked;
    }
  }
  return result;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Values with magnitude in [min_abs, max_abs] and random sign; keeps
// finite differences away from kinks at zero.
inline Tensor random_away_from_zero(Shape shape, Rng& rng, double min_abs, double max_abs) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(min_abs, max_abs);
  return Tensor(std::move(shape), std::move(v));
}

// Random per-pixel simplex maps of shape (..., K, H, W) via softmax of
// uniform logits in [-scale, scale].
inline Tensor random_simplex(std::size_t batch, std::size_t k, std::size_t h, std::size_t w,
                             Rng& rng, double scale = 2.0) {
  const std::size_t plane = h * w;
  std::vector<double> v(batch * k * plane);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double e = std::exp(rng.uniform(-scale, scale));
        v[(b * k + c) * plane + i] = e;
        total += e;
      }
      for (std::size_t c = 0; c < k; ++c) v[(b * k + c) * plane + i] /= total;
    }
  }
  return Tensor({batch, k, h, w}, std::move(v));
}

}  // namespace shape_tta::testing

#endif  // SHAPE_TTA_TESTS_SUPPORT_GRADCHECK_HPP_
