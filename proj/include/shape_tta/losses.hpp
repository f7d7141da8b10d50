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

#ifndef SHAPE_TTA_LOSSES_HPP_
#define SHAPE_TTA_LOSSES_HPP_

#include <span>
#include <string>
#include <vector>

#include "shape_tta/priors.hpp"
#include "shape_tta/tensor.hpp"

namespace shape_tta {

// Floor applied inside every log.
inline constexpr double kLogEpsilon = 1e-12;

enum class AdaptMode {
  kTent,             // weighted entropy only
  kRatio,            // entropy + class-ratio KL
  kRatioCentroid,    // + centroid band penalty
  kRatioDistance,    // + distance-to-centroid band penalty
};

const char* to_string(AdaptMode mode);
AdaptMode parse_adapt_mode(const std::string& name);
bool has_shape_phase(AdaptMode mode);

enum class PenaltyForm {
  kBand,     // zero inside [(1 - d) m_bar, (1 + d) m_bar]
  kPrinted,  // [m - 0.9 m_bar]_+^2 + [1.1 m_bar - m]_+^2, for comparison only
};

struct LossWeights {
  std::vector<double> nu;  // class weights, simplex
  double lambda = 1e-4;
  double kl_weight = 1.0;
  double band = 0.1;
  PenaltyForm penalty_form = PenaltyForm::kBand;

  void validate() const;
};

// Entropy in nats per pixel summed over slices; KL in nats summed over
// slices; penalty in squared descriptor units (pixels^2) before lambda.
struct LossBreakdown {
  Tensor entropy;
  Tensor kl;
  Tensor penalty;
  Tensor total;  // entropy + kl_weight * kl + lambda * penalty
};

// y, softmax: (..., K, H, W). Mean over pixels of -sum_k y^k log s^k.
Tensor cross_entropy(const Tensor& y, const Tensor& softmax);

// softmax: (..., K, H, W); nu: K values. Mean over pixels of
// -sum_k nu_k s^k log s^k.
Tensor weighted_entropy(const Tensor& softmax, std::span<const double> nu);

// Sum over every leading index of KL(ratio || prior) along the last axis.
// Both operands have shape (..., K).
Tensor ratio_kl(const Tensor& ratio, const Tensor& prior);

// Element-wise quadratic band penalty F(m, m_bar).
Tensor band_penalty(const Tensor& m, const Tensor& target, double band,
                    PenaltyForm form = PenaltyForm::kBand);
double band_penalty(double m, double target, double band,
                    PenaltyForm form = PenaltyForm::kBand);

// Tent objective: per-slice mean weighted entropy, summed over the batch.
Tensor tent_objective(const Tensor& softmax, std::span<const double> nu);

// Adaptation objective over a batch of slices.
//   softmax: B x K x H x W predictions for the slices `slice_indices` of the
//   subject, which select the per-slice tags in `prior`.
// The shape penalty covers foreground classes (k >= 1) and is skipped for a
// (slice, class) pair when the class is tagged absent, has no moment prior,
// or its predicted ratio in the slice does not exceed the presence threshold.
LossBreakdown ttas_objective(const Tensor& softmax, std::span<const std::size_t> slice_indices,
                             const DescriptorPrior& prior, const LossWeights& weights,
                             AdaptMode mode);

}  // namespace shape_tta

#endif  // SHAPE_TTA_LOSSES_HPP_
