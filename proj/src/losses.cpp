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

#include "shape_tta/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "shape_tta/moments.hpp"
#include "shape_tta/ops.hpp"

namespace shape_tta {
namespace {

// -s log s, element-wise, with the log floored.
Tensor neg_plogp(const Tensor& s) { return neg(mul(s, log(clamp_min(s, kLogEpsilon)))); }

std::size_t pixels_per_map(const Tensor& t) {
  return t.size(t.dim() - 2) * t.size(t.dim() - 1);
}

void check_class_axis(const char* op, const Tensor& s, std::size_t k) {
  if (s.dim() < 3 || s.size(s.dim() - 3) != k) {
    throw ShapeError(op, {s.shape(), Shape{k}}, "expected (..., K, H, W) with K matching");
  }
}

}  // namespace

const char* to_string(AdaptMode mode) {
  switch (mode) {
    case AdaptMode::kTent: return "tent";
    case AdaptMode::kRatio: return "R";
    case AdaptMode::kRatioCentroid: return "RC";
    case AdaptMode::kRatioDistance: return "RD";
  }
  return "?";
}

AdaptMode parse_adapt_mode(const std::string& name) {
  if (name == "tent") return AdaptMode::kTent;
  if (name == "R" || name == "R_only") return AdaptMode::kRatio;
  if (name == "RC") return AdaptMode::kRatioCentroid;
  if (name == "RD") return AdaptMode::kRatioDistance;
  throw std::invalid_argument("unknown adaptation mode '" + name +
                              "' (expected tent, R, RC or RD)");
}

bool has_shape_phase(AdaptMode mode) {
  return mode == AdaptMode::kRatioCentroid || mode == AdaptMode::kRatioDistance;
}

void LossWeights::validate() const {
  double total = 0.0;
  for (double v : nu) {
    if (!(v >= 0.0)) throw std::invalid_argument("loss weights: nu entries must be >= 0");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("loss weights: nu must sum to 1");
  if (!(lambda >= 0.0)) throw std::invalid_argument("loss weights: lambda must be >= 0");
  if (!(kl_weight >= 0.0)) throw std::invalid_argument("loss weights: kl_weight must be >= 0");
  if (!(band > 0.0 && band < 1.0)) throw std::invalid_argument("loss weights: band must be in (0, 1)");
}

Tensor cross_entropy(const Tensor& y, const Tensor& softmax) {
  if (y.shape() != softmax.shape() || y.dim() < 3) {
    throw ShapeError("cross_entropy", {y.shape(), softmax.shape()});
  }
  const double pixels = static_cast<double>(y.numel() / y.size(y.dim() - 3));
  return mul_scalar(sum(mul(y, log(clamp_min(softmax, kLogEpsilon)))), -1.0 / pixels);
}

Tensor weighted_entropy(const Tensor& softmax, std::span<const double> nu) {
  check_class_axis("weighted_entropy", softmax, nu.size());
  const Tensor weights({nu.size(), 1, 1}, std::vector<double>(nu.begin(), nu.end()));
  const double pixels = static_cast<double>(softmax.numel() / nu.size());
  return mul_scalar(sum(mul(neg_plogp(softmax), weights)), 1.0 / pixels);
}

Tensor ratio_kl(const Tensor& ratio, const Tensor& prior) {
  if (ratio.shape() != prior.shape()) throw ShapeError("ratio_kl", {ratio.shape(), prior.shape()});
  const Tensor log_ratio = log(clamp_min(ratio, kLogEpsilon));
  const Tensor log_prior = log(clamp_min(prior, kLogEpsilon));
  return sum(mul(ratio, sub(log_ratio, log_prior)));
}

Tensor band_penalty(const Tensor& m, const Tensor& target, double band, PenaltyForm form) {
  Tensor upper, lower;
  if (form == PenaltyForm::kBand) {
    upper = sub(m, mul_scalar(target, 1.0 + band));  // m - (1 + d) m_bar
    lower = sub(mul_scalar(target, 1.0 - band), m);  // (1 - d) m_bar - m
  } else {
    upper = sub(m, mul_scalar(target, 0.9));
    lower = sub(mul_scalar(target, 1.1), m);
  }
  return add(square(relu(upper)), square(relu(lower)));
}

double band_penalty(double m, double target, double band, PenaltyForm form) {
  const double hi = form == PenaltyForm::kBand ? (1.0 + band) * target : 0.9 * target;
  const double lo = form == PenaltyForm::kBand ? (1.0 - band) * target : 1.1 * target;
  const double over = std::max(0.0, m - hi);
  const double under = std::max(0.0, lo - m);
  return over * over + under * under;
}

Tensor tent_objective(const Tensor& softmax, std::span<const double> nu) {
  check_class_axis("tent_objective", softmax, nu.size());
  const Tensor weights({nu.size(), 1, 1}, std::vector<double>(nu.begin(), nu.end()));
  return mul_scalar(sum(mul(neg_plogp(softmax), weights)),
                    1.0 / static_cast<double>(pixels_per_map(softmax)));
}

LossBreakdown ttas_objective(const Tensor& softmax, std::span<const std::size_t> slice_indices,
                             const DescriptorPrior& prior, const LossWeights& weights,
                             AdaptMode mode) {
  const std::size_t k_classes = prior.ratio.num_classes();
  if (softmax.dim() != 4 || softmax.size(1) != k_classes ||
      softmax.size(0) != slice_indices.size()) {
    throw ShapeError("ttas_objective",
                     {softmax.shape(), Shape{slice_indices.size(), k_classes}},
                     "expected B x K x H x W softmax for B slice indices");
  }
  if (weights.nu.size() != k_classes) {
    throw std::invalid_argument("ttas_objective: nu has " + std::to_string(weights.nu.size()) +
                                " entries for K = " + std::to_string(k_classes));
  }
  const std::size_t batch = slice_indices.size();

  // Per-slice effective ratio prior and entropy weights.
  std::vector<double> prior_rows(batch * k_classes);
  std::vector<double> nu_rows(batch * k_classes);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = slice_indices[b];
    std::vector<double> r = effective_ratio(prior.ratio, prior.tags, n);
    std::vector<double> nu = prior.tags.tagged(n) ? compute_class_weights(r) : weights.nu;
    std::copy(r.begin(), r.end(), prior_rows.begin() + b * k_classes);
    std::copy(nu.begin(), nu.end(), nu_rows.begin() + b * k_classes);
  }

  LossBreakdown out;
  const Tensor nu_t({batch, k_classes, 1, 1}, std::move(nu_rows));
  out.entropy = mul_scalar(sum(mul(neg_plogp(softmax), nu_t)),
                           1.0 / static_cast<double>(pixels_per_map(softmax)));
  if (mode == AdaptMode::kTent) {
    out.kl = Tensor::scalar(0.0);
    out.penalty = Tensor::scalar(0.0);
    out.total = out.entropy;
    return out;
  }

  const Tensor ratio = class_ratio(softmax);  // B x K
  out.kl = ratio_kl(ratio, Tensor({batch, k_classes}, std::move(prior_rows)));

  if (!has_shape_phase(mode)) {
    out.penalty = Tensor::scalar(0.0);
  } else {
    const Descriptor d =
        mode == AdaptMode::kRatioCentroid ? Descriptor::kCentroid : Descriptor::kDistance;
    if (!prior.moments) {
      throw std::invalid_argument(std::string("ttas_objective: mode ") + to_string(mode) +
                                  " needs a " + to_string(d) + " prior");
    }
    if (prior.moments->descriptor != d || prior.moments->values.size() != k_classes) {
      throw std::invalid_argument(std::string("ttas_objective: moment prior does not match mode ") +
                                  to_string(mode));
    }
    const Tensor m = shape_descriptor(softmax, d);  // B x K x 2
    std::vector<double> target(batch * k_classes * 2, 0.0);
    std::vector<double> active(batch * k_classes * 2, 0.0);
    const auto rv = ratio.values();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t k = 1; k < k_classes; ++k) {
        const auto& value = prior.moments->values[k];
        if (!value || !prior.tags.present(slice_indices[b], k)) continue;
        if (!(rv[b * k_classes + k] > prior.ratio.threshold[k])) continue;
        for (std::size_t j = 0; j < 2; ++j) {
          target[(b * k_classes + k) * 2 + j] = (*value)[j];
          active[(b * k_classes + k) * 2 + j] = 1.0;
        }
      }
    }
    const Tensor f = band_penalty(m, Tensor({batch, k_classes, 2}, std::move(target)),
                                  weights.band, weights.penalty_form);
    out.penalty = sum(mul(f, Tensor({batch, k_classes, 2}, std::move(active))));
  }
  out.total = add(add(out.entropy, mul_scalar(out.kl, weights.kl_weight)),
                  mul_scalar(out.penalty, weights.lambda));
  return out;
}

}  // namespace shape_tta
