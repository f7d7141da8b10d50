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


#include <cmath>
#include <numbers>

#include "gtest/gtest.h"
#include "shape_tta/losses.hpp"
#include "shape_tta/ops.hpp"
#include "support/gradcheck.hpp"

namespace shape_tta {
namespace {

constexpr double kExact = 1e-12;

// Builds a B x 2 x H x W softmax from class-1 probabilities.
Tensor two_class(const std::vector<std::vector<double>>& p1, std::size_t h, std::size_t w) {
  std::vector<double> v;
  for (const auto& slice : p1) {
    for (double x : slice) v.push_back(1.0 - x);
    for (double x : slice) v.push_back(x);
  }
  return Tensor({p1.size(), 2, h, w}, std::move(v));
}

DescriptorPrior ratio_only_prior(std::vector<double> ratio) {
  DescriptorPrior p;
  p.ratio = load_ratio_prior(ratio);
  return p;
}

LossWeights weights_for(const RatioPrior& r) {
  LossWeights w;
  w.nu = compute_class_weights(r.ratio);
  return w;
}

TEST(LossesTest, CrossEntropyExamples) {
  std::vector<std::uint8_t> labels{0, 1, 2, 3, 3, 2, 1, 0};
  const Tensor y = one_hot(labels, 1, 2, 4, 4);
  EXPECT_NEAR(cross_entropy(y, y).item(), 0.0, 1e-12);
  EXPECT_NEAR(cross_entropy(y, Tensor::full(y.shape(), 0.25)).item(), std::log(4.0), kExact);
  EXPECT_THROW(cross_entropy(y, Tensor::full({1, 3, 2, 4}, 0.25)), ShapeError);
}

TEST(LossesTest, CrossEntropyMatchesLoop) {
  Rng rng(3);
  const Tensor s = testing::random_simplex(2, 3, 4, 5, rng);
  std::vector<std::uint8_t> labels(40);
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(3));
  const Tensor y = one_hot(labels, 2, 4, 5, 3);
  double want = 0.0;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 20; ++i) want -= std::log(s.values()[(n * 3 + labels[n * 20 + i]) * 20 + i]);
  EXPECT_NEAR(cross_entropy(y, s).item(), want / 40.0, kExact);
}

TEST(LossesTest, WeightedEntropyExamples) {
  const std::vector<double> half{0.5, 0.5};
  EXPECT_NEAR(weighted_entropy(Tensor::full({2, 3, 3}, 0.5), half).item(), 0.5 * std::log(2.0),
              kExact);
  std::vector<std::uint8_t> labels{0, 1, 1, 0};
  const Tensor onehot = one_hot(labels, 1, 2, 2, 2);
  EXPECT_NEAR(weighted_entropy(onehot, half).item(), 0.0, 1e-7);
}

TEST(LossesTest, WeightedEntropyMatchesLoop) {
  Rng rng(5);
  const std::vector<double> nu{0.1, 0.2, 0.3, 0.4};
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor s = testing::random_simplex(1, 4, 3, 6, rng);
    double want = 0.0;
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t i = 0; i < 18; ++i) {
        const double p = s.values()[k * 18 + i];
        want -= nu[k] * p * std::log(p);
      }
    EXPECT_NEAR(weighted_entropy(s, nu).item(), want / 18.0, kExact);
  }
}

TEST(LossesTest, RatioKlExamples) {
  const Tensor r({2}, {0.5, 0.5});
  EXPECT_NEAR(ratio_kl(r, r).item(), 0.0, kExact);
  EXPECT_NEAR(ratio_kl(r, Tensor({2}, {0.25, 0.75})).item(),
              0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), kExact);
  EXPECT_NEAR(ratio_kl(r, Tensor({2}, {0.25, 0.75})).item(), 0.1438410362, 1e-9);
}

TEST(LossesTest, BandPenaltyExamples) {
  EXPECT_EQ(band_penalty(1.0, 1.0, 0.1), 0.0);
  EXPECT_NEAR(band_penalty(1.2, 1.0, 0.1), 0.01, kExact);
  EXPECT_NEAR(band_penalty(0.8, 1.0, 0.1), 0.01, kExact);
  const Tensor t = band_penalty(Tensor({3}, {1.2, 0.8, 1.05}), Tensor({3}, {1.0, 1.0, 1.0}), 0.1);
  EXPECT_NEAR(t.values()[0], 0.01, kExact);
  EXPECT_NEAR(t.values()[1], 0.01, kExact);
  EXPECT_EQ(t.values()[2], 0.0);
}

TEST(LossesTest, BandPenaltyIsZeroInsideAndContinuousAtEdges) {
  Rng rng(8);
  for (double target : {0.1, 1.0, 10.0}) {
    for (int i = 0; i < 100; ++i) {
      EXPECT_EQ(band_penalty(rng.uniform(0.9 * target, 1.1 * target), target, 0.1), 0.0);
    }
    for (double edge : {0.9 * target, 1.1 * target}) {
      for (double h : {1e-3, 1e-6, 1e-9}) {
        EXPECT_LE(band_penalty(edge + h, target, 0.1), h * h * 1.0001);
        EXPECT_LE(band_penalty(edge - h, target, 0.1), h * h * 1.0001);
      }
    }
  }
}

TEST(LossesTest, PrintedPenaltyDiffersFromBand) {
  // The literal form penalizes the interior of the band.
  EXPECT_GT(band_penalty(1.0, 1.0, 0.1, PenaltyForm::kPrinted), 0.0);
  EXPECT_EQ(band_penalty(1.0, 1.0, 0.1, PenaltyForm::kBand), 0.0);
}

TEST(LossesTest, BandPenaltyGradient) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Tensor m = testing::random_tensor({6}, rng, 0.0, 2.0);
    // Keep samples away from the two band edges.
    for (double& v : m.mutable_values())
      if (std::abs(v - 0.9) < 1e-3 || std::abs(v - 1.1) < 1e-3) v += 0.01;
    const Tensor target = Tensor::full({6}, 1.0);
    const auto r = testing::check_gradients({m}, [&](const std::vector<Tensor>& t) {
      return sum(band_penalty(t[0], target, 0.1));
    });
    EXPECT_LE(r.max_rel_error, testing::kGradTolerance);
  }
}

TEST(LossesTest, TwoSliceMicroCase) {
  const Tensor s = two_class({{0.9, 0.8, 0.1, 0.7, 0.6, 0.2, 0.1, 0.1, 0.05},
                              {0.05, 0.1, 0.2, 0.1, 0.5, 0.8, 0.2, 0.7, 0.95}},
                             3, 3);
  DescriptorPrior prior = ratio_only_prior({0.7, 0.3});
  MomentPrior moments;
  moments.descriptor = Descriptor::kCentroid;
  moments.values = {std::nullopt, std::array<double, 2>{1.0, 1.0}};
  prior.moments = moments;
  LossWeights w = weights_for(prior.ratio);
  w.lambda = 0.5;
  const std::vector<std::size_t> slices{0, 1};
  const LossBreakdown b = ttas_objective(s, slices, prior, w, AdaptMode::kRatioCentroid);
  // Reference values from a separate scalar script.
  EXPECT_NEAR(b.entropy.item(), 0.4353992239131912, 1e-9);
  EXPECT_NEAR(b.kl.item(), 0.04277461702399912, 1e-9);
  EXPECT_NEAR(b.penalty.item(), 0.41079041366963737, 1e-9);
  EXPECT_NEAR(b.total.item(), 0.683569047772009, 1e-9);
}

TEST(LossesTest, RatioModeHasNoPenalty) {
  Rng rng(4);
  const Tensor s = testing::random_simplex(3, 4, 6, 6, rng);
  const DescriptorPrior prior = ratio_only_prior({0.7, 0.1, 0.1, 0.1});
  const std::vector<std::size_t> slices{0, 1, 2};
  const LossBreakdown b = ttas_objective(s, slices, prior, weights_for(prior.ratio),
                                         AdaptMode::kRatio);
  EXPECT_EQ(b.penalty.item(), 0.0);
  EXPECT_NEAR(b.total.item(), b.entropy.item() + b.kl.item(), kExact);
}

TEST(LossesTest, AblationEqualsTent) {
  Rng rng(6);
  const Tensor s = testing::random_simplex(4, 4, 8, 8, rng);
  DescriptorPrior prior = ratio_only_prior({0.7, 0.1, 0.15, 0.05});
  prior.moments = estimate_moment_prior(s, Descriptor::kCentroid, prior.ratio.threshold);
  LossWeights w = weights_for(prior.ratio);
  w.lambda = 0.0;
  w.kl_weight = 0.0;
  const std::vector<std::size_t> slices{0, 1, 2, 3};
  const double tent = tent_objective(s, w.nu).item();
  for (AdaptMode mode : {AdaptMode::kTent, AdaptMode::kRatio, AdaptMode::kRatioCentroid}) {
    EXPECT_NEAR(ttas_objective(s, slices, prior, w, mode).total.item(), tent, kExact);
  }
}

TEST(LossesTest, PermutingSlicesLeavesObjectiveUnchanged) {
  Rng rng(12);
  const Tensor s = testing::random_simplex(3, 3, 6, 6, rng, 3.0);
  DescriptorPrior prior = ratio_only_prior({0.6, 0.3, 0.1});
  prior.moments = estimate_moment_prior(s, Descriptor::kDistance, prior.ratio.threshold);
  LossWeights w = weights_for(prior.ratio);
  w.lambda = 0.1;
  const std::vector<std::size_t> slices{0, 1, 2};
  const double a = ttas_objective(s, slices, prior, w, AdaptMode::kRatioDistance).total.item();
  const Tensor permuted = concat({slice(s, 0, 2, 1), slice(s, 0, 0, 1), slice(s, 0, 1, 1)}, 0);
  const std::vector<std::size_t> p_slices{2, 0, 1};
  const double b =
      ttas_objective(permuted, p_slices, prior, w, AdaptMode::kRatioDistance).total.item();
  EXPECT_NEAR(a, b, kExact);
}

TEST(LossesTest, PenaltySkipsAbsentAndFaintClasses) {
  const Tensor s = two_class({{0.9, 0.8, 0.1, 0.7}, {0.001, 0.001, 0.001, 0.001}}, 2, 2);
  DescriptorPrior prior = ratio_only_prior({0.5, 0.5});
  MomentPrior moments;
  moments.descriptor = Descriptor::kCentroid;
  moments.values = {std::nullopt, std::array<double, 2>{5.0, 5.0}};
  prior.moments = moments;
  LossWeights w = weights_for(prior.ratio);
  const std::vector<std::size_t> only_faint{1};
  // Slice 1 carries class-1 ratio 0.001, below the 0.05 threshold.
  EXPECT_EQ(ttas_objective(slice(s, 0, 1, 1), only_faint, prior, w, AdaptMode::kRatioCentroid)
                .penalty.item(),
            0.0);
  const std::vector<std::size_t> first{0};
  EXPECT_GT(
      ttas_objective(slice(s, 0, 0, 1), first, prior, w, AdaptMode::kRatioCentroid).penalty.item(),
      0.0);
  prior.tags.set(0, {0});
  EXPECT_EQ(
      ttas_objective(slice(s, 0, 0, 1), first, prior, w, AdaptMode::kRatioCentroid).penalty.item(),
      0.0);
  prior.tags = {};
  prior.moments->values[1].reset();
  EXPECT_EQ(
      ttas_objective(slice(s, 0, 0, 1), first, prior, w, AdaptMode::kRatioCentroid).penalty.item(),
      0.0);
}

TEST(LossesTest, ShapeModeNeedsMatchingPrior) {
  Rng rng(1);
  const Tensor s = testing::random_simplex(1, 2, 4, 4, rng);
  DescriptorPrior prior = ratio_only_prior({0.5, 0.5});
  const LossWeights w = weights_for(prior.ratio);
  const std::vector<std::size_t> slices{0};
  EXPECT_THROW(ttas_objective(s, slices, prior, w, AdaptMode::kRatioCentroid),
               std::invalid_argument);
  prior.moments = estimate_moment_prior(s, Descriptor::kCentroid, prior.ratio.threshold);
  EXPECT_THROW(ttas_objective(s, slices, prior, w, AdaptMode::kRatioDistance),
               std::invalid_argument);
  EXPECT_THROW(ttas_objective(s, std::vector<std::size_t>{0, 1}, prior, w, AdaptMode::kRatio),
               ShapeError);
}

TEST(LossesTest, TaggedSliceUsesRenormalizedPrior) {
  Rng rng(2);
  const Tensor s = testing::random_simplex(1, 3, 4, 4, rng);
  DescriptorPrior prior = ratio_only_prior({0.6, 0.3, 0.1});
  prior.tags.set(0, {0, 1});
  const LossWeights w = weights_for(prior.ratio);
  const std::vector<std::size_t> slices{0};
  const LossBreakdown b = ttas_objective(s, slices, prior, w, AdaptMode::kRatio);
  const Tensor r = class_ratio(s);
  EXPECT_NEAR(b.kl.item(), ratio_kl(r, Tensor({1, 3}, {2.0 / 3.0, 1.0 / 3.0, 0.0})).item(), kExact);
  const std::vector<double> nu = compute_class_weights(std::vector<double>{2.0 / 3.0, 1.0 / 3.0, 0.0});
  EXPECT_NEAR(b.entropy.item(), weighted_entropy(s, nu).item(), kExact);
}

TEST(LossesTest, ObjectiveGradientsWrtSoftmaxInputs) {
  for (AdaptMode mode : {AdaptMode::kTent, AdaptMode::kRatio, AdaptMode::kRatioCentroid,
                         AdaptMode::kRatioDistance}) {
    for (int seed = 0; seed < 20; ++seed) {
      Rng rng(1000 + seed);
      const Tensor logits = testing::random_tensor({2, 3, 4, 4}, rng, -2.0, 2.0);
      DescriptorPrior prior = ratio_only_prior({0.6, 0.25, 0.15});
      const Descriptor d =
          mode == AdaptMode::kRatioDistance ? Descriptor::kDistance : Descriptor::kCentroid;
      // A prior offset from the current shape so the penalty is active.
      MomentPrior mp;
      mp.descriptor = d;
      mp.values = {std::nullopt, std::array<double, 2>{0.5, 2.8}, std::array<double, 2>{2.9, 0.4}};
      prior.moments = mp;
      LossWeights w = weights_for(prior.ratio);
      w.lambda = 0.05;
      const std::vector<std::size_t> slices{0, 1};
      const auto r = testing::check_gradients({logits}, [&](const std::vector<Tensor>& t) {
        return ttas_objective(softmax(t[0], 1), slices, prior, w, mode).total;
      });
      EXPECT_LE(r.max_rel_error, testing::kGradTolerance) << to_string(mode) << " seed " << seed;
    }
  }
}

TEST(LossesTest, ModeNames) {
  for (AdaptMode m : {AdaptMode::kTent, AdaptMode::kRatio, AdaptMode::kRatioCentroid,
                      AdaptMode::kRatioDistance}) {
    EXPECT_EQ(parse_adapt_mode(to_string(m)), m);
  }
  EXPECT_EQ(parse_adapt_mode("R_only"), AdaptMode::kRatio);
  EXPECT_THROW(parse_adapt_mode("X"), std::invalid_argument);
  EXPECT_FALSE(has_shape_phase(AdaptMode::kTent));
  EXPECT_TRUE(has_shape_phase(AdaptMode::kRatioDistance));
}

}  // namespace
}  // namespace shape_tta
