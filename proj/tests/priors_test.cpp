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


#include <filesystem>

#include "gtest/gtest.h"
#include "shape_tta/ops.hpp"
#include "shape_tta/priors.hpp"
#include "shape_tta/random.hpp"

namespace shape_tta {
namespace {

TEST(PriorsTest, SimplexInputUnchanged) {
  const RatioPrior p = load_ratio_prior(std::vector<double>{0.90, 0.05, 0.05});
  EXPECT_NEAR(p.ratio[0], 0.90, 1e-15);
  EXPECT_NEAR(p.ratio[1], 0.05, 1e-15);
  EXPECT_NEAR(p.ratio[2], 0.05, 1e-15);
}

TEST(PriorsTest, RatiosAreNormalized) {
  const RatioPrior p = load_ratio_prior(std::vector<double>{9.0, 0.5, 0.5});
  EXPECT_NEAR(p.ratio[0], 0.90, 1e-15);
  EXPECT_NEAR(p.ratio[1], 0.05, 1e-15);
  EXPECT_NEAR(p.ratio[2], 0.05, 1e-15);
}

TEST(PriorsTest, InvalidRatiosRejected) {
  EXPECT_THROW(load_ratio_prior(std::vector<double>{0.5, -0.1, 0.6}), std::invalid_argument);
  EXPECT_THROW(load_ratio_prior(std::vector<double>{0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(load_ratio_prior(std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(load_ratio_prior(std::vector<double>{0.5, 0.5}, std::vector<double>{0.1}),
               std::invalid_argument);
}

TEST(PriorsTest, DefaultThresholds) {
  const RatioPrior p = load_ratio_prior(std::vector<double>{0.995, 0.005});
  EXPECT_NEAR(p.threshold[0], 0.0995, 1e-15);
  EXPECT_EQ(p.threshold[1], 1e-3);
}

TEST(PriorsTest, ClassWeightExamples) {
  auto nu = compute_class_weights(std::vector<double>{0.5, 0.5});
  EXPECT_NEAR(nu[0], 0.5, 1e-15);
  nu = compute_class_weights(std::vector<double>{0.8, 0.2});
  EXPECT_NEAR(nu[0], 0.2, 1e-15);
  EXPECT_NEAR(nu[1], 0.8, 1e-15);
  nu = compute_class_weights(std::vector<double>{0.9, 0.05, 0.05});
  EXPECT_NEAR(nu[0], 0.0270, 1e-3);
  EXPECT_NEAR(nu[1], 0.4865, 1e-3);
  EXPECT_NEAR(nu[2], 0.4865, 1e-3);
  nu = compute_class_weights(std::vector<double>{0.6, 0.0, 0.4});
  EXPECT_EQ(nu[1], 0.0);
  EXPECT_NEAR(nu[0] + nu[2], 1.0, 1e-15);
}

TEST(PriorsTest, ClassWeightsAreScaleInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(4);
    for (double& v : r) v = rng.uniform(0.01, 1.0);
    std::vector<double> scaled = r;
    const double c = rng.uniform(0.1, 100.0);
    for (double& v : scaled) v *= c;
    const auto a = compute_class_weights(r);
    const auto b = compute_class_weights(scaled);
    double total = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(a[k], b[k], 1e-12);
      total += a[k];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(PriorsTest, TaggedAbsentClassIsRenormalizedAway) {
  const RatioPrior p = load_ratio_prior(std::vector<double>{0.7, 0.1, 0.1, 0.1});
  SliceTags tags;
  tags.set(4, {0, 1, 2});
  const auto r = effective_ratio(p, tags, 4);
  EXPECT_EQ(r[3], 0.0);
  EXPECT_NEAR(r[0], 0.7 / 0.9, 1e-15);
  EXPECT_NEAR(r[1], 0.1 / 0.9, 1e-15);
  EXPECT_NEAR(r[2], 0.1 / 0.9, 1e-15);
  EXPECT_EQ(effective_ratio(p, tags, 5), p.ratio);
  tags.set(6, {});
  EXPECT_THROW(effective_ratio(p, tags, 6), std::invalid_argument);
}

TEST(PriorsTest, UntaggedSlicesCountAsPresent) {
  SliceTags tags;
  tags.set(1, {2, 0, 2});
  EXPECT_TRUE(tags.present(0, 3));
  EXPECT_TRUE(tags.present(1, 2));
  EXPECT_FALSE(tags.present(1, 1));
  EXPECT_EQ(tags.entries().at(1), (std::vector<std::size_t>{0, 2}));
}

// Three 6x6 slices; class 1 is a single pixel at (1, 1), a 2x1 bar covering
// (3, 2) and (4, 2), and absent.
Tensor three_slices() {
  std::vector<std::uint8_t> labels(3 * 36, 0);
  labels[0 * 36 + 1 * 6 + 1] = 1;
  labels[1 * 36 + 3 * 6 + 2] = 1;
  labels[1 * 36 + 4 * 6 + 2] = 1;
  return one_hot(labels, 3, 6, 6, 2);
}

TEST(PriorsTest, CentroidPriorFromHandBuiltSlices) {
  const std::vector<double> threshold{0.01, 0.01};
  const MomentPrior p = estimate_moment_prior(three_slices(), Descriptor::kCentroid, threshold);
  ASSERT_TRUE(p.values[1].has_value());
  EXPECT_NEAR((*p.values[1])[0], (1.0 + 3.5) / 2.0, 1e-9);
  EXPECT_NEAR((*p.values[1])[1], (1.0 + 2.0) / 2.0, 1e-9);
  ASSERT_TRUE(p.values[0].has_value());
  EXPECT_TRUE(p.any());
}

TEST(PriorsTest, ClassBelowThresholdHasNoPrior) {
  const std::vector<double> threshold{0.01, 0.5};
  const MomentPrior p = estimate_moment_prior(three_slices(), Descriptor::kDistance, threshold);
  EXPECT_FALSE(p.values[1].has_value());
  EXPECT_TRUE(p.values[0].has_value());
}

TEST(PriorsTest, IdenticalSlicesGiveTheirDescriptor) {
  std::vector<std::uint8_t> one(36, 0);
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t c = 2; c < 5; ++c) one[r * 6 + c] = 1;
  std::vector<std::uint8_t> labels;
  for (int i = 0; i < 4; ++i) labels.insert(labels.end(), one.begin(), one.end());
  const Tensor masks = one_hot(labels, 4, 6, 6, 2);
  const MomentPrior p =
      estimate_moment_prior(masks, Descriptor::kDistance, std::vector<double>{0.01, 0.01});
  const Tensor d = dist_to_centroid(slice(masks, 0, 0, 1));
  EXPECT_NEAR((*p.values[1])[0], d.values()[2], 1e-12);
  EXPECT_NEAR((*p.values[1])[1], d.values()[3], 1e-12);
}

TEST(PriorsTest, TagsFromLabels) {
  std::vector<std::uint8_t> labels(3 * 4, 0);
  labels[0] = 2;
  labels[5] = 1;
  const SliceTags tags = tags_from_labels(labels, 3, 2, 2, 3);
  EXPECT_EQ(tags.entries().at(0), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(tags.entries().at(1), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(tags.entries().at(2), (std::vector<std::size_t>{0}));
}

TEST(PriorsTest, TagFileRoundTrip) {
  std::map<std::string, SliceTags> tags;
  tags["subject_000"].set(0, {0, 1});
  tags["subject_000"].set(7, {0, 1, 3});
  tags["subject_001"].set(2, {0});
  const auto path = std::filesystem::temp_directory_path() / "shape_tta_priors_tags.json";
  save_tag_file(path, tags);
  const auto back = load_tag_file(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.at("subject_000").entries(), tags["subject_000"].entries());
  EXPECT_EQ(back.at("subject_001").entries(), tags["subject_001"].entries());
  EXPECT_THROW(load_tag_file(path), std::runtime_error);
}

}  // namespace
}  // namespace shape_tta
