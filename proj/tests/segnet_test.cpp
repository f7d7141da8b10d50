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
#include <filesystem>
#include <set>
#include <string>

#include "gtest/gtest.h"
#include "shape_tta/ops.hpp"
#include "shape_tta/segnet.hpp"
#include "support/gradcheck.hpp"

namespace shape_tta {
namespace {

// Conv weights + BN gamma/beta per 3x3 conv, counted from the layer widths.
std::size_t expected_parameter_count(const NetworkConfig& c) {
  auto width = [&](std::size_t level) { return c.base_width << level; };
  auto conv_bn = [](std::size_t in, std::size_t out) { return in * out * 9 + 2 * out; };
  std::size_t n = 0;
  for (std::size_t l = 0; l < c.depth; ++l) {
    const std::size_t in = l == 0 ? c.in_channels : width(l - 1);
    n += conv_bn(in, width(l)) + conv_bn(width(l), width(l));
  }
  n += conv_bn(width(c.depth - 1), width(c.depth)) + conv_bn(width(c.depth), width(c.depth));
  for (std::size_t l = 0; l < c.depth; ++l) {
    n += conv_bn(width(l + 1) + width(l), width(l)) + conv_bn(width(l), width(l));
  }
  return n + c.base_width * c.num_classes + c.num_classes;
}

Tensor random_images(std::size_t b, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  return testing::random_tensor({b, 1, h, w}, rng);
}

TEST(SegnetTest, DefaultParameterCount) {
  const ParameterStore p = build_network(NetworkConfig{});
  EXPECT_EQ(p.parameter_count(), expected_parameter_count(NetworkConfig{}));
  EXPECT_EQ(p.parameter_count(), 122348u);
}

TEST(SegnetTest, ParameterCountAcrossConfigs) {
  for (std::size_t depth : {1u, 2u, 3u}) {
    for (std::size_t width : {2u, 4u}) {
      NetworkConfig c;
      c.depth = depth;
      c.base_width = width;
      c.num_classes = 3;
      EXPECT_EQ(build_network(c).parameter_count(), expected_parameter_count(c));
    }
  }
}

TEST(SegnetTest, PartitionIsComplete) {
  const ParameterStore p = build_network(NetworkConfig{});
  std::size_t affine = 0;
  for (const auto& e : p.entries()) {
    const bool is_bn = e.name.find(".bn") != std::string::npos;
    EXPECT_EQ(e.role == ParamRole::kBnAffine, is_bn) << e.name;
    if (is_bn) ++affine;
  }
  EXPECT_EQ(affine, 28u);
  EXPECT_EQ(adaptable_parameters(p).size(), 28u);
  EXPECT_EQ(p.running_stats().size(), 14u);
}

TEST(SegnetTest, BatchNormInitialization) {
  const ParameterStore p = build_network(NetworkConfig{});
  for (const auto& e : p.entries()) {
    if (e.role != ParamRole::kBnAffine) continue;
    const double want = e.name.ends_with(".gamma") ? 1.0 : 0.0;
    for (double v : e.tensor.values()) EXPECT_EQ(v, want) << e.name;
  }
}

TEST(SegnetTest, SameSeedSameWeights) {
  NetworkConfig c;
  c.seed = 42;
  const ParameterStore a = build_network(c);
  const ParameterStore b = build_network(c);
  ASSERT_EQ(a.entries().size(), b.entries().size());
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    const auto va = a.entries()[i].tensor.values();
    const auto vb = b.entries()[i].tensor.values();
    EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin()));
  }
  c.seed = 43;
  const ParameterStore d = build_network(c);
  EXPECT_NE(d.at("enc0.conv1.weight").values()[0], a.at("enc0.conv1.weight").values()[0]);
}

TEST(SegnetTest, OutputShapesAndSimplex) {
  NetworkConfig c;
  c.depth = 2;
  c.base_width = 4;
  const ParameterStore p = build_network(c);
  for (ForwardMode mode : {ForwardMode::kTrain, ForwardMode::kAdapt, ForwardMode::kEval}) {
    const ForwardOutput out = forward(p, random_images(3, 16, 12, 1), mode);
    EXPECT_EQ(out.logits.shape(), (Shape{3, 4, 16, 12}));
    EXPECT_EQ(out.softmax.shape(), (Shape{3, 4, 16, 12}));
    EXPECT_EQ(out.batch_stats.empty(), mode == ForwardMode::kEval);
    const auto s = out.softmax.values();
    for (std::size_t i = 0; i < 16 * 12; ++i) {
      double total = 0.0;
      for (std::size_t k = 0; k < 4; ++k) total += s[k * 16 * 12 + i];
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(SegnetTest, RejectsIndivisibleInput) {
  const ParameterStore p = build_network(NetworkConfig{});
  EXPECT_THROW(forward(p, random_images(1, 20, 16, 1), ForwardMode::kEval), ShapeError);
  EXPECT_THROW(forward(p, Tensor::zeros({1, 2, 16, 16}), ForwardMode::kEval), ShapeError);
}

TEST(SegnetTest, EvalIsPerSliceAndDeterministic) {
  NetworkConfig c;
  c.depth = 2;
  const ParameterStore p = build_network(c);
  const Tensor x = random_images(2, 16, 16, 3);
  const Tensor a = forward(p, x, ForwardMode::kEval).softmax;
  const Tensor b = forward(p, x, ForwardMode::kEval).softmax;
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  // Running statistics make each slice independent of the rest of the batch.
  const Tensor first = forward(p, slice(x, 0, 0, 1), ForwardMode::kEval).softmax;
  for (std::size_t i = 0; i < first.numel(); ++i) {
    EXPECT_NEAR(first.values()[i], a.values()[i], 1e-12);
  }
}

TEST(SegnetTest, BatchStatisticsMatchDefinition) {
  NetworkConfig c;
  c.depth = 1;
  c.base_width = 2;
  const ParameterStore p = build_network(c);
  const Tensor x = random_images(2, 4, 4, 5);
  const ForwardOutput out = forward(p, x, ForwardMode::kTrain);
  const Tensor y = conv2d(x, p.at("enc0.conv1.weight"), Tensor(), 1, 1);
  const RunningStats& s = out.batch_stats.at("enc0.bn1");
  for (std::size_t ch = 0; ch < 2; ++ch) {
    double m = 0.0, v = 0.0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 16; ++i) m += y.values()[(b * 2 + ch) * 16 + i];
    m /= 32.0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 16; ++i) v += std::pow(y.values()[(b * 2 + ch) * 16 + i] - m, 2);
    v /= 32.0;
    EXPECT_NEAR(s.mean[ch], m, 1e-12);
    EXPECT_NEAR(s.var[ch], v, 1e-12);
  }
}

TEST(SegnetTest, RunningStatsUpdate) {
  NetworkConfig c;
  c.depth = 1;
  ParameterStore p = build_network(c);
  const ForwardOutput out = forward(p, random_images(2, 8, 8, 9), ForwardMode::kTrain);
  update_running_stats(p, out.batch_stats, 0.1);
  const RunningStats& rs = p.running_stats().at("enc0.bn1");
  const RunningStats& bs = out.batch_stats.at("enc0.bn1");
  for (std::size_t i = 0; i < rs.mean.size(); ++i) {
    EXPECT_NEAR(rs.mean[i], 0.1 * bs.mean[i], 1e-15);
    EXPECT_NEAR(rs.var[i], 0.9 + 0.1 * bs.var[i], 1e-15);
  }
}

TEST(SegnetTest, GradientReachesEveryAffineParameter) {
  NetworkConfig c;
  c.depth = 2;
  c.base_width = 4;
  ParameterStore p = build_network(c);
  p.set_trainable(ParamRole::kBnAffine, true);
  const Tensor x = random_images(2, 16, 16, 7);
  Tape tape;
  const ForwardOutput out = forward(p, x, ForwardMode::kAdapt);
  Rng rng(2);
  const Tensor w = testing::random_tensor(out.softmax.shape(), rng);
  tape.backward(sum(mul(out.softmax, w)));
  for (const auto& e : p.entries()) {
    if (e.role == ParamRole::kFrozen) {
      EXPECT_FALSE(e.tensor.has_grad()) << e.name;
      continue;
    }
    ASSERT_TRUE(e.tensor.has_grad()) << e.name;
    double norm = 0.0;
    for (double g : e.tensor.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0) << e.name;
  }
}

TEST(SegnetTest, AffineGradientsMatchFiniteDifferences) {
  NetworkConfig c;
  c.depth = 1;
  c.base_width = 2;
  c.num_classes = 3;
  const ParameterStore base = build_network(c);
  const Tensor x = random_images(2, 4, 4, 13);
  Rng rng(4);
  const Tensor w = testing::random_tensor({2, 3, 4, 4}, rng);
  ParameterStore p = base.clone();
  std::vector<Tensor> leaves = adaptable_parameters(p);
  for (Tensor& t : leaves) {
    auto v = t.mutable_values();
    for (double& e : v) e += rng.uniform(-0.3, 0.3);
  }
  const auto r = testing::check_gradients(leaves, [&](const std::vector<Tensor>&) {
    return sum(mul(forward(p, x, ForwardMode::kAdapt).softmax, w));
  });
  EXPECT_EQ(r.checked, 2u * (2 + 2 + 4 + 4 + 2 + 2));
  EXPECT_LE(r.max_rel_error, testing::kGradTolerance);
}

TEST(SegnetTest, CheckpointRoundTrip) {
  NetworkConfig c;
  c.seed = 5;
  c.depth = 2;
  ParameterStore p = build_network(c);
  const ForwardOutput out = forward(p, random_images(2, 16, 16, 1), ForwardMode::kTrain);
  update_running_stats(p, out.batch_stats);
  const auto path = std::filesystem::temp_directory_path() / "shape_tta_segnet_test.ckpt";
  save_checkpoint(path, p);
  const ParameterStore q = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(q.config(), p.config());
  ASSERT_EQ(q.entries().size(), p.entries().size());
  for (std::size_t i = 0; i < p.entries().size(); ++i) {
    const auto& a = p.entries()[i];
    const auto& b = q.entries()[i];
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.role, b.role);
    EXPECT_EQ(a.tensor.shape(), b.tensor.shape());
    for (std::size_t j = 0; j < a.tensor.numel(); ++j) {
      // Payloads are stored as f32.
      EXPECT_EQ(static_cast<float>(a.tensor.values()[j]), b.tensor.values()[j]);
    }
  }
  for (const auto& [name, rs] : p.running_stats()) {
    const RunningStats& other = q.running_stats().at(name);
    for (std::size_t j = 0; j < rs.mean.size(); ++j) {
      EXPECT_EQ(static_cast<float>(rs.mean[j]), other.mean[j]);
      EXPECT_EQ(static_cast<float>(rs.var[j]), other.var[j]);
    }
  }
}

TEST(SegnetTest, TruncatedCheckpointIsRejected) {
  const ParameterStore p = build_network(NetworkConfig{});
  const auto path = std::filesystem::temp_directory_path() / "shape_tta_segnet_trunc.ckpt";
  save_checkpoint(path, p);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 17);
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(SegnetTest, CloneSharesNoStorage) {
  ParameterStore p = build_network(NetworkConfig{});
  ParameterStore q = p.clone();
  q.at("enc0.bn1.gamma").impl()->data[0] = 7.0;
  EXPECT_EQ(p.at("enc0.bn1.gamma").values()[0], 1.0);
}

}  // namespace
}  // namespace shape_tta
