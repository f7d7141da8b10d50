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

#ifndef SHAPE_TTA_PRIORS_HPP_
#define SHAPE_TTA_PRIORS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shape_tta/moments.hpp"
#include "shape_tta/tensor.hpp"

namespace shape_tta {

// Coarse class-ratio prior (fractions of slice area) and per-class presence
// thresholds epsilon^k.
struct RatioPrior {
  std::vector<double> ratio;
  std::vector<double> threshold;

  std::size_t num_classes() const { return ratio.size(); }
};

// max(1e-3, 0.1 * ratio_k)
std::vector<double> default_thresholds(std::span<const double> ratio);

// Normalizes the given ratios to a simplex. Thresholds default as above.
RatioPrior load_ratio_prior(std::span<const double> ratios,
                            std::optional<std::vector<double>> thresholds = std::nullopt);

// nu_k = (1 / r_k) / sum_j (1 / r_j) over classes with r_k > 0; classes with
// r_k == 0 (tagged absent) get weight 0.
std::vector<double> compute_class_weights(std::span<const double> ratio);

// Image-level weak tags: for tagged slices, the set of classes present.
// Untagged slices are treated as containing every class.
class SliceTags {
 public:
  void set(std::size_t slice, std::vector<std::size_t> present_classes);
  bool tagged(std::size_t slice) const { return present_.count(slice) > 0; }
  bool present(std::size_t slice, std::size_t k) const;
  bool empty() const { return present_.empty(); }
  const std::map<std::size_t, std::vector<std::size_t>>& entries() const { return present_; }

 private:
  std::map<std::size_t, std::vector<std::size_t>> present_;
};

// Ratio prior for one slice: tagged-absent classes set to 0, the rest
// renormalized.
std::vector<double> effective_ratio(const RatioPrior& prior, const SliceTags& tags,
                                    std::size_t slice);

// Per-class descriptor target estimated from hard prediction masks. A class
// with no qualifying slice has no value and its penalty is disabled.
struct MomentPrior {
  Descriptor descriptor = Descriptor::kCentroid;
  std::vector<std::optional<std::array<double, 2>>> values;

  bool any() const;
};

// masks: N x K x H x W one-hot. The target for class k is the mean descriptor
// over slices whose hard class ratio exceeds threshold[k].
MomentPrior estimate_moment_prior(const Tensor& masks, Descriptor descriptor,
                                  std::span<const double> threshold);

struct DescriptorPrior {
  RatioPrior ratio;
  std::optional<MomentPrior> moments;
  SliceTags tags;
};

// Tag file: {"<subject id>": {"<slice index>": [present classes...]}}
std::map<std::string, SliceTags> load_tag_file(const std::filesystem::path& path);
void save_tag_file(const std::filesystem::path& path,
                   const std::map<std::string, SliceTags>& tags);

// Tags derived from a label volume: each slice lists the classes it contains.
SliceTags tags_from_labels(std::span<const std::uint8_t> labels, std::size_t slices,
                           std::size_t height, std::size_t width, std::size_t num_classes);

}  // namespace shape_tta

#endif  // SHAPE_TTA_PRIORS_HPP_
