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

#include "shape_tta/priors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace shape_tta {

std::vector<double> default_thresholds(std::span<const double> ratio) {
  std::vector<double> eps(ratio.size());
  for (std::size_t k = 0; k < ratio.size(); ++k) eps[k] = std::max(1e-3, 0.1 * ratio[k]);
  return eps;
}

RatioPrior load_ratio_prior(std::span<const double> ratios,
                            std::optional<std::vector<double>> thresholds) {
  if (ratios.size() < 2) throw std::invalid_argument("ratio prior: need at least 2 classes");
  double total = 0.0;
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    if (!(ratios[k] >= 0.0) || !std::isfinite(ratios[k])) {
      throw std::invalid_argument("ratio prior: class " + std::to_string(k) +
                                  " has invalid ratio " + std::to_string(ratios[k]));
    }
    total += ratios[k];
  }
  if (total <= 0.0) throw std::invalid_argument("ratio prior: ratios sum to zero");
  RatioPrior prior;
  prior.ratio.assign(ratios.begin(), ratios.end());
  for (double& r : prior.ratio) r /= total;
  if (thresholds) {
    if (thresholds->size() != ratios.size()) {
      throw std::invalid_argument("ratio prior: threshold count does not match class count");
    }
    prior.threshold = std::move(*thresholds);
  } else {
    prior.threshold = default_thresholds(prior.ratio);
  }
  return prior;
}

std::vector<double> compute_class_weights(std::span<const double> ratio) {
  std::vector<double> nu(ratio.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < ratio.size(); ++k) {
    if (ratio[k] < 0.0) throw std::invalid_argument("class weights: negative ratio");
    if (ratio[k] > 0.0) {
      nu[k] = 1.0 / ratio[k];
      total += nu[k];
    }
  }
  if (total <= 0.0) throw std::invalid_argument("class weights: no class with positive ratio");
  for (double& v : nu) v /= total;
  return nu;
}

void SliceTags::set(std::size_t slice, std::vector<std::size_t> present_classes) {
  std::sort(present_classes.begin(), present_classes.end());
  present_classes.erase(std::unique(present_classes.begin(), present_classes.end()),
                        present_classes.end());
  present_[slice] = std::move(present_classes);
}

bool SliceTags::present(std::size_t slice, std::size_t k) const {
  auto it = present_.find(slice);
  if (it == present_.end()) return true;
  return std::binary_search(it->second.begin(), it->second.end(), k);
}

std::vector<double> effective_ratio(const RatioPrior& prior, const SliceTags& tags,
                                    std::size_t slice) {
  std::vector<double> r = prior.ratio;
  if (!tags.tagged(slice)) return r;
  double total = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (!tags.present(slice, k)) r[k] = 0.0;
    total += r[k];
  }
  if (total <= 0.0) {
    throw std::invalid_argument("effective ratio: slice " + std::to_string(slice) +
                                " has every class tagged absent");
  }
  for (double& v : r) v /= total;
  return r;
}

bool MomentPrior::any() const {
  return std::any_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
}

MomentPrior estimate_moment_prior(const Tensor& masks, Descriptor descriptor,
                                  std::span<const double> threshold) {
  if (masks.dim() != 4 || masks.size(1) != threshold.size()) {
    throw ShapeError("estimate_moment_prior", {masks.shape(), Shape{threshold.size()}},
                     "expected N x K x H x W masks and K thresholds");
  }
  const std::size_t slices = masks.size(0);
  const std::size_t classes = masks.size(1);
  const Tensor ratio = class_ratio(masks);                     // N x K
  const Tensor desc = shape_descriptor(masks, descriptor);     // N x K x 2
  const auto rv = ratio.values();
  const auto dv = desc.values();
  MomentPrior prior;
  prior.descriptor = descriptor;
  prior.values.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    std::array<double, 2> acc{0.0, 0.0};
    std::size_t count = 0;
    for (std::size_t n = 0; n < slices; ++n) {
      if (rv[n * classes + k] > threshold[k]) {
        acc[0] += dv[(n * classes + k) * 2];
        acc[1] += dv[(n * classes + k) * 2 + 1];
        ++count;
      }
    }
    if (count > 0) {
      prior.values[k] = std::array<double, 2>{acc[0] / static_cast<double>(count),
                                              acc[1] / static_cast<double>(count)};
    }
  }
  return prior;
}

std::map<std::string, SliceTags> load_tag_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("tag file: cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("tag file " + path.string() + ": " + e.what());
  }
  std::map<std::string, SliceTags> out;
  for (const auto& [subject, slices] : doc.items()) {
    SliceTags tags;
    for (const auto& [slice, classes] : slices.items()) {
      tags.set(std::stoul(slice), classes.get<std::vector<std::size_t>>());
    }
    out.emplace(subject, std::move(tags));
  }
  return out;
}

void save_tag_file(const std::filesystem::path& path,
                   const std::map<std::string, SliceTags>& tags) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [subject, t] : tags) {
    nlohmann::ordered_json slices = nlohmann::ordered_json::object();
    for (const auto& [slice, classes] : t.entries()) slices[std::to_string(slice)] = classes;
    doc[subject] = slices;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("tag file: cannot open " + path.string() + " for writing");
  os << doc.dump(2) << '\n';
}

SliceTags tags_from_labels(std::span<const std::uint8_t> labels, std::size_t slices,
                           std::size_t height, std::size_t width, std::size_t num_classes) {
  const std::size_t plane = height * width;
  SliceTags tags;
  for (std::size_t n = 0; n < slices; ++n) {
    std::vector<bool> seen(num_classes, false);
    for (std::size_t i = 0; i < plane; ++i) seen.at(labels[n * plane + i]) = true;
    std::vector<std::size_t> present;
    for (std::size_t k = 0; k < num_classes; ++k) {
      if (seen[k]) present.push_back(k);
    }
    tags.set(n, std::move(present));
  }
  return tags;
}

}  // namespace shape_tta
