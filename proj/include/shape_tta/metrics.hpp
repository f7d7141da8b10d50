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

#ifndef SHAPE_TTA_METRICS_HPP_
#define SHAPE_TTA_METRICS_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace shape_tta {

struct VolumeShape {
  std::size_t slices = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t voxels() const { return slices * height * width; }
};

// Volumetric Dice of class k in percent. Both sets empty gives 100.
double dice3d(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
              std::uint8_t k);

// Voxels of class k with at least one 6-neighbour outside the class; grid
// borders count as outside. Returned as (slice, row, column).
std::vector<std::array<int, 3>> surface_voxels(std::span<const std::uint8_t> labels,
                                               VolumeShape shape, std::uint8_t k);

// Average symmetric surface distance of class k in voxels: the mean, over
// the surface voxels of both sets, of the Euclidean distance to the nearest
// surface voxel of the other set. Empty when either set is empty.
std::optional<double> asd3d(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                            VolumeShape shape, std::uint8_t k);

struct MetricReport {
  std::string method;
  std::string subject;
  std::vector<double> dsc;                 // foreground classes 1..K-1
  std::vector<std::optional<double>> asd;  // same order; empty when undefined

  double mean_dsc() const;
  // Mean over the defined entries; empty when none is defined.
  std::optional<double> mean_asd() const;
};

MetricReport evaluate_subject(std::string method, std::string subject,
                              std::span<const std::uint8_t> pred,
                              std::span<const std::uint8_t> gt, VolumeShape shape,
                              std::size_t num_classes);

struct ResultsTable {
  std::string csv;   // method,subject,class,dsc,asd
  std::string text;  // one row per method, per-class and mean columns
};

// Methods keep their order of first appearance. Per-class cells average
// over subjects; undefined ASD values are left out of every average and
// counted in a footnote.
ResultsTable tabulate(std::span<const MetricReport> reports,
                      const std::vector<std::string>& class_names);

std::string format_asd(const std::optional<double>& asd);

}  // namespace shape_tta

#endif  // SHAPE_TTA_METRICS_HPP_
