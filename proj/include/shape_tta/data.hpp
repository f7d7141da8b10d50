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

#ifndef SHAPE_TTA_DATA_HPP_
#define SHAPE_TTA_DATA_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "shape_tta/tensor.hpp"

namespace shape_tta {

enum class Domain { kSource, kTarget };

const char* to_string(Domain d);
Domain parse_domain(const std::string& s);

struct VolumeHeader {
  std::string subject_id;
  std::size_t slices = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  double spacing = 1.0;  // isotropic, pixel units
  Domain domain = Domain::kSource;
  std::uint64_t seed = 0;
  std::size_t num_classes = 0;
  std::string phantom;
  bool has_image = true;
  bool has_labels = false;

  std::size_t voxels() const { return slices * height * width; }
};

// N x H x W subject. Labels, when present, are class indices in [0, K).
struct SubjectVolume {
  VolumeHeader header;
  std::vector<float> intensities;
  std::vector<std::uint8_t> labels;

  bool has_labels() const { return !labels.empty(); }
};

enum class PhantomFamily { kCardiac, kProstate };

const char* to_string(PhantomFamily f);
PhantomFamily parse_phantom_family(const std::string& s);

struct Jittered {
  double nominal = 0.0;
  double jitter = 0.0;  // uniform half-width
};

// Geometry and appearance of the synthetic phantoms.
//
// Cardiac (K = 4): 0 background, 1 "LV" disk, 2 "MYO" annulus around it,
// 3 "AA" disk offset from the LV centre and present only in the first
// `aa_slice_fraction` of the slices. Prostate (K = 2): one elliptical gland.
// Structure sizes follow a spherical profile across slices.
struct PhantomSpec {
  PhantomFamily family = PhantomFamily::kCardiac;
  std::size_t slices = 16;
  std::size_t height = 64;
  std::size_t width = 64;

  // Cardiac geometry (pixels).
  Jittered lv_center_u{32.0, 3.0};
  Jittered lv_center_v{28.0, 3.0};
  Jittered lv_radius{9.0, 1.5};
  Jittered myo_thickness{4.0, 0.75};
  Jittered aa_offset_u{-17.0, 1.5};
  Jittered aa_offset_v{19.0, 1.5};
  Jittered aa_radius{5.0, 1.0};
  double aa_slice_fraction = 0.625;

  // Prostate geometry (pixels).
  Jittered gland_center_u{32.0, 3.0};
  Jittered gland_center_v{32.0, 3.0};
  Jittered gland_semi_u{10.0, 2.0};
  Jittered gland_semi_v{13.0, 2.0};

  // Minimum width of the cross-section profile at the end slices.
  double profile_floor = 0.55;
  double body_semi_u = 28.0;
  double body_semi_v = 30.0;

  // Source appearance: mean intensity of each class, plus body tissue.
  std::vector<double> class_intensity{0.25, 0.8, 0.3, 0.65};
  double outside_intensity = 0.0;
  double source_noise = 0.03;

  // Target shift.
  double target_gamma = 0.5;
  std::size_t inverted_class = 2;
  double target_noise = 0.05;

  std::size_t num_classes() const { return family == PhantomFamily::kCardiac ? 4 : 2; }
  // Throws std::invalid_argument when structures can overlap or leave the grid.
  void validate() const;
};

PhantomSpec cardiac_phantom();
PhantomSpec prostate_phantom();
PhantomSpec phantom_for(PhantomFamily family);

// Class ratios of the label volume rendered with nominal (un-jittered)
// geometry, and lower/upper bounds over the jitter ranges.
std::vector<double> nominal_ratios(const PhantomSpec& spec);
std::array<std::vector<double>, 2> nominal_ratio_bands(const PhantomSpec& spec);

// Subject i uses geometry seed derive_seed(seed, i), so the same seed yields
// identical labels in both domains.
std::vector<SubjectVolume> generate(const PhantomSpec& spec, std::size_t n_subjects,
                                    Domain domain, std::uint64_t seed);

struct AffineParams {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double shift_u = 0.0;
  double shift_v = 0.0;
};

// rotation +-10 deg, scale 0.9-1.1, shift +-4 px.
AffineParams sample_affine(std::uint64_t seed);

// Same transform on every slice about the slice centre; bilinear for the
// image, nearest-neighbour for labels, out-of-grid samples read as 0.
SubjectVolume augment_affine(const SubjectVolume& volume, const AffineParams& params);
SubjectVolume augment_affine(const SubjectVolume& volume, std::uint64_t seed);

// Zero-mean, unit-variance intensities over the whole subject, as an
// N x 1 x H x W network input.
Tensor normalized_input(const SubjectVolume& volume);

class VolumeFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Volume file: 8-byte magic "STTAVOL1", u64 little-endian header length, JSON
// header, then the f32 little-endian image (if has_image) and the u8 label
// volume (if has_labels).
void write_volume(const std::filesystem::path& path, const SubjectVolume& volume);
SubjectVolume read_volume(const std::filesystem::path& path);
VolumeHeader read_volume_header(const std::filesystem::path& path);

}  // namespace shape_tta

#endif  // SHAPE_TTA_DATA_HPP_
