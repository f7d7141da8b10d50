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

#include <fstream>

#include "binary_io.hpp"
#include "json.hpp"
#include "shape_tta/data.hpp"

namespace shape_tta {
namespace {

constexpr std::string_view kMagic = "STTAVOL1";

nlohmann::ordered_json header_json(const VolumeHeader& h) {
  nlohmann::ordered_json j;
  j["format"] = "shape_tta.volume";
  j["version"] = 1;
  j["subject_id"] = h.subject_id;
  j["slices"] = h.slices;
  j["height"] = h.height;
  j["width"] = h.width;
  j["spacing"] = h.spacing;
  j["domain"] = to_string(h.domain);
  j["seed"] = h.seed;
  j["num_classes"] = h.num_classes;
  j["phantom"] = h.phantom;
  j["has_image"] = h.has_image;
  j["has_labels"] = h.has_labels;
  return j;
}

VolumeHeader parse_header(const std::string& text, const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "shape_tta.volume") {
      throw VolumeFormatError(path.string() + ": not a volume file");
    }
    VolumeHeader h;
    h.subject_id = j.at("subject_id").get<std::string>();
    h.slices = j.at("slices").get<std::size_t>();
    h.height = j.at("height").get<std::size_t>();
    h.width = j.at("width").get<std::size_t>();
    h.spacing = j.at("spacing").get<double>();
    h.domain = parse_domain(j.at("domain").get<std::string>());
    h.seed = j.at("seed").get<std::uint64_t>();
    h.num_classes = j.at("num_classes").get<std::size_t>();
    h.phantom = j.at("phantom").get<std::string>();
    h.has_image = j.at("has_image").get<bool>();
    h.has_labels = j.at("has_labels").get<bool>();
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw VolumeFormatError(path.string() + ": malformed header: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw VolumeFormatError(path.string() + ": " + e.what());
  }
}

std::uint64_t payload_bytes(const VolumeHeader& h) {
  return (h.has_image ? 4 * h.voxels() : 0) + (h.has_labels ? h.voxels() : 0);
}

}  // namespace

void write_volume(const std::filesystem::path& path, const SubjectVolume& volume) {
  VolumeHeader h = volume.header;
  h.has_image = !volume.intensities.empty();
  h.has_labels = volume.has_labels();
  if ((h.has_image && volume.intensities.size() != h.voxels()) ||
      (h.has_labels && volume.labels.size() != h.voxels())) {
    throw std::invalid_argument("write_volume: payload size does not match header dimensions");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_volume: cannot open " + path.string());
  detail::write_framed_header(os, kMagic, header_json(h).dump());
  for (float v : volume.intensities) detail::write_f32_le(os, v);
  os.write(reinterpret_cast<const char*>(volume.labels.data()),
           static_cast<std::streamsize>(volume.labels.size()));
  if (!os) throw std::runtime_error("write_volume: write failed for " + path.string());
}

VolumeHeader read_volume_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw VolumeFormatError("cannot open " + path.string());
  try {
    return parse_header(detail::read_framed_header(is, kMagic, path).json, path);
  } catch (const detail::FormatError& e) {
    throw VolumeFormatError(e.what());
  }
}

SubjectVolume read_volume(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw VolumeFormatError("cannot open " + path.string());
  detail::FramedHeader framed;
  try {
    framed = detail::read_framed_header(is, kMagic, path);
  } catch (const detail::FormatError& e) {
    throw VolumeFormatError(e.what());
  }
  SubjectVolume v;
  v.header = parse_header(framed.json, path);
  const std::uint64_t expected = payload_bytes(v.header);
  const std::uint64_t actual = framed.file_size - framed.payload_offset;
  if (actual != expected) {
    throw VolumeFormatError(path.string() + ": payload is " + std::to_string(actual) +
                            " bytes, header implies " + std::to_string(expected));
  }
  const std::size_t n = v.header.voxels();
  if (v.header.has_image) {
    std::vector<unsigned char> raw(4 * n);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    v.intensities.resize(n);
    for (std::size_t i = 0; i < n; ++i) v.intensities[i] = detail::read_f32_le(&raw[4 * i]);
  }
  if (v.header.has_labels) {
    v.labels.resize(n);
    is.read(reinterpret_cast<char*>(v.labels.data()), static_cast<std::streamsize>(n));
  }
  if (!is) throw VolumeFormatError(path.string() + ": short read");
  return v;
}

}  // namespace shape_tta
