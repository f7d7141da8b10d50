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
#include <vector>

#include "binary_io.hpp"
#include "json.hpp"
#include "shape_tta/segnet.hpp"

namespace shape_tta {
namespace {

constexpr std::string_view kMagic = "STTACKPT";

using nlohmann::json;

json config_json(const NetworkConfig& c) {
  return {{"in_channels", c.in_channels},
          {"num_classes", c.num_classes},
          {"base_width", c.base_width},
          {"depth", c.depth},
          {"seed", c.seed}};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params) {
  json manifest;
  manifest["format"] = "shape_tta.checkpoint";
  manifest["version"] = 1;
  manifest["config"] = config_json(params.config());
  manifest["seed"] = params.config().seed;
  json tensors = json::array();
  for (const auto& e : params.entries()) {
    tensors.push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"role", to_string(e.role)}});
  }
  for (const auto& [name, rs] : params.running_stats()) {
    tensors.push_back({{"name", name + ".running_mean"}, {"shape", {rs.mean.size()}}, {"role", "buffer"}});
    tensors.push_back({{"name", name + ".running_var"}, {"shape", {rs.var.size()}}, {"role", "buffer"}});
  }
  manifest["tensors"] = tensors;

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  detail::write_framed_header(os, kMagic, manifest.dump());
  for (const auto& e : params.entries()) {
    for (double v : e.tensor.values()) detail::write_f32_le(os, static_cast<float>(v));
  }
  for (const auto& [name, rs] : params.running_stats()) {
    for (double v : rs.mean) detail::write_f32_le(os, static_cast<float>(v));
    for (double v : rs.var) detail::write_f32_le(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  const detail::FramedHeader header = detail::read_framed_header(is, kMagic, path);
  json manifest;
  try {
    manifest = json::parse(header.json);
  } catch (const json::exception& e) {
    throw detail::FormatError(path.string() + ": malformed manifest: " + e.what());
  }
  const json& c = manifest.at("config");
  NetworkConfig config;
  config.in_channels = c.at("in_channels").get<std::size_t>();
  config.num_classes = c.at("num_classes").get<std::size_t>();
  config.base_width = c.at("base_width").get<std::size_t>();
  config.depth = c.at("depth").get<std::size_t>();
  config.seed = c.at("seed").get<std::uint64_t>();
  config.validate();

  std::size_t total = 0;
  for (const json& t : manifest.at("tensors")) total += numel(t.at("shape").get<Shape>());
  if (header.file_size - header.payload_offset != 4 * total) {
    throw detail::FormatError(path.string() + ": payload holds " +
                              std::to_string(header.file_size - header.payload_offset) +
                              " bytes, manifest expects " + std::to_string(4 * total));
  }
  std::vector<unsigned char> payload(4 * total);
  is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));

  ParameterStore store(config);
  std::size_t offset = 0;
  auto take = [&](std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i, offset += 4) v[i] = detail::read_f32_le(&payload[offset]);
    return v;
  };
  const std::string mean_suffix = ".running_mean";
  const std::string var_suffix = ".running_var";
  for (const json& t : manifest.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<Shape>();
    const auto role = t.at("role").get<std::string>();
    std::vector<double> values = take(numel(shape));
    if (role == "buffer") {
      if (name.ends_with(mean_suffix)) {
        store.running_stats()[name.substr(0, name.size() - mean_suffix.size())].mean = std::move(values);
      } else if (name.ends_with(var_suffix)) {
        store.running_stats()[name.substr(0, name.size() - var_suffix.size())].var = std::move(values);
      } else {
        throw detail::FormatError(path.string() + ": unknown buffer " + name);
      }
    } else if (role == "bn_affine" || role == "frozen") {
      store.add(name, Tensor(shape, std::move(values)),
                role == "bn_affine" ? ParamRole::kBnAffine : ParamRole::kFrozen);
    } else {
      throw detail::FormatError(path.string() + ": unknown role '" + role + "' for " + name);
    }
  }
  return store;
}

}  // namespace shape_tta
