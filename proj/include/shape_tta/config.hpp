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

#ifndef SHAPE_TTA_CONFIG_HPP_
#define SHAPE_TTA_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "shape_tta/data.hpp"
#include "shape_tta/engine.hpp"
#include "shape_tta/losses.hpp"
#include "shape_tta/segnet.hpp"

namespace shape_tta {

// Schema violation. `problems` lists every offending key path.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct PriorConfig {
  // Coarse per-class ratios. When absent, the phantom's nominal ratios are
  // perturbed by up to +-perturbation (relative) and renormalized.
  std::optional<std::vector<double>> ratios;
  std::optional<std::vector<double>> thresholds;
  double perturbation = 0.2;
  // Per-slice presence tags; synth writes tags.json next to the target set.
  bool use_tags = true;
  std::optional<std::string> tag_file;
};

struct DataConfig {
  PhantomFamily phantom = PhantomFamily::kCardiac;
  std::size_t source_subjects = 10;
  std::size_t target_subjects = 6;
  std::size_t slices = 16;
  std::size_t height = 64;
  std::size_t width = 64;

  PhantomSpec phantom_spec() const;
};

struct RunConfig {
  NetworkConfig network;  // seed is derived from `seed`
  PretrainConfig pretrain;
  AdaptConfig adapt;  // mode is set per run from `modes`
  std::vector<AdaptMode> modes{AdaptMode::kTent, AdaptMode::kRatio, AdaptMode::kRatioCentroid,
                               AdaptMode::kRatioDistance};
  PriorConfig prior;
  DataConfig data;
  std::uint64_t seed = 0;
  Precision precision = Precision::kF64;

  // Reduced epoch counts used by `bench` when no config file is given.
  static RunConfig desk_benchmark();

  void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical JSON of every resolved field.
std::string to_json(const RunConfig& config);

// 64-bit FNV-1a of the canonical JSON, as 16 hex digits.
std::string config_hash(const RunConfig& config);

const char* to_string(Precision p);

}  // namespace shape_tta

#endif  // SHAPE_TTA_CONFIG_HPP_
