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

#ifndef SHAPE_TTA_SEGNET_HPP_
#define SHAPE_TTA_SEGNET_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "shape_tta/tensor.hpp"

namespace shape_tta {

// Small UNet: `depth` stride-2 down stages, nearest-neighbour up stages with
// skip concatenation, two conv3x3 + BN + ReLU per stage and a 1x1 head.
// Stage widths are base_width * 2^level.
struct NetworkConfig {
  std::size_t in_channels = 1;
  std::size_t num_classes = 4;
  std::size_t base_width = 8;
  std::size_t depth = 3;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

enum class ParamRole { kBnAffine, kFrozen };

const char* to_string(ParamRole role);

struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;
};

// Named network parameters with their partition tag, plus BN running
// statistics. Entries keep insertion order, which is the checkpoint order.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    ParamRole role;
  };

  ParameterStore() = default;
  explicit ParameterStore(NetworkConfig config) : config_(config) {}

  void add(std::string name, Tensor tensor, ParamRole role);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  ParamRole role(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t parameter_count() const;

  // BN layer name -> running statistics, in insertion order of layers.
  std::map<std::string, RunningStats>& running_stats() { return running_; }
  const std::map<std::string, RunningStats>& running_stats() const { return running_; }

  const NetworkConfig& config() const { return config_; }

  // Deep copy: no storage shared with this store.
  ParameterStore clone() const;
  // Sets requires_grad on every tensor of the given role.
  void set_trainable(ParamRole role, bool trainable);

 private:
  NetworkConfig config_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, RunningStats> running_;
};

// Deterministic He-style initialization from config.seed; gamma = 1, beta = 0.
ParameterStore build_network(const NetworkConfig& config);

// The batchnorm scale/bias tensors, in store order.
std::vector<Tensor> adaptable_parameters(const ParameterStore& params);

enum class ForwardMode {
  kTrain,  // batch statistics, reported for running-average updates
  kAdapt,  // batch statistics only
  kEval,   // stored running statistics
};

struct ForwardOutput {
  Tensor logits;   // B x K x H x W
  Tensor softmax;  // B x K x H x W
  std::map<std::string, RunningStats> batch_stats;  // filled unless kEval
};

// images: B x C x H x W with H and W divisible by 2^depth.
ForwardOutput forward(const ParameterStore& params, const Tensor& images, ForwardMode mode);

void update_running_stats(ParameterStore& params,
                          const std::map<std::string, RunningStats>& batch_stats,
                          double momentum = 0.1);

inline constexpr double kBatchNormEps = 1e-5;

// Checkpoint: 8-byte magic, u64 little-endian manifest length, JSON manifest,
// then little-endian f32 payloads (parameters, then running statistics) in
// manifest order.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params);
ParameterStore load_checkpoint(const std::filesystem::path& path);

}  // namespace shape_tta

#endif  // SHAPE_TTA_SEGNET_HPP_
