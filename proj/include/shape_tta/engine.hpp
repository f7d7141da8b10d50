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

#ifndef SHAPE_TTA_ENGINE_HPP_
#define SHAPE_TTA_ENGINE_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "shape_tta/data.hpp"
#include "shape_tta/losses.hpp"
#include "shape_tta/optimizer.hpp"
#include "shape_tta/priors.hpp"
#include "shape_tta/random.hpp"
#include "shape_tta/segnet.hpp"

namespace shape_tta {

// Step decay: base * decay^floor(epoch / period).
struct LrSchedule {
  double base = 5e-4;
  double decay = 0.9;
  std::size_t period = 20;

  double at(std::size_t epoch) const;
  void validate() const;
};

double lr_at(std::size_t epoch);

struct PretrainConfig {
  std::size_t epochs = 150;
  LrSchedule schedule;
  double weight_decay = 1e-4;
  std::size_t max_batch = 22;
  bool augment = true;
  double bn_momentum = 0.1;
  std::uint64_t seed = 0;
  Precision precision = Precision::kF64;

  void validate() const;
};

struct PretrainEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean cross-entropy over the epoch's batches
  double lr = 0.0;
};

struct PretrainResult {
  ParameterStore params;
  std::vector<PretrainEpoch> trace;
};

// Cross-entropy training of every parameter on labeled source subjects.
// Each step is one window of up to max_batch contiguous slices of one
// subject; window order is shuffled per epoch.
PretrainResult pretrain(const NetworkConfig& network, std::span<const SubjectVolume> subjects,
                        const PretrainConfig& config);

struct AdaptConfig {
  AdaptMode mode = AdaptMode::kRatioCentroid;
  std::size_t epochs_init = 150;
  std::size_t epochs_shape = 200;
  LrSchedule schedule;
  double weight_decay = 1e-4;
  std::size_t max_batch = 22;
  // Empty nu means "derive from the ratio prior".
  LossWeights weights;
  std::uint64_t seed = 0;
  Precision precision = Precision::kF64;

  std::size_t total_epochs() const { return epochs_init + epochs_shape; }
  // Rejects a shape phase for modes that have none.
  void validate() const;
};

struct LossRecord {
  std::size_t epoch = 0;
  double entropy = 0.0;  // summed over the epoch's batches
  double kl = 0.0;
  double penalty = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct Prediction {
  std::vector<std::uint8_t> labels;  // N x H x W argmax
  Tensor softmax;                    // N x K x H x W
};

// Full-subject prediction. kAdapt normalizes with the subject's own batch
// statistics, kEval with the stored running statistics.
Prediction predict(const ParameterStore& params, const Tensor& images, ForwardMode mode,
                   Precision precision = Precision::kF64);

std::vector<std::uint8_t> argmax_labels(const Tensor& softmax);

struct AdaptResult {
  ParameterStore params;
  Prediction prediction;
  std::vector<LossRecord> trace;
  std::size_t epochs_run = 0;
  // Set when the shape phase ran with no class qualifying for a moment
  // prior, which leaves the penalty inert.
  bool penalty_inert = false;
};

// Single-subject adaptation of the batchnorm affine parameters.
//
// Epochs [0, epochs_init) minimize entropy + ratio KL (entropy only for
// tent); epochs [epochs_init, total) add the shape penalty of the mode, with
// the moment prior estimated from hard predictions before the first shape
// epoch and after every shape epoch. The learning-rate schedule runs on the
// global epoch index.
class Adapter {
 public:
  Adapter(const ParameterStore& pretrained, const Tensor& images, DescriptorPrior prior,
          AdaptConfig config);
  Adapter(const Adapter& other);
  Adapter& operator=(const Adapter&) = delete;

  // Deep copy that continues under another mode and shape-epoch count. Only
  // valid while no shape epoch has run and the first-phase objective is the
  // same for both modes.
  Adapter fork(AdaptMode mode, std::size_t epochs_shape) const;

  void run_epoch();
  void run();

  std::size_t epoch() const { return epoch_; }
  const AdaptConfig& config() const { return config_; }
  const ParameterStore& params() const { return params_; }
  const std::vector<LossRecord>& trace() const { return trace_; }

  AdaptResult result() const;

 private:
  void estimate_prior();
  std::vector<std::vector<std::size_t>> batches();

  ParameterStore params_;
  Tensor images_;
  DescriptorPrior prior_;
  AdaptConfig config_;
  Adam adam_;
  Rng rng_;
  std::size_t epoch_ = 0;
  std::vector<LossRecord> trace_;
  bool penalty_inert_ = false;
};

AdaptResult adapt_subject(const ParameterStore& pretrained, const Tensor& images,
                          const DescriptorPrior& prior, const AdaptConfig& config);

void write_loss_trace(const std::filesystem::path& path, std::span<const LossRecord> trace);
void write_pretrain_trace(const std::filesystem::path& path, std::span<const PretrainEpoch> trace);

}  // namespace shape_tta

#endif  // SHAPE_TTA_ENGINE_HPP_
