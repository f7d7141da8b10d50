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

#include "shape_tta/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "shape_tta/moments.hpp"
#include "shape_tta/ops.hpp"

namespace shape_tta {
namespace {

constexpr std::uint64_t kPretrainShuffleTag = 0x70726574;
constexpr std::uint64_t kPretrainAugmentTag = 0x61756720;
constexpr std::uint64_t kAdaptShuffleTag = 0x61646170;

struct Window {
  std::size_t subject;
  std::size_t start;
  std::size_t length;
};

std::vector<Window> slice_windows(std::size_t subject, std::size_t slices, std::size_t max_batch) {
  const std::size_t b = std::min(slices, max_batch);
  std::vector<Window> out;
  for (std::size_t s = 0; s < slices; s += b) out.push_back({subject, s, std::min(b, slices - s)});
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

double LrSchedule::at(std::size_t epoch) const {
  return base * std::pow(decay, static_cast<double>(epoch / period));
}

void LrSchedule::validate() const {
  if (!(base >= 0.0) || !std::isfinite(base)) {
    throw std::invalid_argument("lr schedule: base rate must be finite and >= 0");
  }
  if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("lr schedule: decay must be in (0, 1]");
  if (period == 0) throw std::invalid_argument("lr schedule: period must be >= 1");
}

double lr_at(std::size_t epoch) { return LrSchedule{}.at(epoch); }

void PretrainConfig::validate() const {
  schedule.validate();
  if (max_batch == 0) throw std::invalid_argument("pretrain: max_batch must be >= 1");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("pretrain: weight_decay must be >= 0");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) {
    throw std::invalid_argument("pretrain: bn_momentum must be in (0, 1]");
  }
}

PretrainResult pretrain(const NetworkConfig& network, std::span<const SubjectVolume> subjects,
                        const PretrainConfig& config) {
  config.validate();
  if (subjects.empty()) throw std::invalid_argument("pretrain: empty dataset");
  for (const SubjectVolume& s : subjects) {
    if (!s.has_labels()) {
      throw std::invalid_argument("pretrain: subject " + s.header.subject_id + " has no labels");
    }
  }
  PrecisionScope precision(config.precision);
  PretrainResult result{build_network(network), {}};
  ParameterStore& params = result.params;
  params.set_trainable(ParamRole::kBnAffine, true);
  params.set_trainable(ParamRole::kFrozen, true);
  std::vector<Tensor> all;
  for (const auto& e : params.entries()) all.push_back(e.tensor);
  Adam adam(all, AdamConfig{.weight_decay = config.weight_decay});
  Rng order_rng(derive_seed(config.seed, kPretrainShuffleTag));

  std::vector<Window> windows;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto w = slice_windows(s, subjects[s].header.slices, config.max_batch);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  const std::size_t k = network.num_classes;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<Tensor> inputs;
    std::vector<Tensor> targets;
    for (std::size_t s = 0; s < subjects.size(); ++s) {
      const SubjectVolume vol =
          config.augment
              ? augment_affine(subjects[s],
                               derive_seed(derive_seed(config.seed, kPretrainAugmentTag + epoch), s))
              : subjects[s];
      const VolumeHeader& h = vol.header;
      inputs.push_back(normalized_input(vol));
      targets.push_back(one_hot(vol.labels, h.slices, h.height, h.width, k));
    }
    std::vector<Window> order = windows;
    order_rng.shuffle(order);
    const double lr = config.schedule.at(epoch);
    double loss_sum = 0.0;
    for (const Window& w : order) {
      const Tensor x = slice(inputs[w.subject], 0, w.start, w.length);
      const Tensor y = slice(targets[w.subject], 0, w.start, w.length);
      ForwardOutput out;
      {
        Tape tape;
        out = forward(params, x, ForwardMode::kTrain);
        const Tensor loss = cross_entropy(y, out.softmax);
        adam.zero_grad();
        tape.backward(loss);
        loss_sum += loss.item();
      }
      adam.step(lr);
      update_running_stats(params, out.batch_stats, config.bn_momentum);
    }
    result.trace.push_back({epoch, loss_sum / static_cast<double>(order.size()), lr});
  }
  adam.zero_grad();
  params.set_trainable(ParamRole::kBnAffine, false);
  params.set_trainable(ParamRole::kFrozen, false);
  return result;
}

void AdaptConfig::validate() const {
  schedule.validate();
  if (max_batch == 0) throw std::invalid_argument("adapt: max_batch must be >= 1");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("adapt: weight_decay must be >= 0");
  if (!has_shape_phase(mode) && epochs_shape > 0) {
    throw std::invalid_argument(std::string("adapt: mode ") + to_string(mode) +
                                " has no shape phase but epochs_shape = " +
                                std::to_string(epochs_shape));
  }
  if (!weights.nu.empty()) weights.validate();
}

std::vector<std::uint8_t> argmax_labels(const Tensor& softmax) {
  if (softmax.dim() != 4) throw ShapeError("argmax_labels", {softmax.shape()}, "expected N x K x H x W");
  const std::size_t n = softmax.size(0), k = softmax.size(1);
  const std::size_t hw = softmax.size(2) * softmax.size(3);
  const auto s = softmax.values();
  std::vector<std::uint8_t> labels(n * hw);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (s[(b * k + c) * hw + i] > s[(b * k + best) * hw + i]) best = c;
      }
      labels[b * hw + i] = static_cast<std::uint8_t>(best);
    }
  }
  return labels;
}

Prediction predict(const ParameterStore& params, const Tensor& images, ForwardMode mode,
                   Precision precision) {
  PrecisionScope scope(precision);
  ForwardOutput out = forward(params, images, mode);
  Tensor soft = out.softmax.detach();
  return {argmax_labels(soft), soft};
}

Adapter::Adapter(const ParameterStore& pretrained, const Tensor& images, DescriptorPrior prior,
                 AdaptConfig config)
    : params_(pretrained.clone()),
      images_(images.detach()),
      prior_(std::move(prior)),
      config_(std::move(config)),
      adam_({}, {}),
      rng_(derive_seed(config_.seed, kAdaptShuffleTag)) {
  config_.validate();
  const std::size_t k = params_.config().num_classes;
  if (images_.dim() != 4 || images_.size(1) != params_.config().in_channels) {
    throw ShapeError("Adapter", {images_.shape()}, "expected N x C x H x W subject images");
  }
  if (prior_.ratio.num_classes() != k) {
    throw std::invalid_argument("Adapter: ratio prior has " +
                                std::to_string(prior_.ratio.num_classes()) +
                                " classes, network has " + std::to_string(k));
  }
  if (config_.weights.nu.empty()) config_.weights.nu = compute_class_weights(prior_.ratio.ratio);
  config_.weights.validate();
  prior_.moments.reset();
  params_.set_trainable(ParamRole::kFrozen, false);
  params_.set_trainable(ParamRole::kBnAffine, true);
  adam_ = Adam(adaptable_parameters(params_), AdamConfig{.weight_decay = config_.weight_decay});
}

Adapter::Adapter(const Adapter& other)
    : params_(other.params_.clone()),
      images_(other.images_),
      prior_(other.prior_),
      config_(other.config_),
      adam_(other.adam_),
      rng_(other.rng_),
      epoch_(other.epoch_),
      trace_(other.trace_),
      penalty_inert_(other.penalty_inert_) {
  adam_.rebind(adaptable_parameters(params_));
}

Adapter Adapter::fork(AdaptMode mode, std::size_t epochs_shape) const {
  if (epoch_ > config_.epochs_init) {
    throw std::logic_error("Adapter::fork: the shape phase has already started");
  }
  if ((mode == AdaptMode::kTent) != (config_.mode == AdaptMode::kTent)) {
    throw std::logic_error("Adapter::fork: first-phase objectives differ");
  }
  Adapter copy(*this);
  copy.config_.mode = mode;
  copy.config_.epochs_shape = epochs_shape;
  copy.config_.validate();
  return copy;
}

std::vector<std::vector<std::size_t>> Adapter::batches() {
  std::vector<Window> windows = slice_windows(0, images_.size(0), config_.max_batch);
  rng_.shuffle(windows);
  std::vector<std::vector<std::size_t>> out;
  for (const Window& w : windows) {
    std::vector<std::size_t> idx(w.length);
    for (std::size_t i = 0; i < w.length; ++i) idx[i] = w.start + i;
    out.push_back(std::move(idx));
  }
  return out;
}

void Adapter::estimate_prior() {
  const Descriptor d = config_.mode == AdaptMode::kRatioCentroid ? Descriptor::kCentroid
                                                                  : Descriptor::kDistance;
  const Prediction pred = predict(params_, images_, ForwardMode::kAdapt, config_.precision);
  const Tensor masks = one_hot(pred.labels, images_.size(0), images_.size(2), images_.size(3),
                               params_.config().num_classes);
  prior_.moments = estimate_moment_prior(masks, d, prior_.ratio.threshold);
  if (!prior_.moments->any()) penalty_inert_ = true;
}

void Adapter::run_epoch() {
  if (epoch_ >= config_.total_epochs()) throw std::logic_error("Adapter: all epochs already run");
  const bool shape_phase = epoch_ >= config_.epochs_init;
  AdaptMode objective = config_.mode;
  if (!shape_phase && config_.mode != AdaptMode::kTent) objective = AdaptMode::kRatio;
  if (shape_phase && !prior_.moments) estimate_prior();

  PrecisionScope precision(config_.precision);
  LossRecord record;
  record.epoch = epoch_;
  record.lr = config_.schedule.at(epoch_);
  for (const auto& idx : batches()) {
    const Tensor x = slice(images_, 0, idx.front(), idx.size());
    {
      Tape tape;
      const ForwardOutput out = forward(params_, x, ForwardMode::kAdapt);
      const LossBreakdown loss = ttas_objective(out.softmax, idx, prior_, config_.weights, objective);
      adam_.zero_grad();
      tape.backward(loss.total);
      record.entropy += loss.entropy.item();
      record.kl += loss.kl.item();
      record.penalty += loss.penalty.item();
      record.total += loss.total.item();
    }
    adam_.step(record.lr);
  }
  adam_.zero_grad();
  trace_.push_back(record);
  ++epoch_;
  if (shape_phase && epoch_ < config_.total_epochs()) estimate_prior();
}

void Adapter::run() {
  while (epoch_ < config_.total_epochs()) run_epoch();
}

AdaptResult Adapter::result() const {
  AdaptResult r;
  r.params = params_.clone();
  r.params.set_trainable(ParamRole::kBnAffine, false);
  r.prediction = predict(params_, images_, ForwardMode::kAdapt, config_.precision);
  r.trace = trace_;
  r.epochs_run = epoch_;
  r.penalty_inert = penalty_inert_;
  return r;
}

AdaptResult adapt_subject(const ParameterStore& pretrained, const Tensor& images,
                          const DescriptorPrior& prior, const AdaptConfig& config) {
  Adapter adapter(pretrained, images, prior, config);
  adapter.run();
  return adapter.result();
}

void write_loss_trace(const std::filesystem::path& path, std::span<const LossRecord> trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "epoch,entropy_term,kl_term,penalty_term,total,lr\n";
  for (const LossRecord& r : trace) {
    os << r.epoch << ',' << format_double(r.entropy) << ',' << format_double(r.kl) << ','
       << format_double(r.penalty) << ',' << format_double(r.total) << ',' << format_double(r.lr)
       << '\n';
  }
}

void write_pretrain_trace(const std::filesystem::path& path, std::span<const PretrainEpoch> trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "epoch,loss,lr\n";
  for (const PretrainEpoch& r : trace) {
    os << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.lr) << '\n';
  }
}

}  // namespace shape_tta
