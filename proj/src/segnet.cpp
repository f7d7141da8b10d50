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

#include "shape_tta/segnet.hpp"

#include <cmath>
#include <stdexcept>

#include "shape_tta/ops.hpp"
#include "shape_tta/random.hpp"

namespace shape_tta {
namespace {

std::size_t stage_width(const NetworkConfig& c, std::size_t level) {
  return c.base_width << level;
}

struct ConvSpec {
  std::string stage;
  std::string conv;  // "conv1" or "conv2"
  std::size_t in, out, stride;
};

// Convolution layers in forward order; each is followed by BN + ReLU.
std::vector<ConvSpec> conv_layers(const NetworkConfig& c) {
  std::vector<ConvSpec> layers;
  for (std::size_t l = 0; l < c.depth; ++l) {
    const std::string stage = "enc" + std::to_string(l);
    const std::size_t in = l == 0 ? c.in_channels : stage_width(c, l - 1);
    layers.push_back({stage, "conv1", in, stage_width(c, l), l == 0 ? 1u : 2u});
    layers.push_back({stage, "conv2", stage_width(c, l), stage_width(c, l), 1});
  }
  layers.push_back({"mid", "conv1", stage_width(c, c.depth - 1), stage_width(c, c.depth), 2});
  layers.push_back({"mid", "conv2", stage_width(c, c.depth), stage_width(c, c.depth), 1});
  for (std::size_t l = c.depth; l-- > 0;) {
    const std::string stage = "dec" + std::to_string(l);
    layers.push_back({stage, "conv1", stage_width(c, l + 1) + stage_width(c, l),
                      stage_width(c, l), 1});
    layers.push_back({stage, "conv2", stage_width(c, l), stage_width(c, l), 1});
  }
  return layers;
}

std::string bn_name(const std::string& stage, const std::string& conv) {
  return stage + (conv == "conv1" ? ".bn1" : ".bn2");
}

class Forward {
 public:
  Forward(const ParameterStore& p, ForwardMode mode, ForwardOutput& out)
      : params_(p), mode_(mode), out_(out) {}

  Tensor block(const Tensor& x, const std::string& stage, const std::string& conv,
               std::size_t stride) {
    const Tensor none;
    Tensor y = conv2d(x, params_.at(stage + "." + conv + ".weight"), none, stride, 1);
    const std::string bn = bn_name(stage, conv);
    const Tensor& gamma = params_.at(bn + ".gamma");
    const Tensor& beta = params_.at(bn + ".beta");
    if (mode_ == ForwardMode::kEval) {
      const RunningStats& rs = params_.running_stats().at(bn);
      y = batch_norm_fixed(y, gamma, beta, rs.mean, rs.var, kBatchNormEps);
    } else {
      BatchNormOutput r = batch_norm(y, gamma, beta, kBatchNormEps);
      out_.batch_stats[bn] = {std::move(r.batch_mean), std::move(r.batch_var)};
      y = std::move(r.output);
    }
    return relu(y);
  }

  Tensor stage(const Tensor& x, const std::string& name, std::size_t first_stride) {
    return block(block(x, name, "conv1", first_stride), name, "conv2", 1);
  }

 private:
  const ParameterStore& params_;
  ForwardMode mode_;
  ForwardOutput& out_;
};

}  // namespace

void NetworkConfig::validate() const {
  if (num_classes < 2) throw std::invalid_argument("network: num_classes must be >= 2");
  if (depth < 1) throw std::invalid_argument("network: depth must be >= 1");
  if (base_width < 1) throw std::invalid_argument("network: base_width must be >= 1");
  if (in_channels < 1) throw std::invalid_argument("network: in_channels must be >= 1");
}

const char* to_string(ParamRole role) {
  return role == ParamRole::kBnAffine ? "bn_affine" : "frozen";
}

void ParameterStore::add(std::string name, Tensor tensor, ParamRole role) {
  if (index_.count(name)) throw std::invalid_argument("parameter store: duplicate " + name);
  index_[name] = entries_.size();
  entries_.push_back({std::move(name), std::move(tensor), role});
}

bool ParameterStore::contains(const std::string& name) const { return index_.count(name) > 0; }

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("parameter store: no parameter " + name);
  return entries_[it->second].tensor;
}

ParamRole ParameterStore::role(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("parameter store: no parameter " + name);
  return entries_[it->second].role;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

ParameterStore ParameterStore::clone() const {
  ParameterStore copy(config_);
  for (const auto& e : entries_) copy.add(e.name, e.tensor.clone(), e.role);
  copy.running_ = running_;
  return copy;
}

void ParameterStore::set_trainable(ParamRole role, bool trainable) {
  for (auto& e : entries_) {
    if (e.role == role) e.tensor.set_requires_grad(trainable);
  }
}

ParameterStore build_network(const NetworkConfig& config) {
  config.validate();
  ParameterStore store(config);
  Rng rng(config.seed);
  auto he_weights = [&](Shape shape) {
    const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
    const double stddev = std::sqrt(2.0 / fan_in);
    std::vector<double> w(numel(shape));
    for (double& v : w) v = stddev * rng.normal();
    return Tensor(std::move(shape), std::move(w));
  };
  for (const ConvSpec& layer : conv_layers(config)) {
    store.add(layer.stage + "." + layer.conv + ".weight",
              he_weights({layer.out, layer.in, 3, 3}), ParamRole::kFrozen);
    const std::string bn = bn_name(layer.stage, layer.conv);
    store.add(bn + ".gamma", Tensor::full({layer.out}, 1.0), ParamRole::kBnAffine);
    store.add(bn + ".beta", Tensor::zeros({layer.out}), ParamRole::kBnAffine);
    store.running_stats()[bn] = {std::vector<double>(layer.out, 0.0),
                                 std::vector<double>(layer.out, 1.0)};
  }
  store.add("head.weight", he_weights({config.num_classes, config.base_width, 1, 1}),
            ParamRole::kFrozen);
  store.add("head.bias", Tensor::zeros({config.num_classes}), ParamRole::kFrozen);
  return store;
}

std::vector<Tensor> adaptable_parameters(const ParameterStore& params) {
  std::vector<Tensor> out;
  for (const auto& e : params.entries()) {
    if (e.role == ParamRole::kBnAffine) out.push_back(e.tensor);
  }
  return out;
}

ForwardOutput forward(const ParameterStore& params, const Tensor& images, ForwardMode mode) {
  const NetworkConfig& c = params.config();
  const Shape& s = images.shape();
  const std::size_t factor = std::size_t{1} << c.depth;
  if (s.size() != 4 || s[1] != c.in_channels) {
    throw ShapeError("segnet.forward", {s},
                     "expected B x " + std::to_string(c.in_channels) + " x H x W");
  }
  if (s[2] % factor != 0 || s[3] % factor != 0) {
    throw ShapeError("segnet.forward", {s},
                     "H and W must be divisible by 2^depth = " + std::to_string(factor));
  }
  ForwardOutput out;
  Forward f(params, mode, out);
  std::vector<Tensor> skips;
  Tensor x = images;
  for (std::size_t l = 0; l < c.depth; ++l) {
    x = f.stage(x, "enc" + std::to_string(l), l == 0 ? 1 : 2);
    skips.push_back(x);
  }
  x = f.stage(x, "mid", 2);
  for (std::size_t l = c.depth; l-- > 0;) {
    x = concat({upsample_nearest(x, 2), skips[l]}, 1);
    x = f.stage(x, "dec" + std::to_string(l), 1);
  }
  out.logits = conv2d(x, params.at("head.weight"), params.at("head.bias"), 1, 0);
  out.softmax = softmax(out.logits, 1);
  return out;
}

void update_running_stats(ParameterStore& params,
                          const std::map<std::string, RunningStats>& batch_stats,
                          double momentum) {
  for (const auto& [name, stats] : batch_stats) {
    RunningStats& rs = params.running_stats().at(name);
    for (std::size_t c = 0; c < rs.mean.size(); ++c) {
      rs.mean[c] = (1.0 - momentum) * rs.mean[c] + momentum * stats.mean[c];
      rs.var[c] = (1.0 - momentum) * rs.var[c] + momentum * stats.var[c];
    }
  }
}

}  // namespace shape_tta
