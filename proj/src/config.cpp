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

#include "shape_tta/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"

namespace shape_tta {
namespace {

using nlohmann::ordered_json;
using Json = nlohmann::json;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = "invalid run config:";
  for (const auto& p : problems) out += "\n  " + p;
  return out;
}

// Walks a parsed document, recording every problem instead of stopping at
// the first.
class Reader {
 public:
  std::vector<std::string> problems;

  // Returns the object at `key` (or null) after checking its keys.
  const Json* section(const Json& parent, const std::string& key, const std::string& path,
                      const std::set<std::string>& allowed) {
    if (!parent.contains(key)) return nullptr;
    const Json& j = parent.at(key);
    if (!j.is_object()) {
      problems.push_back(path + ": expected an object");
      return nullptr;
    }
    check_keys(j, path, allowed);
    return &j;
  }

  void check_keys(const Json& j, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& [k, v] : j.items()) {
      if (!allowed.count(k)) problems.push_back((path.empty() ? k : path + "." + k) + ": unknown key");
    }
  }

  template <typename T>
    requires std::is_unsigned_v<T>
  void read(const Json* obj, const std::string& path, const char* key, T& out) {
    if (!obj || !obj->contains(key)) return;
    const Json& v = obj->at(key);
    if (!v.is_number_unsigned()) {
      problems.push_back(join(path, key) + ": expected a non-negative integer");
      return;
    }
    out = v.get<T>();
  }

  void read(const Json* obj, const std::string& path, const char* key, double& out) {
    if (!obj || !obj->contains(key)) return;
    const Json& v = obj->at(key);
    if (!v.is_number()) {
      problems.push_back(join(path, key) + ": expected a number");
      return;
    }
    out = v.get<double>();
  }

  void read(const Json* obj, const std::string& path, const char* key, bool& out) {
    if (!obj || !obj->contains(key)) return;
    const Json& v = obj->at(key);
    if (!v.is_boolean()) {
      problems.push_back(join(path, key) + ": expected true or false");
      return;
    }
    out = v.get<bool>();
  }

  std::optional<std::string> string(const Json* obj, const std::string& path, const char* key) {
    if (!obj || !obj->contains(key)) return std::nullopt;
    const Json& v = obj->at(key);
    if (!v.is_string()) {
      problems.push_back(join(path, key) + ": expected a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  std::optional<std::vector<double>> numbers(const Json* obj, const std::string& path,
                                             const char* key) {
    if (!obj || !obj->contains(key)) return std::nullopt;
    const Json& v = obj->at(key);
    if (!v.is_array()) {
      problems.push_back(join(path, key) + ": expected an array of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    for (const Json& e : v) {
      if (!e.is_number()) {
        problems.push_back(join(path, key) + ": expected an array of numbers");
        return std::nullopt;
      }
      out.push_back(e.get<double>());
    }
    return out;
  }

  // Applies a parser that may throw std::invalid_argument.
  template <typename T, typename F>
  void parse(const std::optional<std::string>& text, const std::string& where, T& out, F f) {
    if (!text) return;
    try {
      out = f(*text);
    } catch (const std::invalid_argument& e) {
      problems.push_back(where + ": " + e.what());
    }
  }
};

void read_schedule(Reader& r, const Json* obj, const std::string& path, LrSchedule& s) {
  r.read(obj, path, "lr", s.base);
  r.read(obj, path, "lr_decay", s.decay);
  r.read(obj, path, "lr_decay_period", s.period);
}

ordered_json schedule_json(const LrSchedule& s) {
  return {{"lr", s.base}, {"lr_decay", s.decay}, {"lr_decay_period", s.period}};
}

Precision parse_precision(const std::string& s) {
  if (s == "f64") return Precision::kF64;
  if (s == "f32") return Precision::kF32;
  throw std::invalid_argument("unknown precision '" + s + "' (expected f64 or f32)");
}

PenaltyForm parse_penalty_form(const std::string& s) {
  if (s == "band") return PenaltyForm::kBand;
  if (s == "printed") return PenaltyForm::kPrinted;
  throw std::invalid_argument("unknown penalty form '" + s + "' (expected band or printed)");
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_problems(problems)), problems_(std::move(problems)) {}

const char* to_string(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

PhantomSpec DataConfig::phantom_spec() const {
  PhantomSpec spec = phantom_for(phantom);
  spec.slices = slices;
  spec.height = height;
  spec.width = width;
  return spec;
}

RunConfig RunConfig::desk_benchmark() {
  RunConfig c;
  c.pretrain.epochs = 40;
  c.pretrain.schedule.base = 2e-3;
  c.adapt.epochs_init = 30;
  c.adapt.epochs_shape = 40;
  c.seed = 7;
  return c;
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  auto check = [&](const std::string& where, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      problems.push_back(where + ": " + e.what());
    }
  };
  check("network", [&] { network.validate(); });
  check("pretrain", [&] { pretrain.validate(); });
  check("adapt", [&] {
    AdaptConfig a = adapt;
    a.mode = AdaptMode::kRatioCentroid;
    a.validate();
  });
  check("loss", [&] {
    LossWeights w = adapt.weights;
    if (w.nu.empty()) w.nu.assign(network.num_classes, 1.0 / static_cast<double>(network.num_classes));
    w.validate();
  });
  check("data", [&] { data.phantom_spec().validate(); });
  if (modes.empty()) problems.push_back("adapt.modes: at least one mode is required");
  if (network.num_classes != data.phantom_spec().num_classes()) {
    problems.push_back("network.num_classes: " + std::to_string(network.num_classes) +
                       " does not match the " + to_string(data.phantom) + " phantom (" +
                       std::to_string(data.phantom_spec().num_classes()) + " classes)");
  }
  if (prior.ratios && prior.ratios->size() != network.num_classes) {
    problems.push_back("prior.ratios: expected " + std::to_string(network.num_classes) + " values");
  }
  if (prior.thresholds && prior.thresholds->size() != network.num_classes) {
    problems.push_back("prior.thresholds: expected " + std::to_string(network.num_classes) +
                       " values");
  }
  if (!(prior.perturbation >= 0.0 && prior.perturbation < 1.0)) {
    problems.push_back("prior.perturbation: must be in [0, 1)");
  }
  const std::size_t factor = std::size_t{1} << network.depth;
  if (data.height % factor != 0 || data.width % factor != 0) {
    problems.push_back("data: height and width must be divisible by 2^depth = " +
                       std::to_string(factor));
  }
  if (!problems.empty()) throw ConfigError(problems);
}

RunConfig parse_run_config(const std::string& json_text) {
  Json doc;
  try {
    doc = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw ConfigError({std::string("not valid JSON: ") + e.what()});
  }
  if (!doc.is_object()) throw ConfigError({"top level: expected an object"});

  RunConfig c;
  Reader r;
  r.check_keys(doc, "",
               {"network", "pretrain", "adapt", "loss", "prior", "data", "seed", "precision"});
  r.read(&doc, "", "seed", c.seed);
  r.parse(r.string(&doc, "", "precision"), "precision", c.precision, parse_precision);

  const Json* net = r.section(doc, "network", "network",
                              {"in_channels", "num_classes", "base_width", "depth"});
  r.read(net, "network", "in_channels", c.network.in_channels);
  r.read(net, "network", "num_classes", c.network.num_classes);
  r.read(net, "network", "base_width", c.network.base_width);
  r.read(net, "network", "depth", c.network.depth);

  const Json* pre = r.section(doc, "pretrain", "pretrain",
                              {"epochs", "lr", "lr_decay", "lr_decay_period", "weight_decay",
                               "max_batch", "augment", "bn_momentum"});
  r.read(pre, "pretrain", "epochs", c.pretrain.epochs);
  read_schedule(r, pre, "pretrain", c.pretrain.schedule);
  r.read(pre, "pretrain", "weight_decay", c.pretrain.weight_decay);
  r.read(pre, "pretrain", "max_batch", c.pretrain.max_batch);
  r.read(pre, "pretrain", "augment", c.pretrain.augment);
  r.read(pre, "pretrain", "bn_momentum", c.pretrain.bn_momentum);

  const Json* ad = r.section(doc, "adapt", "adapt",
                             {"modes", "epochs_init", "epochs_shape", "lr", "lr_decay",
                              "lr_decay_period", "weight_decay", "max_batch"});
  if (ad && ad->contains("modes")) {
    const Json& m = ad->at("modes");
    if (!m.is_array()) {
      r.problems.push_back("adapt.modes: expected an array of mode names");
    } else {
      c.modes.clear();
      for (const Json& e : m) {
        if (!e.is_string()) {
          r.problems.push_back("adapt.modes: expected an array of mode names");
          break;
        }
        AdaptMode mode{};
        r.parse(std::optional<std::string>(e.get<std::string>()), "adapt.modes", mode,
                parse_adapt_mode);
        c.modes.push_back(mode);
      }
    }
  }
  r.read(ad, "adapt", "epochs_init", c.adapt.epochs_init);
  r.read(ad, "adapt", "epochs_shape", c.adapt.epochs_shape);
  read_schedule(r, ad, "adapt", c.adapt.schedule);
  r.read(ad, "adapt", "weight_decay", c.adapt.weight_decay);
  r.read(ad, "adapt", "max_batch", c.adapt.max_batch);

  const Json* loss =
      r.section(doc, "loss", "loss", {"lambda", "kl_weight", "band", "penalty_form", "nu"});
  r.read(loss, "loss", "lambda", c.adapt.weights.lambda);
  r.read(loss, "loss", "kl_weight", c.adapt.weights.kl_weight);
  r.read(loss, "loss", "band", c.adapt.weights.band);
  if (auto nu = r.numbers(loss, "loss", "nu")) c.adapt.weights.nu = *nu;
  r.parse(r.string(loss, "loss", "penalty_form"), "loss.penalty_form",
          c.adapt.weights.penalty_form, parse_penalty_form);

  const Json* pr = r.section(doc, "prior", "prior",
                             {"ratios", "thresholds", "perturbation", "use_tags", "tag_file"});
  c.prior.ratios = r.numbers(pr, "prior", "ratios");
  c.prior.thresholds = r.numbers(pr, "prior", "thresholds");
  r.read(pr, "prior", "perturbation", c.prior.perturbation);
  r.read(pr, "prior", "use_tags", c.prior.use_tags);
  c.prior.tag_file = r.string(pr, "prior", "tag_file");

  const Json* data = r.section(doc, "data", "data",
                               {"phantom", "source_subjects", "target_subjects", "slices",
                                "height", "width"});
  r.parse(r.string(data, "data", "phantom"), "data.phantom", c.data.phantom,
          parse_phantom_family);
  r.read(data, "data", "source_subjects", c.data.source_subjects);
  r.read(data, "data", "target_subjects", c.data.target_subjects);
  r.read(data, "data", "slices", c.data.slices);
  r.read(data, "data", "height", c.data.height);
  r.read(data, "data", "width", c.data.width);
  if (!net || !net->contains("num_classes")) c.network.num_classes = c.data.phantom_spec().num_classes();

  if (!r.problems.empty()) throw ConfigError(r.problems);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError({"cannot open config file " + path.string()});
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& c) {
  ordered_json j;
  j["network"] = {{"in_channels", c.network.in_channels},
                  {"num_classes", c.network.num_classes},
                  {"base_width", c.network.base_width},
                  {"depth", c.network.depth}};
  ordered_json pre = {{"epochs", c.pretrain.epochs}};
  pre.update(schedule_json(c.pretrain.schedule));
  pre["weight_decay"] = c.pretrain.weight_decay;
  pre["max_batch"] = c.pretrain.max_batch;
  pre["augment"] = c.pretrain.augment;
  pre["bn_momentum"] = c.pretrain.bn_momentum;
  j["pretrain"] = pre;
  ordered_json modes = ordered_json::array();
  for (AdaptMode m : c.modes) modes.push_back(to_string(m));
  ordered_json ad = {{"modes", modes},
                     {"epochs_init", c.adapt.epochs_init},
                     {"epochs_shape", c.adapt.epochs_shape}};
  ad.update(schedule_json(c.adapt.schedule));
  ad["weight_decay"] = c.adapt.weight_decay;
  ad["max_batch"] = c.adapt.max_batch;
  j["adapt"] = ad;
  ordered_json loss = {{"lambda", c.adapt.weights.lambda},
                       {"kl_weight", c.adapt.weights.kl_weight},
                       {"band", c.adapt.weights.band},
                       {"penalty_form",
                        c.adapt.weights.penalty_form == PenaltyForm::kBand ? "band" : "printed"}};
  if (!c.adapt.weights.nu.empty()) loss["nu"] = c.adapt.weights.nu;
  j["loss"] = loss;
  ordered_json pr;
  if (c.prior.ratios) pr["ratios"] = *c.prior.ratios;
  if (c.prior.thresholds) pr["thresholds"] = *c.prior.thresholds;
  pr["perturbation"] = c.prior.perturbation;
  pr["use_tags"] = c.prior.use_tags;
  if (c.prior.tag_file) pr["tag_file"] = *c.prior.tag_file;
  j["prior"] = pr;
  j["data"] = {{"phantom", to_string(c.data.phantom)},
               {"source_subjects", c.data.source_subjects},
               {"target_subjects", c.data.target_subjects},
               {"slices", c.data.slices},
               {"height", c.data.height},
               {"width", c.data.width}};
  j["seed"] = c.seed;
  j["precision"] = to_string(c.precision);
  return j.dump(2);
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace shape_tta
