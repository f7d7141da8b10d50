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

#include "shape_tta/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string_view>
#include <thread>

#include "json.hpp"
#include "shape_tta/random.hpp"

namespace shape_tta {
namespace fs = std::filesystem;
namespace {

constexpr const char* kImageSuffix = "_image.vol";
constexpr const char* kLabelSuffix = "_labels.vol";
constexpr const char* kPredSuffix = "_pred.vol";
constexpr const char* kTagFile = "tags.json";

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

AdaptConfig adapt_config_for(const RunConfig& config, AdaptMode mode, std::uint64_t seed) {
  AdaptConfig a = config.adapt;
  a.mode = mode;
  if (!has_shape_phase(mode)) a.epochs_shape = 0;
  a.seed = seed;
  a.precision = config.precision;
  return a;
}

std::vector<Method> bench_methods(const RunConfig& config) {
  std::vector<Method> out{Method::kNoAdap};
  for (Method m : {Method::kTent, Method::kTtasR, Method::kTtasRC, Method::kTtasRD}) {
    if (std::find(config.modes.begin(), config.modes.end(), *adapt_mode(m)) != config.modes.end()) {
      out.push_back(m);
    }
  }
  return out;
}

// Everything one target subject produces in the benchmark.
struct SubjectOutcome {
  std::map<Method, std::vector<std::uint8_t>> labels;
  std::map<Method, std::vector<LossRecord>> traces;
  std::map<Method, ParameterStore> params;
  std::vector<std::string> warnings;
};

}  // namespace

SeedPlan SeedPlan::from(std::uint64_t seed) {
  SeedPlan p;
  p.network = derive_seed(seed, 1);
  p.pretrain = derive_seed(seed, 2);
  p.source_data = derive_seed(seed, 3);
  p.target_data = derive_seed(seed, 4);
  p.prior = derive_seed(seed, 5);
  p.adapt = derive_seed(seed, 6);
  return p;
}

std::uint64_t SeedPlan::subject(const std::string& subject_id) const {
  return derive_seed(adapt, fnv1a(subject_id));
}

const char* method_name(Method m) {
  switch (m) {
    case Method::kNoAdap: return "NoAdap";
    case Method::kTent: return "Tent";
    case Method::kTtasR: return "TTAS_R";
    case Method::kTtasRC: return "TTAS_RC";
    case Method::kTtasRD: return "TTAS_RD";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "noadap" || s == "NoAdap") return Method::kNoAdap;
  if (s == "Tent") return Method::kTent;
  if (s == "TTAS_R") return Method::kTtasR;
  if (s == "TTAS_RC") return Method::kTtasRC;
  if (s == "TTAS_RD") return Method::kTtasRD;
  try {
    return method_for(parse_adapt_mode(s));
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("unknown method '" + s + "' (expected noadap, tent, R, RC or RD)");
  }
}

std::optional<AdaptMode> adapt_mode(Method m) {
  switch (m) {
    case Method::kNoAdap: return std::nullopt;
    case Method::kTent: return AdaptMode::kTent;
    case Method::kTtasR: return AdaptMode::kRatio;
    case Method::kTtasRC: return AdaptMode::kRatioCentroid;
    case Method::kTtasRD: return AdaptMode::kRatioDistance;
  }
  return std::nullopt;
}

Method method_for(AdaptMode mode) {
  switch (mode) {
    case AdaptMode::kTent: return Method::kTent;
    case AdaptMode::kRatio: return Method::kTtasR;
    case AdaptMode::kRatioCentroid: return Method::kTtasRC;
    case AdaptMode::kRatioDistance: return Method::kTtasRD;
  }
  return Method::kNoAdap;
}

std::vector<std::string> class_names(PhantomFamily family) {
  if (family == PhantomFamily::kCardiac) return {"LV", "MYO", "AA"};
  return {"Gland"};
}

std::vector<double> perturbed_ratios(const PhantomSpec& spec, double perturbation,
                                     std::uint64_t seed) {
  std::vector<double> r = nominal_ratios(spec);
  Rng rng(seed);
  double total = 0.0;
  for (double& v : r) {
    v *= rng.uniform(1.0 - perturbation, 1.0 + perturbation);
    total += v;
  }
  for (double& v : r) v /= total;
  return r;
}

RatioPrior ratio_prior_for(const RunConfig& config) {
  const std::vector<double> ratios =
      config.prior.ratios ? *config.prior.ratios
                          : perturbed_ratios(config.data.phantom_spec(), config.prior.perturbation,
                                             SeedPlan::from(config.seed).prior);
  return load_ratio_prior(ratios, config.prior.thresholds);
}

std::size_t worker_count() {
  if (const char* env = std::getenv("SHAPE_TTA_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
    throw std::invalid_argument(std::string("SHAPE_TTA_THREADS must be a positive integer, got '") +
                                env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

fs::path image_path(const fs::path& dir, const std::string& id) { return dir / (id + kImageSuffix); }
fs::path label_path(const fs::path& dir, const std::string& id) { return dir / (id + kLabelSuffix); }
fs::path prediction_path(const fs::path& dir, const std::string& id) {
  return dir / (id + kPredSuffix);
}

std::vector<std::string> list_subjects(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (ends_with(name, kImageSuffix)) ids.push_back(name.substr(0, name.size() - std::string_view(kImageSuffix).size()));
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw std::invalid_argument("no *" + std::string(kImageSuffix) + " files in " + dir.string());
  return ids;
}

std::vector<fs::path> synth_to_dir(const PhantomSpec& spec, std::size_t n_subjects, Domain domain,
                                   std::uint64_t seed, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  std::map<std::string, SliceTags> tags;
  for (const SubjectVolume& v : generate(spec, n_subjects, domain, seed)) {
    SubjectVolume image = v;
    image.labels.clear();
    SubjectVolume labels = v;
    labels.intensities.clear();
    const std::string& id = v.header.subject_id;
    write_volume(image_path(out_dir, id), image);
    write_volume(label_path(out_dir, id), labels);
    written.push_back(image_path(out_dir, id));
    written.push_back(label_path(out_dir, id));
    tags[id] = tags_from_labels(v.labels, v.header.slices, v.header.height, v.header.width,
                                v.header.num_classes);
  }
  if (domain == Domain::kTarget) {
    save_tag_file(out_dir / kTagFile, tags);
    written.push_back(out_dir / kTagFile);
  }
  return written;
}

std::vector<SubjectVolume> load_labeled_dir(const fs::path& dir) {
  std::vector<SubjectVolume> out;
  for (const std::string& id : list_subjects(dir)) {
    SubjectVolume v = read_volume(image_path(dir, id));
    const SubjectVolume labels = read_volume(label_path(dir, id));
    if (labels.header.voxels() != v.header.voxels()) {
      throw VolumeFormatError("label volume of " + id + " does not match its image");
    }
    v.labels = labels.labels;
    v.header.has_labels = true;
    out.push_back(std::move(v));
  }
  return out;
}

fs::path pretrain_dir(const RunConfig& config, const fs::path& source_dir, const fs::path& out_dir) {
  const std::vector<SubjectVolume> subjects = load_labeled_dir(source_dir);
  const SeedPlan plan = SeedPlan::from(config.seed);
  NetworkConfig net = config.network;
  net.seed = plan.network;
  PretrainConfig pc = config.pretrain;
  pc.seed = plan.pretrain;
  pc.precision = config.precision;
  const PretrainResult result = pretrain(net, subjects, pc);
  fs::create_directories(out_dir);
  save_checkpoint(out_dir / "model.ckpt", result.params);
  write_pretrain_trace(out_dir / "pretrain_loss.csv", result.trace);
  return out_dir / "model.ckpt";
}

void adapt_dir(const RunConfig& config, const fs::path& checkpoint, const fs::path& target_dir,
               Method method, const fs::path& out_dir) {
  if (!fs::exists(checkpoint)) throw std::invalid_argument("checkpoint not found: " + checkpoint.string());
  const ParameterStore pretrained = load_checkpoint(checkpoint);
  if (pretrained.config().num_classes != config.network.num_classes) {
    throw std::invalid_argument("checkpoint has " + std::to_string(pretrained.config().num_classes) +
                                " classes, config expects " +
                                std::to_string(config.network.num_classes));
  }
  const std::vector<std::string> ids = list_subjects(target_dir);
  std::map<std::string, SliceTags> tags;
  if (config.prior.use_tags) {
    const fs::path tag_file = config.prior.tag_file ? fs::path(*config.prior.tag_file)
                                                    : target_dir / kTagFile;
    if (fs::exists(tag_file)) {
      tags = load_tag_file(tag_file);
    } else if (config.prior.tag_file) {
      throw std::invalid_argument("tag file not found: " + tag_file.string());
    }
  }
  const RatioPrior ratio = ratio_prior_for(config);
  const SeedPlan plan = SeedPlan::from(config.seed);
  fs::create_directories(out_dir);

  parallel_for(ids.size(), worker_count(), [&](std::size_t i) {
    const std::string& id = ids[i];
    const SubjectVolume image = read_volume(image_path(target_dir, id));
    const Tensor x = normalized_input(image);
    SubjectVolume pred;
    pred.header = image.header;
    pred.header.has_image = false;
    pred.header.has_labels = true;
    if (const auto mode = adapt_mode(method)) {
      DescriptorPrior prior{ratio, std::nullopt, tags.count(id) ? tags.at(id) : SliceTags{}};
      const AdaptResult r =
          adapt_subject(pretrained, x, prior, adapt_config_for(config, *mode, plan.subject(id)));
      pred.labels = r.prediction.labels;
      write_loss_trace(out_dir / (id + "_loss.csv"), r.trace);
      save_checkpoint(out_dir / (id + "_adapted.ckpt"), r.params);
    } else {
      pred.labels = predict(pretrained, x, ForwardMode::kEval, config.precision).labels;
    }
    write_volume(prediction_path(out_dir, id), pred);
  });
}

std::vector<MetricReport> evaluate_dir(const fs::path& pred_dir, const fs::path& target_dir,
                                       const std::string& method, std::size_t num_classes) {
  std::vector<MetricReport> reports;
  for (const std::string& id : list_subjects(target_dir)) {
    const fs::path pp = prediction_path(pred_dir, id);
    if (!fs::exists(pp)) throw std::invalid_argument("missing prediction " + pp.string());
    const SubjectVolume pred = read_volume(pp);
    const SubjectVolume gt = read_volume(label_path(target_dir, id));
    const VolumeHeader& h = gt.header;
    if (pred.header.voxels() != h.voxels() || !pred.has_labels() || !gt.has_labels()) {
      throw VolumeFormatError("prediction and labels of " + id + " do not match");
    }
    reports.push_back(evaluate_subject(method, id, pred.labels, gt.labels,
                                       {h.slices, h.height, h.width}, num_classes));
  }
  return reports;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

void write_manifest(const fs::path& out_dir, const std::string& command, const RunConfig& config,
                    const std::vector<std::string>& artifacts) {
  const SeedPlan plan = SeedPlan::from(config.seed);
  nlohmann::ordered_json j;
  j["tool"] = "shape_tta";
  j["version"] = kVersion;
  j["command"] = command;
  j["config_hash"] = config_hash(config);
  j["seeds"] = {{"seed", config.seed},         {"network", plan.network},
                {"pretrain", plan.pretrain},   {"source_data", plan.source_data},
                {"target_data", plan.target_data}, {"prior", plan.prior},
                {"adapt", plan.adapt}};
  j["config"] = nlohmann::ordered_json::parse(to_json(config));
  j["artifacts"] = artifacts;
  write_text(out_dir / "manifest.json", j.dump(2) + "\n");
}

BenchResult run_bench(const RunConfig& config, const fs::path& out_dir, const BenchOptions& options) {
  config.validate();
  auto log = [&](const std::string& s) {
    if (options.log) options.log(s);
  };
  const SeedPlan plan = SeedPlan::from(config.seed);
  const PhantomSpec spec = config.data.phantom_spec();
  const std::size_t k = spec.num_classes();
  const auto source = generate(spec, config.data.source_subjects, Domain::kSource, plan.source_data);
  const auto target = generate(spec, config.data.target_subjects, Domain::kTarget, plan.target_data);
  fs::create_directories(out_dir / "traces");
  std::vector<std::string> artifacts;

  NetworkConfig net = config.network;
  net.seed = plan.network;
  PretrainConfig pc = config.pretrain;
  pc.seed = plan.pretrain;
  pc.precision = config.precision;
  log("pretraining on " + std::to_string(source.size()) + " source subjects");
  BenchResult result;
  const auto t0 = std::chrono::steady_clock::now();
  PretrainResult pre = pretrain(net, source, pc);
  result.pretrain_seconds = seconds_since(t0);
  result.pretrain_trace = pre.trace;
  save_checkpoint(out_dir / "model.ckpt", pre.params);
  write_pretrain_trace(out_dir / "traces" / "pretrain_loss.csv", pre.trace);
  artifacts.insert(artifacts.end(), {"model.ckpt", "traces/pretrain_loss.csv"});
  result.pretrained = load_checkpoint(out_dir / "model.ckpt");
  const ParameterStore& pretrained = result.pretrained;
  if (!pre.trace.empty()) {
    log("pretrain loss " + std::to_string(pre.trace.front().loss) + " -> " +
        std::to_string(pre.trace.back().loss));
  }

  const RatioPrior ratio = ratio_prior_for(config);
  const std::vector<Method> methods = bench_methods(config);
  auto wants = [&](Method m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  std::vector<SubjectOutcome> outcomes(target.size());
  std::mutex log_mu;
  result.subject_seconds.assign(target.size(), 0.0);

  parallel_for(target.size(), options.workers, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    const SubjectVolume& subject = target[i];
    const VolumeHeader& h = subject.header;
    SubjectOutcome& out = outcomes[i];
    // The label-free view of the subject is all adaptation sees.
    const Tensor x = normalized_input(subject);
    DescriptorPrior prior{ratio, std::nullopt,
                          config.prior.use_tags
                              ? tags_from_labels(subject.labels, h.slices, h.height, h.width, k)
                              : SliceTags{}};
    const std::uint64_t seed = plan.subject(h.subject_id);
    auto record = [&](Method m, const AdaptResult& r) {
      out.labels[m] = r.prediction.labels;
      out.traces[m] = r.trace;
      if (options.keep_params) out.params.emplace(m, r.params);
      if (r.penalty_inert) {
        out.warnings.push_back(std::string(method_name(m)) + " " + h.subject_id +
                               ": no class qualified for a moment prior, penalty inert");
      }
    };

    out.labels[Method::kNoAdap] = predict(pretrained, x, ForwardMode::kEval, config.precision).labels;
    if (wants(Method::kTent)) {
      record(Method::kTent,
             adapt_subject(pretrained, x, prior, adapt_config_for(config, AdaptMode::kTent, seed)));
    }
    if (wants(Method::kTtasR) || wants(Method::kTtasRC) || wants(Method::kTtasRD)) {
      Adapter ratio_run(pretrained, x, prior, adapt_config_for(config, AdaptMode::kRatio, seed));
      ratio_run.run();
      if (wants(Method::kTtasR)) record(Method::kTtasR, ratio_run.result());
      for (Method m : {Method::kTtasRC, Method::kTtasRD}) {
        if (!wants(m)) continue;
        Adapter shaped = ratio_run.fork(*adapt_mode(m), config.adapt.epochs_shape);
        shaped.run();
        record(m, shaped.result());
      }
    }
    result.subject_seconds[i] = seconds_since(start);
    std::lock_guard<std::mutex> lock(log_mu);
    log("adapted " + h.subject_id);
  });

  for (Method m : methods) {
    const std::string name = method_name(m);
    double total = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
      const VolumeHeader& h = target[i].header;
      result.reports.push_back(evaluate_subject(name, h.subject_id, outcomes[i].labels.at(m),
                                                target[i].labels, {h.slices, h.height, h.width}, k));
      total += result.reports.back().mean_dsc();
      if (m != Method::kNoAdap) {
        const fs::path dir = out_dir / "traces" / name;
        fs::create_directories(dir);
        write_loss_trace(dir / (h.subject_id + ".csv"), outcomes[i].traces.at(m));
        artifacts.push_back("traces/" + name + "/" + h.subject_id + ".csv");
        if (options.keep_params) result.adapted[name].push_back(outcomes[i].params.at(m));
      }
    }
    result.mean_dsc[name] = total / static_cast<double>(target.size());
  }
  for (const auto& o : outcomes) {
    for (const auto& w : o.warnings) log("warning: " + w);
  }

  result.table = tabulate(result.reports, class_names(config.data.phantom));
  write_text(out_dir / "results.txt", result.table.text);
  write_text(out_dir / "results.csv", result.table.csv);
  artifacts.insert(artifacts.end(), {"results.txt", "results.csv"});
  write_manifest(out_dir, "bench", config, artifacts);
  return result;
}

}  // namespace shape_tta
