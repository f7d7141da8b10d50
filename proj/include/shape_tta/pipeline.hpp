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

#ifndef SHAPE_TTA_PIPELINE_HPP_
#define SHAPE_TTA_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shape_tta/config.hpp"
#include "shape_tta/engine.hpp"
#include "shape_tta/metrics.hpp"

namespace shape_tta {

inline constexpr const char* kVersion = "0.1.0";

// Every random stream of a run is derived from the single top-level seed.
struct SeedPlan {
  std::uint64_t network = 0;
  std::uint64_t pretrain = 0;
  std::uint64_t source_data = 0;
  std::uint64_t target_data = 0;
  std::uint64_t prior = 0;
  std::uint64_t adapt = 0;

  static SeedPlan from(std::uint64_t seed);
  // Adaptation seed of one subject, independent of the method.
  std::uint64_t subject(const std::string& subject_id) const;
};

enum class Method { kNoAdap, kTent, kTtasR, kTtasRC, kTtasRD };

const char* method_name(Method m);  // NoAdap, Tent, TTAS_R, TTAS_RC, TTAS_RD
// Accepts noadap, tent, R, RC, RD (and the table names).
Method parse_method(const std::string& s);
std::optional<AdaptMode> adapt_mode(Method m);
Method method_for(AdaptMode mode);

// Class names used in tables: LV, MYO, AA for the cardiac phantom.
std::vector<std::string> class_names(PhantomFamily family);

// Coarse ratio prior: the phantom's nominal ratios with each class scaled by
// a factor drawn uniformly from [1 - p, 1 + p], then normalized.
std::vector<double> perturbed_ratios(const PhantomSpec& spec, double perturbation,
                                     std::uint64_t seed);
RatioPrior ratio_prior_for(const RunConfig& config);

// Worker count: SHAPE_TTA_THREADS when set, else hardware concurrency.
std::size_t worker_count();
// Runs fn(0..n-1) on up to `workers` threads; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

// Directory layout written by `synth`: <id>_image.vol (image only),
// <id>_labels.vol (labels only) and, for the target domain, tags.json with
// the per-slice present-class lists.
std::vector<std::filesystem::path> synth_to_dir(const PhantomSpec& spec, std::size_t n_subjects,
                                                Domain domain, std::uint64_t seed,
                                                const std::filesystem::path& out_dir);

std::filesystem::path image_path(const std::filesystem::path& dir, const std::string& id);
std::filesystem::path label_path(const std::filesystem::path& dir, const std::string& id);
std::filesystem::path prediction_path(const std::filesystem::path& dir, const std::string& id);
std::vector<std::string> list_subjects(const std::filesystem::path& dir);

// Loads images and labels of every subject in a synth directory.
std::vector<SubjectVolume> load_labeled_dir(const std::filesystem::path& dir);

// Trains on a synth directory; writes model.ckpt and pretrain_loss.csv.
std::filesystem::path pretrain_dir(const RunConfig& config, const std::filesystem::path& source_dir,
                                   const std::filesystem::path& out_dir);

// Predicts every subject of `target_dir` under one method. Only the image
// files and the tag file are read. Writes <id>_pred.vol, plus for adapted
// methods <id>_loss.csv and <id>_adapted.ckpt.
void adapt_dir(const RunConfig& config, const std::filesystem::path& checkpoint,
               const std::filesystem::path& target_dir, Method method,
               const std::filesystem::path& out_dir);

// Scores the predictions in `pred_dir` against the labels in `target_dir`.
std::vector<MetricReport> evaluate_dir(const std::filesystem::path& pred_dir,
                                       const std::filesystem::path& target_dir,
                                       const std::string& method, std::size_t num_classes);

struct BenchResult {
  ResultsTable table;
  std::vector<MetricReport> reports;
  std::map<std::string, double> mean_dsc;  // method name -> mean foreground DSC
  std::vector<PretrainEpoch> pretrain_trace;
  // method name -> per-subject adapted parameter stores (same order as the
  // target subjects); empty for NoAdap.
  std::map<std::string, std::vector<ParameterStore>> adapted;
  ParameterStore pretrained;
  // Wall-clock seconds of pretraining and of each subject's adaptation runs.
  double pretrain_seconds = 0.0;
  std::vector<double> subject_seconds;
};

struct BenchOptions {
  std::size_t workers = 1;
  bool keep_params = false;  // fill BenchResult::adapted
  // Progress lines go here when set.
  std::function<void(const std::string&)> log;
};

// Pretrain on generated source subjects, round-trip the checkpoint through
// disk, then predict every target subject with NoAdap and each configured
// mode. TTAS_RC and TTAS_RD continue from the TTAS_R state after the shared
// first phase, which yields the same result as separate runs.
BenchResult run_bench(const RunConfig& config, const std::filesystem::path& out_dir,
                      const BenchOptions& options);

// manifest.json: tool version, command, config hash and JSON, seeds and the
// list of written artifacts (relative paths).
void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const RunConfig& config, const std::vector<std::string>& artifacts);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace shape_tta

#endif  // SHAPE_TTA_PIPELINE_HPP_
