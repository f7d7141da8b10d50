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

// shape_tta command-line entry point.
//
//   shape_tta synth    --spec cardiac --subjects 6 --domain target --seed 7 --out-dir data/target
//   shape_tta pretrain --config run.json --source data/source --out-dir run
//   shape_tta adapt    --config run.json --checkpoint run/model.ckpt --target data/target \
//                      --mode RC --out-dir run/RC
//   shape_tta evaluate --predictions run/RC --target data/target --method TTAS_RC --out-dir run/RC
//   shape_tta bench    --seed 7 --out-dir bench

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "shape_tta/config.hpp"
#include "shape_tta/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace shape_tta;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs_init;
  std::optional<std::size_t> epochs_shape;
};

void add_config_flags(CLI::App* cmd, Overrides& o, bool epochs) {
  cmd->add_option("--config", o.config, "Run config JSON");
  cmd->add_option("--seed", o.seed, "Top-level seed");
  if (epochs) {
    cmd->add_option("--epochs-init", o.epochs_init, "Epochs of the entropy + ratio phase");
    cmd->add_option("--epochs-shape", o.epochs_shape, "Epochs of the shape-penalty phase");
  }
}

RunConfig resolve(const Overrides& o, RunConfig defaults) {
  RunConfig c = o.config.empty() ? defaults : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.epochs_init) c.adapt.epochs_init = *o.epochs_init;
  if (o.epochs_shape) c.adapt.epochs_shape = *o.epochs_shape;
  c.validate();
  return c;
}

std::string seconds_since(std::chrono::steady_clock::time_point t0) {
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return std::to_string(static_cast<int>(s + 0.5)) + " s";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shape-guided test-time adaptation on synthetic phantoms"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate phantom subjects");
  std::string spec_name = "cardiac", domain_name = "source", synth_out;
  std::size_t n_subjects = 10;
  std::uint64_t synth_seed = 0;
  synth->add_option("--spec", spec_name, "Phantom family: cardiac or prostate");
  synth->add_option("--subjects", n_subjects, "Number of subjects");
  synth->add_option("--domain", domain_name, "source or target");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out-dir", synth_out, "Output directory")->required();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Train the network on a labeled source directory");
  Overrides pre_o;
  std::string source_dir, pre_out;
  add_config_flags(pre, pre_o, false);
  pre->add_option("--source", source_dir, "Directory written by synth")->required();
  pre->add_option("--out-dir", pre_out, "Output directory")->required();

  // adapt
  auto* adapt = app.add_subcommand("adapt", "Adapt to each target subject and write predictions");
  Overrides ad_o;
  std::string checkpoint, target_dir, mode_name = "RC", ad_out;
  add_config_flags(adapt, ad_o, true);
  adapt->add_option("--checkpoint", checkpoint, "Pretrained checkpoint")->required();
  adapt->add_option("--target", target_dir, "Target directory written by synth")->required();
  adapt->add_option("--mode", mode_name, "noadap, tent, R, RC or RD");
  adapt->add_option("--out-dir", ad_out, "Output directory")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score predictions against target labels");
  std::string pred_dir, eval_target, method_label = "method", eval_out;
  std::string eval_spec = "cardiac";
  eval->add_option("--predictions", pred_dir, "Directory of *_pred.vol files")->required();
  eval->add_option("--target", eval_target, "Target directory with *_labels.vol")->required();
  eval->add_option("--method", method_label, "Method name used in the table");
  eval->add_option("--spec", eval_spec, "Phantom family, for class names");
  eval->add_option("--out-dir", eval_out, "Where to write evaluation.csv/.txt");

  // bench
  auto* bench = app.add_subcommand("bench", "Pretrain once and compare all methods");
  Overrides bench_o;
  std::string bench_out = "bench_out";
  add_config_flags(bench, bench_o, true);
  bench->add_option("--out-dir", bench_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const PhantomSpec spec = phantom_for(parse_phantom_family(spec_name));
      const Domain domain = parse_domain(domain_name);
      synth_to_dir(spec, n_subjects, domain, synth_seed, synth_out);
      std::cout << "wrote " << n_subjects << " " << to_string(domain) << " subjects to "
                << synth_out << "\n";
    } else if (pre->parsed()) {
      const RunConfig c = resolve(pre_o, RunConfig{});
      const auto t0 = std::chrono::steady_clock::now();
      const fs::path ckpt = pretrain_dir(c, source_dir, pre_out);
      write_manifest(pre_out, "pretrain", c, {"model.ckpt", "pretrain_loss.csv"});
      std::cout << "wrote " << ckpt.string() << " (" << seconds_since(t0) << ")\n";
    } else if (adapt->parsed()) {
      const Method method = parse_method(mode_name);
      const auto mode = adapt_mode(method);
      if (ad_o.epochs_shape && *ad_o.epochs_shape > 0 && (!mode || !has_shape_phase(*mode))) {
        throw std::invalid_argument(std::string("--epochs-shape: mode ") + mode_name +
                                    " has no shape phase");
      }
      const RunConfig c = resolve(ad_o, RunConfig{});
      const auto t0 = std::chrono::steady_clock::now();
      adapt_dir(c, checkpoint, target_dir, method, ad_out);
      write_manifest(ad_out, std::string("adapt ") + method_name(method), c, {});
      std::cout << method_name(method) << " predictions in " << ad_out << " ("
                << seconds_since(t0) << ")\n";
    } else if (eval->parsed()) {
      const auto names = class_names(parse_phantom_family(eval_spec));
      const auto reports = evaluate_dir(pred_dir, eval_target, method_label, names.size() + 1);
      const ResultsTable table = tabulate(reports, names);
      std::cout << table.text;
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        write_text(fs::path(eval_out) / "evaluation.csv", table.csv);
        write_text(fs::path(eval_out) / "evaluation.txt", table.text);
      }
    } else if (bench->parsed()) {
      const RunConfig c = resolve(bench_o, RunConfig::desk_benchmark());
      const auto t0 = std::chrono::steady_clock::now();
      BenchOptions options;
      options.workers = worker_count();
      options.log = [&](const std::string& s) {
        std::cerr << "[" << seconds_since(t0) << "] " << s << "\n";
      };
      const BenchResult r = run_bench(c, bench_out, options);
      std::cout << r.table.text;
      std::cerr << "bench finished in " << seconds_since(t0) << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
