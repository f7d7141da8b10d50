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


#include <filesystem>

#include "gtest/gtest.h"
#include "shape_tta/data.hpp"
#include "support/process.hpp"

namespace shape_tta {
namespace {

namespace fs = std::filesystem;
using testing::read_file;
using testing::run_command;
using testing::write_file;

const std::string kCli = SHAPE_TTA_CLI_PATH;

// One small end-to-end workspace shared by the tests in this file.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "shape_tta_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    write_file(root_ / "tiny.json", R"({
      "seed": 3,
      "network": {"base_width": 4, "depth": 2},
      "pretrain": {"epochs": 2, "lr": 0.002},
      "adapt": {"epochs_init": 1, "epochs_shape": 1, "lr": 0.001},
      "data": {"source_subjects": 2, "target_subjects": 2}
    })");
    ASSERT_EQ(cli("synth --spec cardiac --subjects 2 --domain source --seed 1 --out-dir " +
                  (root_ / "source").string()).exit_code, 0);
    ASSERT_EQ(cli("synth --spec cardiac --subjects 2 --domain target --seed 1 --out-dir " +
                  (root_ / "target").string()).exit_code, 0);
    const auto pre = cli("pretrain --config " + (root_ / "tiny.json").string() + " --source " +
                         (root_ / "source").string() + " --out-dir " + (root_ / "run").string());
    ASSERT_EQ(pre.exit_code, 0) << pre.output;
  }

  static testing::CommandResult cli(const std::string& args) {
    return run_command(kCli + " " + args);
  }

  static std::string adapt_args(const std::string& target, const std::string& out,
                                const std::string& mode = "RC") {
    return "adapt --config " + (root_ / "tiny.json").string() + " --checkpoint " +
           (root_ / "run" / "model.ckpt").string() + " --target " + target + " --mode " + mode +
           " --out-dir " + out;
  }

  static fs::path root_;
};

fs::path CliTest::root_;

TEST_F(CliTest, SynthLayout) {
  EXPECT_TRUE(fs::exists(root_ / "source" / "subject_000_image.vol"));
  EXPECT_TRUE(fs::exists(root_ / "source" / "subject_001_labels.vol"));
  EXPECT_TRUE(fs::exists(root_ / "target" / "tags.json"));
  EXPECT_FALSE(fs::exists(root_ / "source" / "tags.json"));
  const VolumeHeader image = read_volume_header(root_ / "target" / "subject_000_image.vol");
  EXPECT_TRUE(image.has_image);
  EXPECT_FALSE(image.has_labels);
  EXPECT_EQ(image.domain, Domain::kTarget);
  EXPECT_TRUE(fs::exists(root_ / "run" / "model.ckpt"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "pretrain_loss.csv"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "manifest.json"));
}

TEST_F(CliTest, TentWithShapeEpochsIsRejected) {
  const auto r = cli(adapt_args((root_ / "target").string(), (root_ / "bad").string(), "tent") +
                     " --epochs-shape 50");
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.output.find("shape phase"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(root_ / "bad"));
}

TEST_F(CliTest, UnknownConfigKeyIsASchemaError) {
  write_file(root_ / "bad.json", R"({"adapt": {"epochs": 3}, "colour": "red"})");
  const auto r = cli("bench --config " + (root_ / "bad.json").string() + " --out-dir " +
                     (root_ / "bad_bench").string());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("adapt.epochs"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("colour"), std::string::npos) << r.output;
}

TEST_F(CliTest, MissingCheckpointFails) {
  const auto r = cli("adapt --checkpoint " + (root_ / "nope.ckpt").string() + " --target " +
                     (root_ / "target").string() + " --out-dir " + (root_ / "x").string());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("nope.ckpt"), std::string::npos) << r.output;
}

TEST_F(CliTest, PredictionsIgnoreLabelFiles) {
  const fs::path with = root_ / "with_labels";
  const fs::path blind_target = root_ / "blind_target";
  ASSERT_EQ(cli(adapt_args((root_ / "target").string(), (root_ / "pred_with").string())).exit_code,
            0);
  fs::create_directories(blind_target);
  for (const auto& e : fs::directory_iterator(root_ / "target")) {
    if (e.path().filename().string().find("_labels.vol") == std::string::npos) {
      fs::copy_file(e.path(), blind_target / e.path().filename());
    }
  }
  const auto r = cli(adapt_args(blind_target.string(), (root_ / "pred_blind").string()));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  for (const char* id : {"subject_000", "subject_001"}) {
    const std::string name = std::string(id) + "_pred.vol";
    const std::string a = read_file(root_ / "pred_with" / name);
    ASSERT_FALSE(a.empty());
    EXPECT_EQ(a, read_file(root_ / "pred_blind" / name)) << id;
  }
}

TEST_F(CliTest, EvaluateWritesTables) {
  ASSERT_EQ(cli(adapt_args((root_ / "target").string(), (root_ / "noadap").string(), "noadap"))
                .exit_code,
            0);
  const auto r = cli("evaluate --predictions " + (root_ / "noadap").string() + " --target " +
                     (root_ / "target").string() + " --method NoAdap --out-dir " +
                     (root_ / "noadap").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("NoAdap"), std::string::npos);
  const std::string csv = read_file(root_ / "noadap" / "evaluation.csv");
  EXPECT_EQ(csv.rfind("method,subject,class,dsc,asd\n", 0), 0u);
  EXPECT_NE(csv.find("NoAdap,subject_001,MYO,"), std::string::npos);
}

TEST_F(CliTest, VersionAndHelp) {
  EXPECT_EQ(cli("--version").exit_code, 0);
  const auto h = cli("--help");
  EXPECT_EQ(h.exit_code, 0);
  for (const char* sub : {"synth", "pretrain", "adapt", "evaluate", "bench"}) {
    EXPECT_NE(h.output.find(sub), std::string::npos) << sub;
  }
  EXPECT_NE(cli("").exit_code, 0);
}

}  // namespace
}  // namespace shape_tta
