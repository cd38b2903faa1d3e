/* Copyright 2026 The monobev Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <unistd.h>

#include "cli.hpp"
#include "monobev/fileio.hpp"
#include "monobev/trainer.hpp"

namespace monobev {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "monobev");
  return cli::run(args);
}

// Runs the CLI and returns what it printed on stdout.
std::string run_captured(std::vector<std::string> args, int& code) {
  ::testing::internal::CaptureStdout();
  code = run_cli(std::move(args));
  return ::testing::internal::GetCapturedStdout();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / ("monobev_cli_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    ASSERT_EQ(run_cli({"generate", "--out", (root / "data").string(), "--scenes", "5", "--seed",
                       "4", "--height", "32", "--width", "48", "--grid", "10", "--extent", "40",
                       "--duration", "2"}),
              cli::kOk);

    TrainConfig c;
    c.feat_dim = 8;
    c.num_heads = 2;
    c.num_points = 2;
    c.num_layers = 1;
    c.ffn_dim = 16;
    c.pillars.num_heights = 2;
    c.eval_every = 0;
    c.eval_max_frames = 2;
    c.mask.cycle_epochs = c.lr.cycle_epochs = 1;
    c.mask.num_cycles = c.lr.num_cycles = 2;
    c.mask.final_phase_epochs = c.lr.final_phase_epochs = 1;
    c.epochs = 3;
    c.steps_per_epoch = 2;
    c.dataset = (root / "data").string();
    write_file_atomic(root / "tiny.json", train_config_to_json(c).dump(2));
    ASSERT_EQ(run_cli({"train", "--config", (root / "tiny.json").string(), "--out",
                       (root / "run").string()}),
              cli::kOk);
  }
  static void TearDownTestSuite() { fs::remove_all(root); }

  static fs::path root;
};

fs::path CliTest::root;

TEST_F(CliTest, GenerateIsDeterministicAndValidatesCounts) {
  const std::vector<std::string> common{"--scenes", "1",  "--seed", "9",  "--height",
                                        "16",       "--width", "24", "--grid", "6", "--duration", "2"};
  auto a = common;
  a.insert(a.begin(), {"generate", "--out", (root / "gen_a").string()});
  auto b = common;
  b.insert(b.begin(), {"generate", "--out", (root / "gen_b").string()});
  ASSERT_EQ(run_cli(a), cli::kOk);
  ASSERT_EQ(run_cli(b), cli::kOk);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "gen_a")) {
    if (!e.is_regular_file()) continue;
    const fs::path twin = root / "gen_b" / fs::relative(e.path(), root / "gen_a");
    EXPECT_EQ(slurp(e.path()), slurp(twin)) << e.path();
    ++files;
  }
  EXPECT_GT(files, 2);
  EXPECT_EQ(run_cli({"generate", "--out", (root / "gen_c").string(), "--scenes", "0"}),
            cli::kUsageError);
}

TEST_F(CliTest, DryRunPrintsOneRowPerEpoch) {
  int code = -1;
  const std::string out = run_captured({"train", "--dry-run"}, code);
  EXPECT_EQ(code, cli::kOk);
  std::istringstream in(out);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 2u + 30u);
  EXPECT_EQ(lines[1], "epoch\tmu\tsigma\tlr_first\tlr_last\tgt_filter");
  EXPECT_EQ(lines[2].substr(0, 4), "0\t0\t");
  EXPECT_NE(lines.back().find("\ton"), std::string::npos);
  EXPECT_NE(lines[2].find("\toff"), std::string::npos);

  const std::string one = run_captured({"train", "--dry-run", "--mode", "baseline_1cam"}, code);
  EXPECT_EQ(code, cli::kOk);
  EXPECT_NE(one.find("baseline_1cam"), std::string::npos);
  EXPECT_EQ(run_cli({"train", "--dry-run", "--mode", "sideways"}), cli::kUsageError);
}

TEST_F(CliTest, TrainingWritesLogAndCheckpoints) {
  EXPECT_TRUE(fs::exists(root / "run" / "final.ckpt"));
  EXPECT_TRUE(fs::exists(root / "run" / "config.json"));
  std::ifstream log(root / "run" / "train_log.jsonl");
  int steps = 0;
  for (std::string line; std::getline(log, line);) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("type") == "step") ++steps;
  }
  EXPECT_EQ(steps, 6);

  ASSERT_EQ(run_cli({"train", "--config", (root / "tiny.json").string(), "--out",
                     (root / "stopped").string(), "--stop-at-step", "0"}),
            cli::kOk);
  EXPECT_TRUE(fs::exists(root / "stopped" / "last.ckpt"));
  EXPECT_FALSE(fs::exists(root / "stopped" / "final.ckpt"));
  EXPECT_EQ(run_cli({"train", "--config", (root / "tiny.json").string()}), cli::kUsageError);
}

TEST_F(CliTest, PredictThenEvalAndReportRecompute) {
  const std::string ckpt = (root / "run" / "final.ckpt").string();
  ASSERT_EQ(run_cli({"predict", "--checkpoint", ckpt, "--dataset", (root / "data").string(),
                     "--out", (root / "pred").string()}),
            cli::kOk);
  int code = -1;
  const std::string printed =
      run_captured({"eval", "--pred", (root / "pred").string(), "--gt", (root / "data").string(),
                    "--out", (root / "report.json").string()},
                   code);
  ASSERT_EQ(code, cli::kOk);
  EXPECT_EQ(printed.substr(0, 4), "NDS ");
  const auto report = read_json_file(root / "report.json");
  EXPECT_TRUE(report.at("nds_consistent").get<bool>());
  EXPECT_TRUE(report.contains("fov_filter"));

  const std::string again = run_captured({"eval", "--report", (root / "report.json").string()}, code);
  ASSERT_EQ(code, cli::kOk);
  std::ostringstream expected;
  expected << std::fixed << std::setprecision(4) << "NDS " << report.at("NDS").get<double>();
  EXPECT_EQ(again.substr(0, expected.str().size()), expected.str());
  EXPECT_NE(again.find("diff 0.00e+00"), std::string::npos) << again;

  EXPECT_EQ(run_cli({"eval", "--pred", (root / "pred").string()}), cli::kUsageError);
}

TEST_F(CliTest, RenderWritesFiguresAndChecksRanges) {
  const std::string ckpt = (root / "run" / "final.ckpt").string();
  const std::string data = (root / "data").string();
  ASSERT_EQ(run_cli({"render", "--checkpoint", ckpt, "--dataset", data, "--out",
                     (root / "fig").string(), "--channels", "0,3", "--scale", "4"}),
            cli::kOk);
  for (const char* name : {"gt_segmentation.png", "prediction_bev.png", "feature_ch00.png",
                           "feature_ch03.png"}) {
    ASSERT_TRUE(fs::exists(root / "fig" / name)) << name;
    EXPECT_GT(fs::file_size(root / "fig" / name), 8u);
    EXPECT_EQ(slurp(root / "fig" / name).substr(1, 3), "PNG");
  }
  EXPECT_EQ(run_cli({"render", "--checkpoint", ckpt, "--dataset", data, "--out",
                     (root / "fig2").string(), "--frame", "999"}),
            cli::kUsageError);
  EXPECT_EQ(run_cli({"render", "--checkpoint", ckpt, "--dataset", data, "--out",
                     (root / "fig2").string(), "--channels", "0,x"}),
            cli::kUsageError);
  EXPECT_EQ(run_cli({"render", "--checkpoint", (root / "absent.ckpt").string(), "--dataset", data,
                     "--out", (root / "fig2").string()}),
            cli::kIoError);
}

TEST_F(CliTest, AblatePrintsEightRowTable) {
  int code = -1;
  const std::string tsv = run_captured(
      {"ablate", "--config", (root / "tiny.json").string(), "--out", (root / "ablate").string()},
      code);
  ASSERT_EQ(code, cli::kOk);
  EXPECT_EQ(tsv, slurp(root / "ablate" / "ablation.tsv"));
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 9);
  EXPECT_EQ(read_json_file(root / "ablate" / "ablation.json").at("rows").size(), 8u);
  EXPECT_EQ(tsv.find("error"), std::string::npos);
}

TEST_F(CliTest, MaskPreviewWritesPng) {
  ASSERT_EQ(run_cli({"mask-preview", "--epoch", "12", "--dataset", (root / "data").string(),
                     "--out", (root / "mask.png").string()}),
            cli::kOk);
  EXPECT_EQ(slurp(root / "mask.png").substr(1, 3), "PNG");
  EXPECT_EQ(run_cli({"mask-preview", "--epoch", "30", "--out", (root / "m.png").string()}),
            cli::kUsageError);
}

TEST(CliUsage, HelpAndUnknownFlags) {
  ::testing::internal::CaptureStdout();
  EXPECT_EQ(run_cli({"--help"}), cli::kOk);
  EXPECT_NE(::testing::internal::GetCapturedStdout().find("generate"), std::string::npos);
  ::testing::internal::CaptureStdout();
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run_cli({"generate", "--bogus"}), cli::kUsageError);
  EXPECT_EQ(run_cli({}), cli::kUsageError);
  ::testing::internal::GetCapturedStderr();
  ::testing::internal::GetCapturedStdout();
}

}  // namespace
}  // namespace monobev
