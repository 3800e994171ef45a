// tests/test_cli.cpp

// Copyright 2026 The vbmtl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.


// Drives the vbmtl executable end to end.

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

namespace vbmtl {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int status = -1;
  std::string output;
};

Outcome RunCli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(VBMTL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  Outcome o;
  const int raw = std::system(cmd.c_str());
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  o.output = ss.str();
  return o;
}

std::string Slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  Outcome Cli(const std::string& args) { return RunCli(args, dir_.path() / "log.txt"); }
  std::string P(const std::string& rel) const { return (dir_.path() / rel).string(); }
  testing::TempDir dir_{"cli"};
};

TEST_F(CliTest, SynthTrainEvaluatePredict) {
  auto r = Cli("synth --out " + P("data") + " --n 60 --seed 7 --dim 8");
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(P("data/manifest.csv")));
  EXPECT_TRUE(fs::exists(P("data/features/synth_00000.vbf")));
  ASSERT_TRUE(fs::exists(P("data/experiment.cfg")));

  r = Cli("train --config " + P("data/experiment.cfg") + " --out " + P("run") +
          " --override trainer.stage1.max_epochs=3 --override trainer.stage2.max_epochs=3"
          " --override model.encoder_dim=8 --override model.hidden_dim=16");
  ASSERT_EQ(r.status, 0) << r.output;
  for (const char* f : {"checkpoint.vbck", "history_stage1.jsonl", "history_stage2.jsonl",
                        "metrics.txt", "config.cfg", "run_info.json"})
    EXPECT_TRUE(fs::exists(P(std::string("run/") + f))) << f;
  EXPECT_NE(r.output.find("metric.High.CCC="), std::string::npos);

  r = Cli("evaluate --checkpoint " + P("run/checkpoint.vbck") + " --manifest " +
          P("data/manifest.csv") + " --out " + P("eval.txt"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(Slurp(P("eval.txt")), Slurp(P("run/metrics.txt")));

  r = Cli("predict --checkpoint " + P("run/checkpoint.vbck") + " --manifest " +
          P("data/manifest.csv") + " --out " + P("preds.csv"));
  ASSERT_EQ(r.status, 0) << r.output;
  const std::string preds = Slurp(P("preds.csv"));
  EXPECT_EQ(preds.substr(0, preds.find('\n')), "id,task,dim_index,value");
  EXPECT_EQ(std::count(preds.begin(), preds.end(), '\n'), 1 + 60 * (10 + 40 + 2 + 8 + 4));
}

TEST_F(CliTest, AblateAndReport) {
  ASSERT_EQ(Cli("synth --out " + P("data") + " --n 40 --seed 3 --dim 6").status, 0);
  const std::string common = " --config " + P("data/experiment.cfg") +
                             " --override trainer.stage1.max_epochs=2"
                             " --override trainer.stage2.max_epochs=2"
                             " --override trainer.stage1.patience=1"
                             " --override trainer.stage2.patience=1"
                             " --override model.encoder_dim=8 --override model.hidden_dim=16";
  auto r = Cli("ablate --presets 0/5,-Two --out " + P("grid") + common);
  ASSERT_EQ(r.status, 0) << r.output;
  const std::string table = Slurp(P("grid/ablation.md"));
  EXPECT_NE(table.find("| Method | High CCC"), std::string::npos);
  EXPECT_NE(table.find("| -Two |"), std::string::npos);
  EXPECT_NE(table.find("--"), std::string::npos);
  EXPECT_TRUE(fs::exists(P("grid/ablation.csv")));

  r = Cli("report --in " + P("grid") + " --out " + P("rebuilt"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(Slurp(P("rebuilt/ablation.md")), table);
}

TEST_F(CliTest, UsageErrors) {
  auto r = Cli("");
  EXPECT_NE(r.status, 0);
  r = Cli("train");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("--config"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("Usage"), std::string::npos) << r.output;
  r = Cli("ablate --config /nonexistent.cfg");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("error:"), std::string::npos);
  r = Cli("predict --checkpoint /nonexistent.vbck --manifest x.csv --out y.csv");
  EXPECT_EQ(r.status, 1);
}

}  // namespace
}  // namespace vbmtl
