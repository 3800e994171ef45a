// tests/acceptance.cpp

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


// Acceptance gate. Runs every headline criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit status is non-zero when
// any criterion fails.

#include "test_util.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace vbmtl {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

// ---------------------------------------------------------------------------

Verdict CccOracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(20261019);
  std::uniform_int_distribution<int> n_dist(2, 64), k_dist(1, 40);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = n_dist(gen), k = k_dist(gen);
    Matrix pred(n, k), target(n, k);
    const double coupling = u(gen);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) {
        target(i, j) = u(gen);
        pred(i, j) = coupling * target(i, j) + (1 - coupling) * u(gen) + 0.3 * (u(gen) - 0.5);
      }
    double mean = 0;
    for (int j = 0; j < k; ++j) {
      std::vector<double> p(pred.col(j).data(), pred.col(j).data() + n);
      std::vector<double> t(target.col(j).data(), target.col(j).data() + n);
      const double oracle = testing::OracleCcc(p, t);
      worst = std::max(worst, std::abs(Ccc(p, t) - oracle));
      mean += oracle / k;
    }
    worst = std::max(worst, std::abs(CccLossValue(pred, target) - (1.0 - mean)));
  }
  const double secs = Seconds(t0);
  return {worst <= 1e-6 && secs < 10.0,
          "max |delta| = " + Fmt("%.3g", worst) + " (tol 1e-6), " + Fmt("%.2f", secs) +
              " s (limit 10 s)"};
}

// ---------------------------------------------------------------------------

Verdict GradientCheck() {
  const auto t0 = Clock::now();
  // Four samples from countries 0,0,1,1 so every Culture dimension in the
  // batch has two labelled rows.
  const auto pool = testing::SmallSynth(80, 8, 41, 2, 6);
  std::vector<LabeledSample> picked;
  for (int want : {0, 0, 1, 1}) {
    for (const auto& s : pool) {
      const bool used = std::any_of(picked.begin(), picked.end(),
                                    [&](const LabeledSample& p) { return p.id == s.id; });
      if (!used && s.country == want) {
        picked.push_back(s);
        break;
      }
    }
  }
  const TaskSet tasks = BuildTaskSet(RoutingPreset::kZeroFive, {});
  Model model(testing::TinyConfig(8, 8, 16, 77), tasks);
  Rng rng(5);
  for (Parameter* p : model.parameters())
    for (Eigen::Index i = 0; i < p->var.value().size(); ++i)
      p->var.mutable_value().data()[i] += 0.05 * rng.Normal();
  ObjectiveContext ctx = MakeObjectiveContext(pool, tasks, true, SampleWeighting::kNone,
                                              UncertaintyForm::kSimple);
  std::vector<const LabeledSample*> items;
  for (const auto& s : picked) items.push_back(&s);
  const Batch batch = CollateBatch(items, tasks);

  auto objective = [&] {
    std::vector<std::optional<ad::Var>> per_task;
    auto total = BatchObjective(model, batch, ctx, &per_task);
    for (const auto& l : per_task)
      if (!l) throw Error("a task loss is undefined on the probe batch");
    return *total;
  };
  model.ZeroGrad();
  ad::Backward(objective());

  struct Coord {
    Parameter* param;
    Eigen::Index index;
  };
  std::vector<Coord> coords;
  const auto params = model.parameters();
  Parameter* log_vars = params.back();
  for (Eigen::Index i = 0; i < log_vars->var.value().size(); ++i) coords.push_back({log_vars, i});
  std::mt19937_64 gen(99);
  while (coords.size() < 60) {
    Parameter* p = params[gen() % (params.size() - 1)];
    coords.push_back({p, static_cast<Eigen::Index>(gen() % p->var.value().size())});
  }

  double worst = 0;
  std::string worst_name;
  const double h = 1e-5, floor = 1e-6;
  for (const auto& [p, i] : coords) {
    const double analytic = p->var.GradOrZero().data()[i];
    double& x = p->var.mutable_value().data()[i];
    const double orig = x;
    x = orig + h;
    const double up = objective().scalar();
    x = orig - h;
    const double down = objective().scalar();
    x = orig;
    const double numeric = (up - down) / (2 * h);
    const double rel =
        std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    if (rel > worst) {
      worst = rel;
      worst_name = p->name + "[" + std::to_string(i) + "]";
    }
  }
  const double secs = Seconds(t0);
  return {worst <= 1e-4 && secs < 60.0,
          std::to_string(coords.size()) + " coordinates incl. all " +
              std::to_string(log_vars->var.value().size()) +
              " log-variances, max rel err = " + Fmt("%.3g", worst) + " at " + worst_name +
              " (tol 1e-4, denominator floor 1e-6), " + Fmt("%.2f", secs) + " s"};
}

// ---------------------------------------------------------------------------

Verdict PaddingInvariance() {
  SynthSpec spec;
  spec.n_samples = 200;
  spec.seed = 8;
  const auto samples = GenerateSynthetic(spec);
  ModelConfig mc;
  mc.input_dim = spec.dim;
  mc.init_seed = 3;
  const Model model(mc, BuildTaskSet(RoutingPreset::kZeroFive, {}));
  const TaskSet tasks = model.tasks();
  double worst = 0;
  for (const auto& s : samples) {
    const Batch plain = CollateBatch({&s}, tasks);
    const Batch padded = CollateBatch({&s}, tasks, s.features.length() + 7);
    const Matrix a = model.Forward(plain).pooled.value();
    const Matrix b = model.Forward(padded).pooled.value();
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-7, "200 samples, max |padded - unpadded| = " + Fmt("%.3g", worst) +
                             " (tol 1e-7)"};
}

// ---------------------------------------------------------------------------

Verdict SyntheticOverfit() {
  const auto t0 = Clock::now();
  SynthSpec spec;
  spec.n_samples = 200;
  spec.noise_level = 0.0;
  spec.seed = 7;
  std::vector<LabeledSample> train, val;
  for (auto& s : GenerateSynthetic(spec))
    (s.split == Split::kTrain ? train : val).push_back(std::move(s));
  const TaskSet tasks = BuildTaskSet(RoutingPreset::kZeroFive, {});
  ModelConfig mc;
  mc.input_dim = spec.dim;
  mc.init_seed = MixSeed(7, 17);
  Model model(mc, tasks);
  const auto ctx = MakeObjectiveContext(train, tasks, true, SampleWeighting::kNone,
                                        UncertaintyForm::kSimple);
  const auto r = FitTwoStage(model, train, val, StageConfig::HeadsOnlyDefaults(),
                             StageConfig::FineTuneDefaults(), ctx, 7);
  const MetricsReport m = Evaluate(model, train, ctx);
  const double high = m.metric.at("High"), type = m.metric.at("Type");
  const double secs = Seconds(t0);
  const int epochs = static_cast<int>(r.stage1.epochs.size() + r.stage2.epochs.size()) - 2;
  return {high >= 0.9 && type >= 0.9 && secs < 300.0,
          "train High CCC = " + Fmt("%.4f", high) + " (>= 0.9), train Type UAR = " +
              Fmt("%.4f", type) + " (>= 0.9), " + std::to_string(epochs) +
              " epochs, " + Fmt("%.1f", secs) + " s (limit 300 s)"};
}

// ---------------------------------------------------------------------------

Verdict FreezeContract() {
  std::vector<LabeledSample> train, val;
  for (auto& s : testing::SmallSynth(120, 16, 4))
    (s.split == Split::kTrain ? train : val).push_back(std::move(s));
  const TaskSet tasks = BuildTaskSet(RoutingPreset::kTwoThree, {});
  ModelConfig mc;
  mc.input_dim = 16;
  mc.init_seed = 9;
  Model model(mc, tasks);
  const auto ctx = MakeObjectiveContext(train, tasks, true, SampleWeighting::kNone,
                                        UncertaintyForm::kSimple);
  std::vector<Matrix> before;
  for (Parameter* p : model.backbone().parameters()) before.push_back(p->var.value());
  const auto sum_before = ParameterChecksum(model.backbone().parameters());
  const auto heads_before = ParameterChecksum(model.parameters());
  StageConfig cfg = StageConfig::HeadsOnlyDefaults();
  cfg.max_epochs = 5;
  const auto h = TrainStage(model, train, val, cfg, ctx, 1);
  bool identical = true;
  const auto after = model.backbone().parameters();
  for (std::size_t i = 0; i < after.size(); ++i)
    identical = identical &&
                std::memcmp(before[i].data(), after[i]->var.value().data(),
                            sizeof(double) * before[i].size()) == 0;
  const bool same_sum = ParameterChecksum(model.backbone().parameters()) == sum_before;
  const bool heads_moved = ParameterChecksum(model.parameters()) != heads_before;
  return {identical && same_sum && heads_moved,
          std::string("backbone checksum ") + (same_sum ? "unchanged" : "CHANGED") +
              ", byte compare " + (identical ? "identical" : "DIFFERS") + ", heads " +
              (heads_moved ? "updated" : "NOT updated") + " over " +
              std::to_string(h.epochs.size() - 1) + " epochs"};
}

// ---------------------------------------------------------------------------

Verdict ScheduleExactness() {
  const StageConfig fine = StageConfig::FineTuneDefaults();
  const long long per_epoch = StepsPerEpoch(160, fine.batch_size);
  const long long warmup = per_epoch * fine.warmup_epochs;
  const long long total = per_epoch * fine.max_epochs;
  const double at_warmup = LrSchedule(warmup, warmup, total, fine.lr_max);
  const double at_zero = LrSchedule(0, warmup, total, fine.lr_max);
  const double at_end = LrSchedule(total, warmup, total, fine.lr_max);
  return {at_warmup == 4e-5 && at_zero == 0.0 && at_end == 0.0,
          "lr(warmup=" + std::to_string(warmup) + ") = " + Fmt("%.17g", at_warmup) +
              ", lr(0) = " + Fmt("%.17g", at_zero) + ", lr(total=" + std::to_string(total) +
              ") = " + Fmt("%.17g", at_end)};
}

// ---------------------------------------------------------------------------

int Shell(const std::string& cmd) {
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string Slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> Cells(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, '|')) {
    const std::string t = internal::Trim(cell);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

Verdict AblationGrid() {
  const auto t0 = Clock::now();
  testing::TempDir dir("accept_grid");
  const std::string cli = VBMTL_CLI_PATH;
  const std::string log = " > " + (dir.path() / "log.txt").string() + " 2>&1";
  const std::string data = (dir.path() / "data").string();
  if (Shell(cli + " synth --out " + data + " --n 50 --seed 7" + log) != 0)
    return {false, "synth failed: " + Slurp(dir.path() / "log.txt")};
  std::string tables[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = dir.path() / ("grid" + std::to_string(run));
    if (Shell(cli + " ablate --config " + data + "/experiment.cfg --out " + out.string() +
              log) != 0)
      return {false, "ablate failed: " + Slurp(dir.path() / "log.txt")};
    tables[run] = Slurp(out / "ablation.md");
  }
  std::istringstream is(tables[0]);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line) && !line.empty()) rows.push_back(Cells(line));
  std::vector<std::string> problems;
  const std::vector<std::string> header{"Method",   "High CCC", "Culture CCC",
                                        "Two CCC",  "Type UAR", "Country UAR"};
  if (rows.size() != 12) problems.push_back(std::to_string(rows.size() - 2) + " data rows");
  if (rows.empty() || rows[0] != header) problems.push_back("header/column order");
  const std::vector<std::string> labels{"2/3", "1/4", "0/5", "MSE", "MAE",
                                        "-Two", "-CW", "+SW", "-SM", "-Country"};
  for (std::size_t r = 2; r < rows.size() && r - 2 < labels.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 6 || row[0] != labels[r - 2]) {
      problems.push_back("row " + std::to_string(r - 1));
      continue;
    }
    for (int c = 1; c < 6; ++c) {
      const bool absent = (row[0] == "-Two" && c == 3) || (row[0] == "-Country" && c == 5);
      if (absent != (row[c] == "--")) problems.push_back(row[0] + " column " + header[c]);
      if (row[c] == "ERR") problems.push_back(row[0] + " failed");
    }
  }
  const bool same = tables[0] == tables[1];
  if (!same) problems.push_back("tables differ between runs");
  const double secs = Seconds(t0);
  if (secs >= 900) problems.push_back("too slow");
  std::string detail = "10 presets x 2 runs on 50 samples, " + Fmt("%.1f", secs) +
                       " s (limit 900 s), tables " + (same ? "identical" : "DIFFER");
  for (const auto& p : problems) detail += "; problem: " + p;
  return {problems.empty(), detail};
}

// ---------------------------------------------------------------------------

Verdict WeightFormulas() {
  const auto cw = ComputeClassWeights({10, 30, 60}).weights;
  const std::vector<double> want_cw{3.3333, 1.1111, 0.5556};
  double err_cw = 0;
  for (int i = 0; i < 3; ++i) err_cw = std::max(err_cw, std::abs(cw[i] - want_cw[i]));
  std::vector<int> countries{0, 0, 0, 1};
  const Vector sw = ComputeSampleWeights(countries, SampleWeighting::kInverseCountryIntraBatch);
  const std::vector<double> want_sw{2.0 / 3, 2.0 / 3, 2.0 / 3, 2.0};
  double err_sw = 0;
  for (int i = 0; i < 4; ++i) err_sw = std::max(err_sw, std::abs(sw(i) - want_sw[i]));
  return {err_cw <= 1e-4 && err_sw <= 1e-9,
          "class weights " + Fmt("%.4f", cw[0]) + "," + Fmt("%.4f", cw[1]) + "," +
              Fmt("%.4f", cw[2]) + " (max err " + Fmt("%.2g", err_cw) +
              ", tol 1e-4); sample weights max err " + Fmt("%.2g", err_sw) + " (tol 1e-9)"};
}

// ---------------------------------------------------------------------------

Verdict CheckpointRoundTrip() {
  testing::TempDir dir("accept_ckpt");
  std::vector<LabeledSample> train, val;
  for (auto& s : testing::SmallSynth(60, 12, 6))
    (s.split == Split::kTrain ? train : val).push_back(std::move(s));
  const TaskSet tasks = BuildTaskSet(RoutingPreset::kOneFour, {"-SM"});
  ModelConfig mc;
  mc.input_dim = 12;
  mc.init_seed = 4;
  Model model(mc, tasks);
  const auto ctx = MakeObjectiveContext(train, tasks, true, SampleWeighting::kNone,
                                        UncertaintyForm::kSimple);
  StageConfig fine = StageConfig::FineTuneDefaults();
  fine.max_epochs = 3;
  fine.lr_max = 1e-3;
  TrainStage(model, train, val, fine, ctx, 2);
  const Batch probe = MakeBatches(val, tasks, static_cast<int>(val.size())).front();
  const auto before = model.Forward(probe).outputs;
  SaveCheckpoint(model, dir.path() / "model.vbck");
  const auto loaded = LoadCheckpoint(dir.path() / "model.vbck", model.fingerprint());
  const auto after = loaded.model.Forward(probe).outputs;
  bool identical = before.size() == after.size();
  std::size_t values = 0;
  for (const auto& [task, v] : before) {
    const Matrix& a = v.value();
    const Matrix& b = after.at(task).value();
    identical = identical && a.rows() == b.rows() && a.cols() == b.cols() &&
                std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
    values += static_cast<std::size_t>(a.size());
  }
  return {identical, std::to_string(values) + " predicted values on a " +
                         std::to_string(probe.size()) + "-sample probe batch, " +
                         (identical ? "bit-identical" : "DIFFERENT") + " after save/load (" +
                         std::to_string(fs::file_size(dir.path() / "model.vbck")) +
                         " bytes)"};
}

}  // namespace
}  // namespace vbmtl

int main() {
  using vbmtl::Verdict;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"ccc_oracle_equivalence", vbmtl::CccOracle},
      {"gradient_correctness", vbmtl::GradientCheck},
      {"pooling_padding_invariance", vbmtl::PaddingInvariance},
      {"synthetic_overfit", vbmtl::SyntheticOverfit},
      {"freeze_contract", vbmtl::FreezeContract},
      {"schedule_exactness", vbmtl::ScheduleExactness},
      {"ablation_grid", vbmtl::AblationGrid},
      {"class_sample_weight_formulas", vbmtl::WeightFormulas},
      {"checkpoint_round_trip", vbmtl::CheckpointRoundTrip},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << name << ": " << v.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
