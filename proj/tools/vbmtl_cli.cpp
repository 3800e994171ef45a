// tools/vbmtl_cli.cpp

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

// vbmtl: synth | train | evaluate | predict | ablate | report

#include "vbmtl/vbmtl.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace vbmtl;

namespace {

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
  std::vector<std::string> overrides;
};

void AddCommon(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--seed", o.seed, "Random seed (overrides the config)");
  cmd->add_option("--out", o.out, "Output location");
  cmd->add_option("--config", o.config, "Experiment config file");
  cmd->add_option("--override", o.overrides, "key=value config override (repeatable)");
}

ExperimentConfig LoadConfig(const CommonOptions& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  std::vector<std::string> ov = o.overrides;
  if (o.seed) ov.push_back(StrCat("seed=", *o.seed));
  if (!o.out.empty()) ov.push_back("out=" + o.out);
  return ParseConfig(o.config, ov);
}

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(StrCat("cannot open '", path.string(), "' for writing"));
  os << text;
}

std::vector<LabeledSample> SelectSplit(std::vector<LabeledSample> all,
                                       const std::string& split) {
  if (split == "all") return all;
  const auto parsed = ParseSplit(split);
  if (!parsed) throw ConfigError(StrCat("unknown split '", split, "'"));
  return FilterSplit(all, *parsed);
}

void CheckInputDim(const Model& model, const std::vector<LabeledSample>& samples) {
  const Eigen::Index want = model.config().input_dim;
  for (const auto& s : samples)
    if (s.features.dim() != want)
      throw DimensionError(StrCat("sample '", s.id, "' has feature dim ",
                                  s.features.dim(), ", checkpoint expects ", want));
}

// ---------------------------------------------------------------------------

int RunSynth(const CommonOptions& o, int n, int dim, double noise) {
  if (o.out.empty()) throw ConfigError("--out is required");
  SynthSpec spec;
  spec.n_samples = n;
  spec.dim = dim;
  spec.noise_level = noise;
  spec.seed = o.seed.value_or(0);
  spec.Validate();
  auto samples = GenerateSynthetic(spec);
  const fs::path dir = fs::absolute(o.out);
  WriteDataset(samples, dir);
  ExperimentConfig cfg;
  cfg.manifest = "manifest.csv";
  cfg.seed = spec.seed;
  cfg.out_dir = (dir / "runs").string();
  WriteText(dir / "experiment.cfg", SerializeConfig(cfg));
  const auto hist = SplitHistogram(samples);
  std::cout << "wrote " << samples.size() << " samples to " << dir.string() << " (";
  bool first = true;
  for (const auto& [split, count] : hist) {
    std::cout << (first ? "" : ", ") << ToString(split) << ' ' << count;
    first = false;
  }
  std::cout << ")\nconfig: " << (dir / "experiment.cfg").string() << '\n';
  return 0;
}

int RunTrain(const CommonOptions& o) {
  const ExperimentConfig cfg = LoadConfig(o);
  const DataSplits data = LoadData(cfg);
  const RunResult r = RunExperiment(cfg, data, "train", cfg.out_dir);
  std::cout << "stage1 best epoch " << r.stage1.best_epoch << ", stage2 best epoch "
            << r.stage2.best_epoch << '\n'
            << r.val_metrics.ToKeyValue() << "artifacts: " << cfg.out_dir << '\n';
  return 0;
}

struct LoadedRun {
  LoadedCheckpoint ckpt;
  ObjectiveContext ctx;
};

LoadedRun LoadRun(const std::string& checkpoint) {
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
  LoadedCheckpoint ckpt = LoadCheckpoint(checkpoint);
  ObjectiveContext ctx = ObjectiveFromMetadata(ckpt.metadata, ckpt.model.tasks());
  return {std::move(ckpt), std::move(ctx)};
}

std::vector<LabeledSample> SamplesFor(const CommonOptions& o, const std::string& manifest,
                                      const std::string& split) {
  if (!manifest.empty()) return SelectSplit(ReadManifest(manifest), split);
  const ExperimentConfig cfg = LoadConfig(o);
  if (cfg.synth) {
    SynthSpec spec = cfg.synth_spec;
    spec.seed = cfg.seed;
    return SelectSplit(GenerateSynthetic(spec), split);
  }
  return SelectSplit(ReadManifest(cfg.manifest), split);
}

int RunEvaluate(const CommonOptions& o, const std::string& checkpoint,
                const std::string& manifest, const std::string& split) {
  LoadedRun run = LoadRun(checkpoint);
  const auto samples = SamplesFor(o, manifest, split);
  CheckInputDim(run.ckpt.model, samples);
  const MetricsReport report = Evaluate(run.ckpt.model, samples, run.ctx);
  std::cout << report.ToKeyValue();
  if (!o.out.empty()) WriteText(o.out, report.ToKeyValue());
  return 0;
}

int RunPredict(const CommonOptions& o, const std::string& checkpoint,
               const std::string& manifest, const std::string& split) {
  if (o.out.empty()) throw ConfigError("--out is required");
  LoadedRun run = LoadRun(checkpoint);
  const auto samples = SamplesFor(o, manifest, split);
  if (samples.empty()) throw DataError(StrCat("no samples in split '", split, "'"));
  CheckInputDim(run.ckpt.model, samples);
  const Predictions p = Predict(run.ckpt.model, samples);
  WriteText(o.out, RenderPredictionsCsv(p, run.ckpt.model.tasks()));
  std::cout << "wrote predictions for " << p.ids.size() << " samples to " << o.out << '\n';
  return 0;
}

int RunAblate(const CommonOptions& o, const std::vector<std::string>& preset_names,
              bool chain, int jobs) {
  const ExperimentConfig cfg = LoadConfig(o);
  std::vector<PresetName> presets;
  for (const auto& name : preset_names) presets.push_back(ParsePresetName(name));
  if (presets.empty()) presets = AllPresets();
  GridOptions opt;
  opt.chain = chain;
  opt.jobs = jobs;
  opt.out_dir = cfg.out_dir;
  const GridResult g = RunGrid(presets, cfg, opt);
  std::cout << RenderMarkdown(g.table) << "\ntable: "
            << (fs::path(cfg.out_dir) / "ablation.md").string() << '\n';
  for (const auto& row : g.table.rows)
    if (row.error) return 1;
  return 0;
}

int RunReport(const CommonOptions& o, const std::string& in, bool bold) {
  if (in.empty()) throw ConfigError("--in is required");
  const ReportTable t = TableFromGridDir(in);
  const fs::path out = o.out.empty() ? fs::path(in) : fs::path(o.out);
  WriteText(out / "ablation.md", RenderMarkdown(t, bold));
  WriteText(out / "ablation.csv", RenderCsv(t));
  std::cout << RenderMarkdown(t, bold);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task vocal burst training and ablation harness"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and config");
  int synth_n = 200, synth_dim = 32;
  double synth_noise = 0.0;
  AddCommon(synth, common);
  synth->add_option("--n", synth_n, "Number of samples")->check(CLI::PositiveNumber);
  synth->add_option("--dim", synth_dim, "Feature dimension")->check(CLI::PositiveNumber);
  synth->add_option("--noise", synth_noise, "Label noise level");

  auto* train = app.add_subcommand("train", "Two-stage training of one configuration");
  AddCommon(train, common);
  train->get_option("--config")->required();

  std::string checkpoint, manifest, split = "val";
  auto* evaluate = app.add_subcommand("evaluate", "Metrics of a checkpoint on a split");
  AddCommon(evaluate, common);
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--manifest", manifest, "Manifest (default: the config's data)");
  evaluate->add_option("--split", split, "train, val, test or all");

  auto* predict = app.add_subcommand("predict", "Per-sample predictions CSV");
  std::string predict_split = "all";
  AddCommon(predict, common);
  predict->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  predict->add_option("--manifest", manifest, "Manifest (default: the config's data)");
  predict->add_option("--split", predict_split, "train, val, test or all");

  auto* ablate = app.add_subcommand("ablate", "Run a grid of presets and write the table");
  std::vector<std::string> presets;
  bool chain = false;
  int jobs = 1;
  AddCommon(ablate, common);
  ablate->get_option("--config")->required();
  ablate->add_option("--presets", presets, "Comma-separated presets (default: all)")
      ->delimiter(',');
  ablate->add_flag("--chain", chain, "Carry earlier blocks' winners into later presets");
  ablate->add_option("--jobs", jobs, "Presets run concurrently")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Rebuild the table from an ablate directory");
  std::string report_in;
  bool no_bold = false;
  AddCommon(report, common);
  report->add_option("--in", report_in, "Directory written by ablate")->required();
  report->add_flag("--no-bold", no_bold, "Do not mark the best value per column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (const CLI::App* sub : app.get_subcommands()) failing = sub;
    std::cerr << failing->help();
    return 2;
  }

  try {
    if (*synth) return RunSynth(common, synth_n, synth_dim, synth_noise);
    if (*train) return RunTrain(common);
    if (*evaluate) return RunEvaluate(common, checkpoint, manifest, split);
    if (*predict) return RunPredict(common, checkpoint, manifest, predict_split);
    if (*ablate) return RunAblate(common, presets, chain, jobs);
    if (*report) return RunReport(common, report_in, !no_bold);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
