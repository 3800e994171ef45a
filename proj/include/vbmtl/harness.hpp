// vbmtl/harness.hpp

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

/*
 * Experiment harness: named ablation presets, single runs, grids of runs and
 * the result table (rows = presets; columns High CCC, Culture CCC, Two CCC,
 * Type UAR, Country UAR; "--" where a run has no such task).
 */

#pragma once

#include "vbmtl/config.hpp"
#include "vbmtl/dataio.hpp"
#include "vbmtl/model.hpp"
#include "vbmtl/trainer.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vbmtl {

// ---------------------------------------------------------------------------
// Presets

enum class PresetName {
  kTwoThree,
  kOneFour,
  kZeroFive,
  kMSE,
  kMAE,
  kMinusTwo,
  kMinusCW,
  kPlusSW,
  kMinusSM,
  kMinusCountry,
};

/// Table row order.
inline const std::vector<PresetName>& AllPresets() {
  static const std::vector<PresetName> kAll = {
      PresetName::kTwoThree, PresetName::kOneFour, PresetName::kZeroFive,
      PresetName::kMSE,      PresetName::kMAE,     PresetName::kMinusTwo,
      PresetName::kMinusCW,  PresetName::kPlusSW,  PresetName::kMinusSM,
      PresetName::kMinusCountry};
  return kAll;
}

inline std::string Label(PresetName p) {
  switch (p) {
    case PresetName::kTwoThree: return "2/3";
    case PresetName::kOneFour: return "1/4";
    case PresetName::kZeroFive: return "0/5";
    case PresetName::kMSE: return "MSE";
    case PresetName::kMAE: return "MAE";
    case PresetName::kMinusTwo: return "-Two";
    case PresetName::kMinusCW: return "-CW";
    case PresetName::kPlusSW: return "+SW";
    case PresetName::kMinusSM: return "-SM";
    case PresetName::kMinusCountry: return "-Country";
  }
  return "?";
}

inline PresetName ParsePresetName(std::string_view s) {
  static const std::map<std::string, PresetName, std::less<>> kNames = {
      {"2/3", PresetName::kTwoThree},     {"TwoThree", PresetName::kTwoThree},
      {"1/4", PresetName::kOneFour},      {"OneFour", PresetName::kOneFour},
      {"0/5", PresetName::kZeroFive},     {"ZeroFive", PresetName::kZeroFive},
      {"MSE", PresetName::kMSE},          {"MAE", PresetName::kMAE},
      {"-Two", PresetName::kMinusTwo},    {"MinusTwo", PresetName::kMinusTwo},
      {"-CW", PresetName::kMinusCW},      {"MinusCW", PresetName::kMinusCW},
      {"+SW", PresetName::kPlusSW},       {"PlusSW", PresetName::kPlusSW},
      {"-SM", PresetName::kMinusSM},      {"MinusSM", PresetName::kMinusSM},
      {"-Country", PresetName::kMinusCountry},
      {"MinusCountry", PresetName::kMinusCountry}};
  auto it = kNames.find(s);
  if (it == kNames.end()) throw ConfigError(StrCat("unknown preset '", s, "'"));
  return it->second;
}

/// Directory-safe form of a preset label.
inline std::string Slug(PresetName p) {
  switch (p) {
    case PresetName::kTwoThree: return "2_3";
    case PresetName::kOneFour: return "1_4";
    case PresetName::kZeroFive: return "0_5";
    case PresetName::kMSE: return "mse";
    case PresetName::kMAE: return "mae";
    case PresetName::kMinusTwo: return "minus_two";
    case PresetName::kMinusCW: return "minus_cw";
    case PresetName::kPlusSW: return "plus_sw";
    case PresetName::kMinusSM: return "minus_sm";
    case PresetName::kMinusCountry: return "minus_country";
  }
  return "unknown";
}

namespace internal {

inline void AddVariant(ExperimentConfig& c, const std::string& flag) {
  if (flag == "MSE") c.variants.erase("MAE");
  if (flag == "MAE") c.variants.erase("MSE");
  c.variants.insert(flag);
}

/// The preset's own change, applied to whatever config it receives.
inline void ApplyOwnDelta(PresetName p, ExperimentConfig& c) {
  switch (p) {
    case PresetName::kTwoThree: c.routing = RoutingPreset::kTwoThree; break;
    case PresetName::kOneFour: c.routing = RoutingPreset::kOneFour; break;
    case PresetName::kZeroFive: c.routing = RoutingPreset::kZeroFive; break;
    case PresetName::kMSE: AddVariant(c, "MSE"); break;
    case PresetName::kMAE: AddVariant(c, "MAE"); break;
    case PresetName::kMinusTwo: AddVariant(c, "-Two"); break;
    case PresetName::kMinusCW: c.class_weights = false; break;
    case PresetName::kPlusSW:
      // Sample weights replace the class weights.
      c.class_weights = false;
      c.sample_weighting = SampleWeighting::kInverseCountryIntraBatch;
      break;
    case PresetName::kMinusSM: AddVariant(c, "-SM"); break;
    case PresetName::kMinusCountry: AddVariant(c, "-Country"); break;
  }
}

/// Winners carried into each experiment block: 0/5 after the routing
/// block, -Two after the loss block, -SM after the weighting block.
inline std::vector<PresetName> ChainPrefix(PresetName p) {
  switch (p) {
    case PresetName::kTwoThree:
    case PresetName::kOneFour:
    case PresetName::kZeroFive: return {};
    case PresetName::kMSE:
    case PresetName::kMAE:
    case PresetName::kMinusTwo: return {PresetName::kZeroFive};
    case PresetName::kMinusCW:
    case PresetName::kPlusSW:
    case PresetName::kMinusSM:
      return {PresetName::kZeroFive, PresetName::kMinusTwo};
    case PresetName::kMinusCountry:
      return {PresetName::kZeroFive, PresetName::kMinusTwo, PresetName::kMinusSM};
  }
  return {};
}

}  // namespace internal

/// Fully resolved config for a preset. With `chain`, the winners of the
/// earlier experiment blocks are applied first.
inline ExperimentConfig ApplyPreset(PresetName p, const ExperimentConfig& base,
                                    bool chain = false) {
  ExperimentConfig c = base;
  if (chain)
    for (PresetName q : internal::ChainPrefix(p)) internal::ApplyOwnDelta(q, c);
  internal::ApplyOwnDelta(p, c);
  return c;
}

/// The preset as `key=value` overrides relative to `base`; feeding them to
/// ParseConfigText together with the base reproduces ApplyPreset.
inline std::vector<std::string> PresetOverrides(PresetName p,
                                                const ExperimentConfig& base,
                                                bool chain = false) {
  const ExperimentConfig target = ApplyPreset(p, base, chain);
  const auto before = ParseKeyValueText(SerializeConfig(base));
  const auto after = ParseKeyValueText(SerializeConfig(target));
  std::map<std::string, std::string> old(before.begin(), before.end());
  std::vector<std::string> out;
  for (const auto& [k, v] : after)
    if (old[k] != v) out.push_back(k + "=" + v);
  return out;
}

// ---------------------------------------------------------------------------
// Data

struct DataSplits {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> val;
  std::vector<LabeledSample> test;
};

inline DataSplits LoadData(const ExperimentConfig& cfg) {
  std::vector<LabeledSample> all;
  if (cfg.synth) {
    SynthSpec spec = cfg.synth_spec;
    spec.seed = cfg.seed;
    all = GenerateSynthetic(spec);
  } else {
    all = ReadManifest(cfg.manifest);
  }
  DataSplits d;
  for (auto& s : all) {
    switch (s.split) {
      case Split::kTrain: d.train.push_back(std::move(s)); break;
      case Split::kVal: d.val.push_back(std::move(s)); break;
      case Split::kTest: d.test.push_back(std::move(s)); break;
    }
  }
  if (d.train.empty()) throw DataError("dataset has no training samples");
  if (d.val.empty()) throw DataError("dataset has no validation samples");
  return d;
}

inline void CheckLabels(const std::vector<LabeledSample>& samples,
                        const TaskSet& tasks) {
  for (const auto& s : samples) {
    const auto r = ValidateLabels(s.targets, tasks);
    if (!r.ok())
      throw DataError(StrCat("sample '", s.id, "' has invalid labels:\n", r.Summary()));
  }
}

// ---------------------------------------------------------------------------
// Checkpoint metadata for the objective context

inline Metadata ObjectiveMetadata(const ObjectiveContext& ctx) {
  Metadata m;
  m["objective.sample_weighting"] = ToString(ctx.sample_weighting);
  m["objective.uncertainty"] = ToString(ctx.uncertainty);
  for (const auto& [task, w] : ctx.class_weights) {
    std::string v;
    for (double x : w) v += (v.empty() ? "" : ",") + internal::FormatDouble(x);
    m["objective.class_weights." + task] = v;
  }
  return m;
}

inline ObjectiveContext ObjectiveFromMetadata(const Metadata& m, const TaskSet& tasks) {
  ObjectiveContext ctx;
  if (auto it = m.find("objective.sample_weighting"); it != m.end())
    ctx.sample_weighting = ParseSampleWeighting(it->second);
  if (auto it = m.find("objective.uncertainty"); it != m.end())
    ctx.uncertainty = ParseUncertaintyForm(it->second);
  for (const auto& t : tasks.tasks) {
    if (t.is_regression()) continue;
    auto it = m.find("objective.class_weights." + t.name);
    if (it == m.end()) {
      ctx.class_weights[t.name].assign(t.dim, 1.0);
      continue;
    }
    for (const auto& part : internal::SplitCsvLine(it->second))
      ctx.class_weights[t.name].push_back(internal::ToDouble(t.name, part));
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Runs

struct RunResult {
  std::string label;
  ExperimentConfig config;
  TaskSet tasks;
  TrainHistory stage1;
  TrainHistory stage2;
  MetricsReport val_metrics;
  std::optional<std::string> error;
};

/// Trains one configuration end to end on preloaded data. When `out_dir` is
/// non-empty the run's artifacts are written there.
inline RunResult RunExperiment(const ExperimentConfig& cfg, const DataSplits& data,
                               const std::string& label,
                               const std::filesystem::path& out_dir = {}) {
  RunResult r;
  r.label = label;
  r.config = cfg;
  r.tasks = cfg.BuildTasks();
  CheckLabels(data.train, r.tasks);
  CheckLabels(data.val, r.tasks);
  ModelConfig mc = cfg.model;
  mc.input_dim = data.train.front().features.dim();
  Model model(mc, r.tasks);
  const ObjectiveContext ctx = MakeObjectiveContext(
      data.train, r.tasks, cfg.class_weights, cfg.sample_weighting, cfg.uncertainty);
  auto fit = FitTwoStage(model, data.train, data.val, cfg.stage1, cfg.stage2, ctx,
                         cfg.seed);
  r.stage1 = std::move(fit.stage1);
  r.stage2 = std::move(fit.stage2);
  r.val_metrics = Evaluate(model, data.val, ctx, cfg.stage2.batch_size);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "config.cfg") << SerializeConfig(cfg);
    WriteHistory(r.stage1, out_dir / "history_stage1.jsonl");
    WriteHistory(r.stage2, out_dir / "history_stage2.jsonl");
    std::ofstream(out_dir / "metrics.txt") << r.val_metrics.ToKeyValue();
    SaveCheckpoint(model, out_dir / "checkpoint.vbck", ObjectiveMetadata(ctx));
    nlohmann::json info;
    info["label"] = label;
    info["tasks"] = TaskNames(r.tasks);
    std::ofstream(out_dir / "run_info.json") << info.dump(2) << '\n';
  }
  return r;
}

inline RunResult RunPreset(PresetName p, const ExperimentConfig& base,
                           const DataSplits& data, bool chain = false,
                           const std::filesystem::path& out_dir = {}) {
  return RunExperiment(ApplyPreset(p, base, chain), data, Label(p), out_dir);
}

// ---------------------------------------------------------------------------
// Report table

inline const std::vector<std::pair<std::string, std::string>>& TableColumns() {
  static const std::vector<std::pair<std::string, std::string>> kCols = {
      {std::string(kHigh), "CCC"},
      {std::string(kCulture), "CCC"},
      {std::string(kTwo), "CCC"},
      {std::string(kType), "UAR"},
      {std::string(kCountry), "UAR"}};
  return kCols;
}

struct TableRow {
  std::string label;
  std::map<std::string, double> metric;  // only the run's active tasks
  std::optional<std::string> error;

  bool operator==(const TableRow&) const = default;
};

struct ReportTable {
  std::vector<TableRow> rows;
  bool operator==(const ReportTable&) const = default;
};

inline TableRow RowFrom(const RunResult& r) {
  TableRow row{r.label, {}, r.error};
  if (!r.error) row.metric = r.val_metrics.metric;
  return row;
}

/// ".650" style: three decimals, no leading zero.
inline std::string FormatMetric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  if (s.rfind("0.", 0) == 0) s.erase(0, 1);
  if (s.rfind("-0.", 0) == 0) s.erase(1, 1);
  return s;
}

inline std::string RenderMarkdown(const ReportTable& t, bool bold_best = true) {
  std::map<std::string, double> best;
  for (const auto& row : t.rows)
    for (const auto& [task, v] : row.metric)
      if (!best.contains(task) || v > best[task]) best[task] = v;
  std::ostringstream os;
  os << "| Method |";
  for (const auto& [task, metric] : TableColumns()) os << ' ' << task << ' ' << metric << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < TableColumns().size(); ++i) os << "---|";
  os << '\n';
  std::vector<std::string> errors;
  for (const auto& row : t.rows) {
    os << "| " << row.label << " |";
    for (const auto& [task, metric] : TableColumns()) {
      if (row.error) {
        os << " ERR |";
      } else if (auto it = row.metric.find(task); it == row.metric.end()) {
        os << " -- |";
      } else {
        const std::string cell = FormatMetric(it->second);
        const bool b = bold_best && FormatMetric(best[task]) == cell;
        os << ' ' << (b ? "**" + cell + "**" : cell) << " |";
      }
    }
    os << '\n';
    if (row.error) errors.push_back(row.label + ": " + *row.error);
  }
  if (!errors.empty()) {
    os << "\nFailed runs:\n";
    for (const auto& e : errors) os << "- " << e << '\n';
  }
  return os.str();
}

inline std::string RenderCsv(const ReportTable& t) {
  std::ostringstream os;
  os << "method";
  for (const auto& [task, metric] : TableColumns()) {
    std::string col = task + "_" + metric;
    std::transform(col.begin(), col.end(), col.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    os << ',' << col;
  }
  os << ",error\n";
  char buf[32];
  for (const auto& row : t.rows) {
    os << row.label;
    for (const auto& [task, metric] : TableColumns()) {
      if (row.error) {
        os << ",ERR";
      } else if (auto it = row.metric.find(task); it == row.metric.end()) {
        os << ",--";
      } else {
        std::snprintf(buf, sizeof buf, "%.6f", it->second);
        os << ',' << buf;
      }
    }
    std::string err = row.error.value_or("");
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << ',' << err << '\n';
  }
  return os.str();
}

struct GridOptions {
  bool chain = false;
  int jobs = 1;
  std::filesystem::path out_dir;  // empty: no artifacts
};

struct GridResult {
  std::vector<RunResult> runs;
  ReportTable table;
};

/// Runs each preset with the base config's seed. A failing preset is
/// recorded in its row; the rest of the grid still runs.
inline GridResult RunGrid(const std::vector<PresetName>& presets,
                          const ExperimentConfig& base, const GridOptions& opt = {}) {
  if (presets.empty()) throw ConfigError("RunGrid: no presets");
  const DataSplits data = LoadData(base);
  auto run_one = [&](PresetName p) {
    const auto dir = opt.out_dir.empty() ? std::filesystem::path()
                                         : opt.out_dir / Slug(p);
    try {
      return RunPreset(p, base, data, opt.chain, dir);
    } catch (const std::exception& e) {
      RunResult r;
      r.label = Label(p);
      r.config = ApplyPreset(p, base, opt.chain);
      r.error = e.what();
      return r;
    }
  };
  GridResult g;
  g.runs.resize(presets.size());
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, opt.jobs));
  for (std::size_t start = 0; start < presets.size(); start += jobs) {
    std::vector<std::future<RunResult>> pending;
    const std::size_t end = std::min(presets.size(), start + jobs);
    for (std::size_t i = start; i < end; ++i)
      pending.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                   run_one, presets[i]));
    for (std::size_t i = start; i < end; ++i) g.runs[i] = pending[i - start].get();
  }
  for (const auto& r : g.runs) g.table.rows.push_back(RowFrom(r));
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    std::ofstream(opt.out_dir / "ablation.md") << RenderMarkdown(g.table);
    std::ofstream(opt.out_dir / "ablation.csv") << RenderCsv(g.table);
    nlohmann::json index = nlohmann::json::array();
    for (PresetName p : presets) index.push_back({{"label", Label(p)}, {"dir", Slug(p)}});
    std::ofstream(opt.out_dir / "grid.json") << index.dump(2) << '\n';
  }
  return g;
}

/// Rebuilds a table row from a run directory's history files: the
/// validation metrics recorded at the final stage's best epoch.
inline TableRow RowFromRunDir(const std::filesystem::path& dir, std::string label = {}) {
  if (label.empty() && std::filesystem::exists(dir / "run_info.json")) {
    std::ifstream is(dir / "run_info.json");
    label = nlohmann::json::parse(is).at("label").get<std::string>();
  }
  if (label.empty()) label = dir.filename().string();
  TableRow row{label, {}, std::nullopt};
  const auto hist_path = dir / "history_stage2.jsonl";
  if (!std::filesystem::exists(hist_path)) {
    row.error = "no history_stage2.jsonl";
    return row;
  }
  const TrainHistory h = ReadHistory(hist_path);
  if (h.epochs.empty()) {
    row.error = "empty history";
    return row;
  }
  row.metric = h.best().val.metric;
  return row;
}

/// Table for an `ablate` output directory (reads grid.json for row order).
inline ReportTable TableFromGridDir(const std::filesystem::path& dir) {
  ReportTable t;
  std::ifstream is(dir / "grid.json");
  if (!is) throw Error(StrCat("no grid.json in '", dir.string(), "'"));
  for (const auto& entry : nlohmann::json::parse(is)) {
    const std::string label = entry.at("label");
    const auto run_dir = dir / entry.at("dir").get<std::string>();
    try {
      t.rows.push_back(RowFromRunDir(run_dir, label));
    } catch (const std::exception& e) {
      t.rows.push_back({label, {}, std::string(e.what())});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Predictions CSV: id,task,dim_index,value

inline std::string RenderPredictionsCsv(const Predictions& p, const TaskSet& tasks) {
  std::ostringstream os;
  os << "id,task,dim_index,value\n" << std::setprecision(9);
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    for (const auto& t : tasks.tasks) {
      const Matrix& m = p.outputs.at(t.name);
      for (Eigen::Index k = 0; k < m.cols(); ++k)
        os << p.ids[i] << ',' << t.name << ',' << k << ','
           << m(static_cast<Eigen::Index>(i), k) << '\n';
    }
  }
  return os.str();
}

}  // namespace vbmtl
