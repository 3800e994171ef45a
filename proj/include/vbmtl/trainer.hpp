// vbmtl/trainer.hpp

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
 * Two-stage training.
 *
 * Stage HeadsOnly freezes the backbone and trains heads plus log-variances
 * at a fixed learning rate. Stage FineTune unfreezes everything and follows
 * a warmup + cosine schedule. Each stage evaluates the validation split
 * before its first epoch (epoch 0) and after every epoch, stops once the
 * validation total loss has not improved for `patience` epochs, and restores
 * the best epoch's parameters on exit.
 */

#pragma once

#include "vbmtl/dataio.hpp"
#include "vbmtl/model.hpp"
#include "vbmtl/objectives.hpp"
#include "vbmtl/optim.hpp"
#include "vbmtl/weighting.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vbmtl {

enum class Stage { kHeadsOnly, kFineTune };
enum class LrPolicy { kFixed, kCosineWarmup };

inline std::string ToString(Stage s) {
  return s == Stage::kHeadsOnly ? "HeadsOnly" : "FineTune";
}

struct StageConfig {
  Stage stage = Stage::kHeadsOnly;
  int max_epochs = 30;
  int patience = 2;
  int batch_size = 32;
  AdamWConfig adam;
  LrPolicy lr_policy = LrPolicy::kFixed;
  double lr = 1e-3;       // kFixed
  double lr_max = 4e-5;   // kCosineWarmup
  int warmup_epochs = 1;  // kCosineWarmup
  double grad_clip = 0;   // 0 disables clipping

  static StageConfig HeadsOnlyDefaults() { return {}; }

  static StageConfig FineTuneDefaults() {
    StageConfig c;
    c.stage = Stage::kFineTune;
    c.lr_policy = LrPolicy::kCosineWarmup;
    return c;
  }

  void Validate() const {
    if (max_epochs < 1) throw ConfigError("stage: max_epochs must be >= 1");
    if (patience < 1 || patience >= max_epochs)
      throw ConfigError("stage: need 1 <= patience < max_epochs");
    if (batch_size < 1) throw ConfigError("stage: batch_size must be >= 1");
    if (lr_policy == LrPolicy::kFixed && !(lr >= 0))
      throw ConfigError("stage: lr must be non-negative");
    if (lr_policy == LrPolicy::kCosineWarmup && !(lr_max > 0))
      throw ConfigError("stage: lr_max must be positive");
    if (lr_policy == LrPolicy::kCosineWarmup &&
        (warmup_epochs < 1 || warmup_epochs >= max_epochs))
      throw ConfigError("stage: need 1 <= warmup_epochs < max_epochs");
  }

  bool operator==(const StageConfig&) const = default;
};

/// Everything the losses need besides model outputs and targets.
struct ObjectiveContext {
  std::map<std::string, std::vector<double>> class_weights;
  SampleWeighting sample_weighting = SampleWeighting::kNone;
  UncertaintyForm uncertainty = UncertaintyForm::kSimple;
};

/// Inverse-frequency class weights from the training split, or unit weights
/// when `use_class_weights` is false.
inline ObjectiveContext MakeObjectiveContext(
    const std::vector<LabeledSample>& train, const TaskSet& tasks,
    bool use_class_weights, SampleWeighting sw, UncertaintyForm form) {
  ObjectiveContext ctx;
  ctx.sample_weighting = sw;
  ctx.uncertainty = form;
  for (const auto& t : tasks.tasks) {
    if (t.is_regression()) continue;
    if (!use_class_weights) {
      ctx.class_weights[t.name].assign(t.dim, 1.0);
      continue;
    }
    std::vector<long long> counts(t.dim, 0);
    for (const auto& s : train) {
      auto it = s.targets.find(t.name);
      if (it != s.targets.end() && it->second.label >= 0 &&
          it->second.label < t.dim)
        ++counts[it->second.label];
    }
    ctx.class_weights[t.name] =
        ComputeClassWeights(std::span<const long long>(counts), t.name).weights;
  }
  return ctx;
}

inline std::vector<UncertaintyFactors> FactorsFor(const TaskSet& tasks,
                                                  UncertaintyForm form) {
  std::vector<UncertaintyFactors> f;
  for (const auto& t : tasks.tasks) f.push_back(FactorsFor(form, t.kind));
  return f;
}

/// Loss of one task on batch-shaped outputs. Throws DegenerateInput when
/// the loss is undefined on these rows.
inline ad::Var TaskLoss(const TaskSpec& task, const ad::Var& output,
                        const Batch& batch, const ObjectiveContext& ctx,
                        const Vector& sample_weights) {
  if (task.is_regression()) {
    const Matrix& y = batch.reg_targets.at(task.name);
    const Matrix& m = batch.reg_masks.at(task.name);
    switch (task.loss) {
      case LossKind::kCCC: return CccLoss(output, y, m, sample_weights);
      case LossKind::kMSE: return MseLoss(output, y, m, sample_weights);
      case LossKind::kMAE: return MaeLoss(output, y, m, sample_weights);
      default: break;
    }
    throw ConfigError(StrCat("task ", task.name, ": invalid regression loss"));
  }
  const auto& w = ctx.class_weights.at(task.name);
  return WeightedCrossEntropy(output, batch.labels.at(task.name), w,
                              sample_weights);
}

/// Per-task losses for a forward pass; tasks undefined on this batch are
/// left empty.
inline std::vector<std::optional<ad::Var>> TaskLosses(
    const Model& model, const ForwardOutput& fwd, const Batch& batch,
    const ObjectiveContext& ctx, const Vector& sample_weights) {
  std::vector<std::optional<ad::Var>> out;
  for (const auto& t : model.tasks().tasks) {
    try {
      out.emplace_back(
          TaskLoss(t, fwd.outputs.at(t.name), batch, ctx, sample_weights));
    } catch (const DegenerateInput&) {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

inline std::vector<std::string> TaskNames(const TaskSet& tasks) {
  std::vector<std::string> n;
  for (const auto& t : tasks.tasks) n.push_back(t.name);
  return n;
}

/// Full objective for one batch: forward, per-task losses, uncertainty
/// combination. Returns nullopt when every task is undefined on the batch.
inline std::optional<ad::Var> BatchObjective(
    const Model& model, const Batch& batch, const ObjectiveContext& ctx,
    std::vector<std::optional<ad::Var>>* task_losses = nullptr) {
  const ForwardOutput fwd = model.Forward(batch);
  const Vector sw = ComputeSampleWeights(batch.countries, ctx.sample_weighting);
  auto losses = TaskLosses(model, fwd, batch, ctx, sw);
  bool any = false;
  for (const auto& l : losses) any = any || l.has_value();
  if (!any) return std::nullopt;
  ad::Var total = CombineMtl(losses, model.log_vars(),
                             FactorsFor(model.tasks(), ctx.uncertainty),
                             TaskNames(model.tasks()));
  if (task_losses) *task_losses = std::move(losses);
  return total;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Predictions {
  std::vector<std::string> ids;
  std::map<std::string, Matrix> outputs;  // task -> N x dim, split order
};

inline Predictions Predict(const Model& model,
                           const std::vector<LabeledSample>& samples,
                           int batch_size = 32) {
  Predictions p;
  std::map<std::string, std::vector<Matrix>> parts;
  for (const Batch& b : MakeBatches(samples, model.tasks(), batch_size)) {
    const ForwardOutput fwd = model.Forward(b);
    for (const auto& [task, var] : fwd.outputs) parts[task].push_back(var.value());
    p.ids.insert(p.ids.end(), b.ids.begin(), b.ids.end());
  }
  for (auto& [task, mats] : parts) {
    Eigen::Index rows = 0;
    for (const auto& m : mats) rows += m.rows();
    Matrix all(rows, mats.front().cols());
    Eigen::Index r = 0;
    for (const auto& m : mats) {
      all.middleRows(r, m.rows()) = m;
      r += m.rows();
    }
    p.outputs[task] = std::move(all);
  }
  return p;
}

/// Split-level metrics: CCC over the concatenated predictions of the whole
/// split (per dimension, observed rows only, averaged over dimensions) and
/// UAR with lowest-index argmax tie-breaking. Losses are evaluated on the
/// whole split with class weights and without sample weights.
inline MetricsReport Evaluate(const Model& model,
                              const std::vector<LabeledSample>& samples,
                              const ObjectiveContext& ctx, int batch_size = 32) {
  if (samples.empty()) throw DataError("Evaluate: empty split");
  const Predictions pred = Predict(model, samples, batch_size);
  std::vector<const LabeledSample*> all;
  for (const auto& s : samples) all.push_back(&s);
  const Batch whole = CollateBatch(all, model.tasks());

  MetricsReport r;
  std::vector<std::optional<ad::Var>> losses;
  for (const auto& t : model.tasks().tasks) {
    r.tasks.push_back(t.name);
    const Matrix& out = pred.outputs.at(t.name);
    if (t.is_regression()) {
      r.metric_name[t.name] = "CCC";
      const Matrix& y = whole.reg_targets.at(t.name);
      const Matrix& m = whole.reg_masks.at(t.name);
      double sum = 0;
      int dims = 0;
      for (Eigen::Index k = 0; k < y.cols(); ++k) {
        std::vector<double> px, ty;
        for (Eigen::Index b = 0; b < y.rows(); ++b) {
          if (m(b, k) == 0.0) continue;
          px.push_back(out(b, k));
          ty.push_back(y(b, k));
        }
        if (px.size() < 2) continue;
        sum += Ccc(px, ty);
        ++dims;
      }
      r.metric[t.name] = dims > 0 ? sum / dims : 0.0;
    } else {
      r.metric_name[t.name] = "UAR";
      r.metric[t.name] = Uar(ArgmaxRows(out), whole.labels.at(t.name), t.dim);
    }
    try {
      ad::Var l = TaskLoss(t, ad::Constant(out), whole, ctx, Vector());
      r.task_loss[t.name] = l.scalar();
      losses.emplace_back(l);
    } catch (const DegenerateInput&) {
      r.task_loss[t.name] = std::numeric_limits<double>::quiet_NaN();
      losses.emplace_back(std::nullopt);
    }
  }
  r.total_loss = CombineMtl(losses, ad::Constant(model.log_vars().value()),
                            FactorsFor(model.tasks(), ctx.uncertainty),
                            TaskNames(model.tasks()))
                     .scalar();
  return r;
}

// ---------------------------------------------------------------------------
// Early stopping

/// Tracks the best (lowest) validation loss. An epoch counts as an
/// improvement only if strictly lower than every earlier epoch.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Returns true when training should stop after `epoch`.
  bool Update(int epoch, double loss) {
    if (!best_epoch_ || loss < best_loss_) {
      best_epoch_ = epoch;
      best_loss_ = loss;
      return false;
    }
    return epoch - *best_epoch_ >= patience_;
  }

  bool Improved(int epoch) const { return best_epoch_ && *best_epoch_ == epoch; }
  int best_epoch() const { return best_epoch_.value_or(-1); }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  std::optional<int> best_epoch_;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// History

struct EpochRecord {
  int epoch = 0;
  Stage stage = Stage::kHeadsOnly;
  double lr = 0;
  double train_total = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, double> train_task_loss;
  MetricsReport val;
  std::map<std::string, double> task_weights;  // exp(-s_i)
  bool early_stop = false;
  double wall_time_s = 0;

  /// Equality ignores wall time.
  bool SameAs(const EpochRecord& o) const {
    auto same = [](double a, double b) {
      return a == b || (std::isnan(a) && std::isnan(b));
    };
    auto same_map = [&](const std::map<std::string, double>& a,
                        const std::map<std::string, double>& b) {
      if (a.size() != b.size()) return false;
      for (const auto& [k, v] : a)
        if (!b.contains(k) || !same(v, b.at(k))) return false;
      return true;
    };
    return epoch == o.epoch && stage == o.stage && same(lr, o.lr) &&
           same(train_total, o.train_total) &&
           same_map(train_task_loss, o.train_task_loss) &&
           val.tasks == o.val.tasks && same_map(val.metric, o.val.metric) &&
           same_map(val.task_loss, o.val.task_loss) &&
           same(val.total_loss, o.val.total_loss) &&
           same_map(task_weights, o.task_weights) && early_stop == o.early_stop;
  }
};

struct TrainHistory {
  Stage stage = Stage::kHeadsOnly;
  std::vector<EpochRecord> epochs;  // epochs[0] is the pre-training evaluation
  int best_epoch = 0;
  bool stopped_early = false;

  const EpochRecord& best() const { return epochs.at(best_epoch); }

  bool SameAs(const TrainHistory& o) const {
    if (stage != o.stage || best_epoch != o.best_epoch ||
        stopped_early != o.stopped_early || epochs.size() != o.epochs.size())
      return false;
    for (std::size_t i = 0; i < epochs.size(); ++i)
      if (!epochs[i].SameAs(o.epochs[i])) return false;
    return true;
  }
};

namespace internal {

inline nlohmann::json FiniteOrNull(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline nlohmann::json MapToJson(const std::map<std::string, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m) j[k] = FiniteOrNull(v);
  return j;
}

inline std::map<std::string, double> MapFromJson(const nlohmann::json& j) {
  std::map<std::string, double> m;
  for (auto it = j.begin(); it != j.end(); ++it)
    m[it.key()] = it.value().is_null() ? std::numeric_limits<double>::quiet_NaN()
                                       : it.value().get<double>();
  return m;
}

}  // namespace internal

/// One JSON object per line, one line per epoch.
inline std::string HistoryToJsonLines(const TrainHistory& h) {
  std::string out;
  for (const auto& e : h.epochs) {
    nlohmann::json j;
    j["stage"] = ToString(e.stage);
    j["epoch"] = e.epoch;
    j["lr"] = e.lr;
    j["train_total"] = internal::FiniteOrNull(e.train_total);
    j["train_task_loss"] = internal::MapToJson(e.train_task_loss);
    j["val_total"] = internal::FiniteOrNull(e.val.total_loss);
    j["val_task_loss"] = internal::MapToJson(e.val.task_loss);
    j["val_metric"] = internal::MapToJson(e.val.metric);
    nlohmann::json names = nlohmann::json::object();
    for (const auto& [k, v] : e.val.metric_name) names[k] = v;
    j["val_metric_name"] = names;
    j["tasks"] = e.val.tasks;
    j["task_weights"] = internal::MapToJson(e.task_weights);
    j["early_stop"] = e.early_stop;
    j["best"] = e.epoch == h.best_epoch;
    j["wall_time_s"] = e.wall_time_s;
    out += j.dump() + "\n";
  }
  return out;
}

inline TrainHistory HistoryFromJsonLines(const std::string& text) {
  TrainHistory h;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    EpochRecord e;
    e.stage = j.at("stage") == "HeadsOnly" ? Stage::kHeadsOnly : Stage::kFineTune;
    e.epoch = j.at("epoch");
    e.lr = j.at("lr");
    e.train_total = j.at("train_total").is_null()
                        ? std::numeric_limits<double>::quiet_NaN()
                        : j.at("train_total").get<double>();
    e.train_task_loss = internal::MapFromJson(j.at("train_task_loss"));
    e.val.tasks = j.at("tasks").get<std::vector<std::string>>();
    e.val.metric = internal::MapFromJson(j.at("val_metric"));
    for (auto it = j.at("val_metric_name").begin();
         it != j.at("val_metric_name").end(); ++it)
      e.val.metric_name[it.key()] = it.value().get<std::string>();
    e.val.task_loss = internal::MapFromJson(j.at("val_task_loss"));
    e.val.total_loss = j.at("val_total").is_null()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : j.at("val_total").get<double>();
    e.task_weights = internal::MapFromJson(j.at("task_weights"));
    e.early_stop = j.at("early_stop");
    e.wall_time_s = j.at("wall_time_s");
    h.stage = e.stage;
    if (j.at("best").get<bool>()) h.best_epoch = e.epoch;
    if (e.early_stop) h.stopped_early = true;
    h.epochs.push_back(std::move(e));
  }
  return h;
}

inline void WriteHistory(const TrainHistory& h, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(StrCat("cannot open '", path.string(), "' for writing"));
  os << HistoryToJsonLines(h);
}

inline TrainHistory ReadHistory(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(StrCat("cannot open '", path.string(), "'"));
  std::stringstream ss;
  ss << is.rdbuf();
  return HistoryFromJsonLines(ss.str());
}

// ---------------------------------------------------------------------------
// Training loop

inline std::map<std::string, double> TaskWeightMap(const Model& model) {
  std::map<std::string, double> w;
  const auto eff = EffectiveTaskWeights(model.log_vars().value());
  for (std::size_t i = 0; i < model.tasks().size(); ++i)
    w[model.tasks().tasks[i].name] = eff[i];
  return w;
}

inline long long StepsPerEpoch(std::size_t n_train, int batch_size) {
  return static_cast<long long>((n_train + batch_size - 1) / batch_size);
}

/// Runs one stage and leaves the model at its best epoch.
inline TrainHistory TrainStage(Model& model,
                               const std::vector<LabeledSample>& train,
                               const std::vector<LabeledSample>& val,
                               const StageConfig& cfg, const ObjectiveContext& ctx,
                               std::uint64_t seed) {
  cfg.Validate();
  if (train.empty()) throw DataError("TrainStage: empty training split");
  if (val.empty()) throw DataError("TrainStage: empty validation split");
  using Clock = std::chrono::steady_clock;

  model.backbone().set_frozen(cfg.stage == Stage::kHeadsOnly);
  struct Unfreeze {
    Model& m;
    ~Unfreeze() { m.backbone().set_frozen(false); }
  } unfreeze{model};

  const auto params = model.trainable_parameters();
  AdamW opt(params, cfg.adam);
  const long long steps_per_epoch = StepsPerEpoch(train.size(), cfg.batch_size);
  const long long total_steps = cfg.max_epochs * steps_per_epoch;
  const long long warmup_steps = cfg.warmup_epochs * steps_per_epoch;
  auto lr_at = [&](long long step) {
    return cfg.lr_policy == LrPolicy::kFixed
               ? cfg.lr
               : LrSchedule(step, warmup_steps, total_steps, cfg.lr_max);
  };

  TrainHistory hist;
  hist.stage = cfg.stage;
  EarlyStopping stopper(cfg.patience);
  std::vector<Matrix> best = model.Snapshot();

  {
    const auto t0 = Clock::now();
    EpochRecord e0;
    e0.epoch = 0;
    e0.stage = cfg.stage;
    e0.lr = lr_at(0);
    e0.val = Evaluate(model, val, ctx, cfg.batch_size);
    e0.task_weights = TaskWeightMap(model);
    e0.wall_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
    stopper.Update(0, e0.val.total_loss);
    hist.epochs.push_back(std::move(e0));
  }

  long long step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = Clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = cfg.stage;
    std::map<std::string, double> loss_sum;
    std::map<std::string, int> loss_n;
    double total_sum = 0;
    int total_n = 0;
    for (const Batch& batch :
         MakeBatches(train, model.tasks(), cfg.batch_size,
                     MixSeed(seed, static_cast<std::uint64_t>(epoch)))) {
      const double lr = lr_at(step);
      rec.lr = lr;
      std::vector<std::optional<ad::Var>> task_losses;
      std::optional<ad::Var> objective;
      try {
        objective = BatchObjective(model, batch, ctx, &task_losses);
      } catch (const TrainingDiverged&) {
        model.Restore(best);
        throw;
      }
      ++step;
      if (!objective) continue;
      if (!std::isfinite(objective->scalar())) {
        model.Restore(best);
        throw TrainingDiverged(StrCat("non-finite total loss in epoch ", epoch));
      }
      model.ZeroGrad();
      ad::Backward(*objective);
      ClipGradNorm(params, cfg.grad_clip);
      opt.Step(lr);
      total_sum += objective->scalar();
      ++total_n;
      for (std::size_t i = 0; i < task_losses.size(); ++i) {
        if (!task_losses[i]) continue;
        const auto& name = model.tasks().tasks[i].name;
        loss_sum[name] += task_losses[i]->scalar();
        ++loss_n[name];
      }
    }
    model.ZeroGrad();
    if (total_n > 0) rec.train_total = total_sum / total_n;
    for (const auto& [k, v] : loss_sum) rec.train_task_loss[k] = v / loss_n[k];
    rec.val = Evaluate(model, val, ctx, cfg.batch_size);
    if (!std::isfinite(rec.val.total_loss)) {
      model.Restore(best);
      throw TrainingDiverged(StrCat("non-finite validation loss in epoch ", epoch));
    }
    rec.task_weights = TaskWeightMap(model);
    const bool stop = stopper.Update(epoch, rec.val.total_loss);
    if (stopper.Improved(epoch)) best = model.Snapshot();
    rec.early_stop = stop;
    rec.wall_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
    hist.epochs.push_back(std::move(rec));
    if (stop) {
      hist.stopped_early = true;
      break;
    }
  }
  hist.best_epoch = stopper.best_epoch();
  model.Restore(best);
  return hist;
}

struct TwoStageResult {
  TrainHistory stage1;
  TrainHistory stage2;
};

/// HeadsOnly, then FineTune from the stage-1 best parameters. Optimizer
/// moments start fresh in each stage.
inline TwoStageResult FitTwoStage(Model& model,
                                  const std::vector<LabeledSample>& train,
                                  const std::vector<LabeledSample>& val,
                                  const StageConfig& stage1,
                                  const StageConfig& stage2,
                                  const ObjectiveContext& ctx, std::uint64_t seed) {
  if (stage1.stage != Stage::kHeadsOnly || stage2.stage != Stage::kFineTune)
    throw ConfigError("FitTwoStage: expected HeadsOnly then FineTune configs");
  TwoStageResult r;
  r.stage1 = TrainStage(model, train, val, stage1, ctx, MixSeed(seed, 101));
  r.stage2 = TrainStage(model, train, val, stage2, ctx, MixSeed(seed, 202));
  return r;
}

}  // namespace vbmtl
