// vbmtl/task_schema.hpp

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

#pragma once

#include "vbmtl/common.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace vbmtl {

// Canonical task names, in report column order.
inline constexpr std::string_view kHigh = "High";
inline constexpr std::string_view kCulture = "Culture";
inline constexpr std::string_view kTwo = "Two";
inline constexpr std::string_view kType = "Type";
inline constexpr std::string_view kCountry = "Country";

inline constexpr int kNumEmotions = 10;
inline constexpr int kNumCountries = 4;
inline constexpr int kNumTypes = 8;

enum class TaskKind { kRegression, kClassification };
enum class LossKind { kCCC, kMSE, kMAE, kWeightedCE };
enum class OutputActivation { kSigmoid, kSoftmax, kLinearClamp01 };
enum class RoutingStage { kIntermediate, kFinal };
enum class RoutingPreset { kTwoThree, kOneFour, kZeroFive };

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::kRegression;
  int dim = 1;
  LossKind loss = LossKind::kCCC;
  OutputActivation activation = OutputActivation::kSigmoid;
  RoutingStage stage = RoutingStage::kFinal;

  bool is_regression() const { return kind == TaskKind::kRegression; }
  bool operator==(const TaskSpec&) const = default;
};

struct TaskSet {
  std::vector<TaskSpec> tasks;
  RoutingPreset routing = RoutingPreset::kZeroFive;

  const TaskSpec* Find(std::string_view name) const {
    for (const auto& t : tasks)
      if (t.name == name) return &t;
    return nullptr;
  }
  bool Has(std::string_view name) const { return Find(name) != nullptr; }
  std::size_t size() const { return tasks.size(); }
  int IndexOf(std::string_view name) const {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].name == name) return static_cast<int>(i);
    return -1;
  }
  bool operator==(const TaskSet&) const = default;
};

struct ClassWeights {
  std::string task;
  std::vector<double> weights;
};

// --- string conversions --------------------------------------------------

inline std::string ToString(RoutingPreset p) {
  switch (p) {
    case RoutingPreset::kTwoThree: return "TwoThree";
    case RoutingPreset::kOneFour: return "OneFour";
    case RoutingPreset::kZeroFive: return "ZeroFive";
  }
  return "?";
}

/// Accepts the long names and the table labels ("2/3", "1/4", "0/5").
inline RoutingPreset ParseRoutingPreset(std::string_view s) {
  if (s == "TwoThree" || s == "2/3") return RoutingPreset::kTwoThree;
  if (s == "OneFour" || s == "1/4") return RoutingPreset::kOneFour;
  if (s == "ZeroFive" || s == "0/5") return RoutingPreset::kZeroFive;
  throw ConfigError(StrCat("unknown routing preset '", s, "'"));
}

inline std::string ToString(LossKind k) {
  switch (k) {
    case LossKind::kCCC: return "CCC";
    case LossKind::kMSE: return "MSE";
    case LossKind::kMAE: return "MAE";
    case LossKind::kWeightedCE: return "WeightedCE";
  }
  return "?";
}

inline LossKind ParseLossKind(std::string_view s) {
  if (s == "CCC") return LossKind::kCCC;
  if (s == "MSE") return LossKind::kMSE;
  if (s == "MAE") return LossKind::kMAE;
  if (s == "WeightedCE") return LossKind::kWeightedCE;
  throw ConfigError(StrCat("unknown loss kind '", s, "'"));
}

inline std::string ToString(OutputActivation a) {
  switch (a) {
    case OutputActivation::kSigmoid: return "Sigmoid";
    case OutputActivation::kSoftmax: return "Softmax";
    case OutputActivation::kLinearClamp01: return "LinearClamp01";
  }
  return "?";
}

inline OutputActivation ParseActivation(std::string_view s) {
  if (s == "Sigmoid") return OutputActivation::kSigmoid;
  if (s == "Softmax") return OutputActivation::kSoftmax;
  if (s == "LinearClamp01") return OutputActivation::kLinearClamp01;
  throw ConfigError(StrCat("unknown activation '", s, "'"));
}

// --- operations ----------------------------------------------------------

inline const std::set<std::string>& KnownTaskVariants() {
  static const std::set<std::string> kFlags = {"-Two", "-Country", "MSE",
                                               "MAE", "-SM"};
  return kFlags;
}

/// The five default tasks with routing and loss rewrites applied.
inline TaskSet BuildTaskSet(RoutingPreset preset,
                            const std::set<std::string>& variant_flags) {
  for (const auto& f : variant_flags) {
    if (!KnownTaskVariants().contains(f))
      throw ConfigError(StrCat("unknown task variant flag '", f, "'"));
  }
  if (variant_flags.contains("MSE") && variant_flags.contains("MAE"))
    throw ConfigError("variant flags 'MSE' and 'MAE' are mutually exclusive");

  const LossKind reg_loss = variant_flags.contains("MSE")   ? LossKind::kMSE
                            : variant_flags.contains("MAE") ? LossKind::kMAE
                                                            : LossKind::kCCC;
  const OutputActivation emo_act = variant_flags.contains("-SM")
                                       ? OutputActivation::kLinearClamp01
                                       : OutputActivation::kSigmoid;
  auto stage_of = [preset](std::string_view name) {
    const bool inter =
        (preset == RoutingPreset::kTwoThree &&
         (name == kCountry || name == kType)) ||
        (preset == RoutingPreset::kOneFour && name == kCountry);
    return inter ? RoutingStage::kIntermediate : RoutingStage::kFinal;
  };

  TaskSet set;
  set.routing = preset;
  auto add = [&](std::string_view name, TaskKind kind, int dim, LossKind loss,
                 OutputActivation act) {
    set.tasks.push_back(
        TaskSpec{std::string(name), kind, dim, loss, act, stage_of(name)});
  };
  add(kHigh, TaskKind::kRegression, kNumEmotions, reg_loss, emo_act);
  add(kCulture, TaskKind::kRegression, kNumEmotions * kNumCountries, reg_loss,
      emo_act);
  if (!variant_flags.contains("-Two"))
    add(kTwo, TaskKind::kRegression, 2, reg_loss, OutputActivation::kSigmoid);
  add(kType, TaskKind::kClassification, kNumTypes, LossKind::kWeightedCE,
      OutputActivation::kSoftmax);
  if (!variant_flags.contains("-Country"))
    add(kCountry, TaskKind::kClassification, kNumCountries,
        LossKind::kWeightedCE, OutputActivation::kSoftmax);
  return set;
}

inline TaskSet BuildTaskSet(std::string_view preset_name,
                            const std::set<std::string>& variant_flags) {
  return BuildTaskSet(ParseRoutingPreset(preset_name), variant_flags);
}

/// Checks the structural invariants of a hand-built TaskSet.
inline void ValidateTaskSet(const TaskSet& set) {
  std::set<std::string> names;
  for (const auto& t : set.tasks) {
    if (!names.insert(t.name).second)
      throw ConfigError(StrCat("duplicate task name '", t.name, "'"));
    if (t.dim <= 0)
      throw ConfigError(StrCat("task '", t.name, "' has non-positive dim"));
    if (t.kind == TaskKind::kClassification) {
      if (t.activation != OutputActivation::kSoftmax ||
          t.loss != LossKind::kWeightedCE)
        throw ConfigError(StrCat("classification task '", t.name,
                                 "' must use Softmax + WeightedCE"));
    } else if (t.activation == OutputActivation::kSoftmax ||
               t.loss == LossKind::kWeightedCE) {
      throw ConfigError(StrCat("regression task '", t.name,
                               "' cannot use Softmax or WeightedCE"));
    }
  }
}

/// Inverse-frequency weights N / (K * n_c); empty classes get 0.
inline ClassWeights ComputeClassWeights(std::span<const long long> counts,
                                        std::string task = {}) {
  long double total = 0;
  int present = 0;
  for (long long n : counts) {
    if (n < 0) throw DataError("ComputeClassWeights: negative count");
    total += n;
    if (n > 0) ++present;
  }
  if (present == 0)
    throw DataError(StrCat("ComputeClassWeights: empty split",
                           task.empty() ? "" : " for task " + task));
  ClassWeights out{std::move(task), {}};
  out.weights.reserve(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      LogWarning(StrCat("class ", c, out.task.empty() ? "" : " of " + out.task,
                        " has no training samples; weight set to 0"));
      out.weights.push_back(0.0);
    } else {
      out.weights.push_back(static_cast<double>(
          total / (static_cast<long double>(present) * counts[c])));
    }
  }
  return out;
}

inline ClassWeights ComputeClassWeights(std::initializer_list<long long> counts) {
  std::vector<long long> v(counts);
  return ComputeClassWeights(std::span<const long long>(v));
}

// --- labels --------------------------------------------------------------

/// Target for one task of one sample. Regression tasks fill `values` (and
/// optionally `observed`, one flag per dimension; empty means all observed).
/// Classification tasks fill `label`.
struct TaskTarget {
  std::vector<double> values;
  std::vector<std::uint8_t> observed;
  int label = -1;

  bool IsObserved(std::size_t k) const {
    return observed.empty() || observed[k] != 0;
  }
  bool operator==(const TaskTarget&) const = default;
};

using TargetMap = std::map<std::string, TaskTarget>;

/// Culture dimensions are laid out country-major: index = country * 10 +
/// emotion. Only the rater country's block carries ground truth.
inline std::vector<std::uint8_t> CultureMaskForCountry(int country) {
  std::vector<std::uint8_t> mask(kNumEmotions * kNumCountries, 0);
  for (int e = 0; e < kNumEmotions; ++e) mask[country * kNumEmotions + e] = 1;
  return mask;
}

struct LabelViolation {
  std::string task;
  std::string message;
};

struct ValidationResult {
  std::vector<LabelViolation> violations;
  bool ok() const { return violations.empty(); }
  std::string Summary() const {
    std::string s;
    for (const auto& v : violations) s += v.task + ": " + v.message + "\n";
    return s;
  }
};

inline ValidationResult ValidateLabels(const TargetMap& labels,
                                       const TaskSet& set) {
  ValidationResult r;
  auto fail = [&r](const std::string& task, std::string msg) {
    r.violations.push_back({task, std::move(msg)});
  };
  for (const auto& t : set.tasks) {
    auto it = labels.find(t.name);
    if (it == labels.end()) {
      fail(t.name, "missing target");
      continue;
    }
    const TaskTarget& tgt = it->second;
    if (t.is_regression()) {
      if (static_cast<int>(tgt.values.size()) != t.dim) {
        fail(t.name, StrCat("expected vector of length ", t.dim, ", found ",
                            tgt.values.size()));
        continue;
      }
      if (!tgt.observed.empty() &&
          static_cast<int>(tgt.observed.size()) != t.dim) {
        fail(t.name, StrCat("observation mask has length ",
                            tgt.observed.size(), ", expected ", t.dim));
        continue;
      }
      bool any = false;
      for (std::size_t k = 0; k < tgt.values.size(); ++k) {
        if (!tgt.IsObserved(k)) continue;
        any = true;
        const double v = tgt.values[k];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
          fail(t.name, StrCat("value ", v, " at index ", k,
                              " outside [0, 1]"));
      }
      if (!any) fail(t.name, "no observed dimensions");
    } else {
      if (tgt.label < 0 || tgt.label >= t.dim)
        fail(t.name, StrCat("class index ", tgt.label, " out of range [0, ",
                            t.dim, ")"));
    }
  }
  return r;
}

}  // namespace vbmtl
