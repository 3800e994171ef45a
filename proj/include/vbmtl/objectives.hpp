// vbmtl/objectives.hpp

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
 * Metrics and losses.
 *
 * Metrics (Ccc, Uar) are plain functions on values. Losses are graph ops
 * with hand-written backward passes; each also has a value-only overload.
 *
 * All regression losses take an optional B x K observation mask (used by the
 * Culture task, where only the rater country's block is labelled) and an
 * optional B-vector of sample weights. Empty matrices/vectors mean "all
 * ones". With unit sample weights every loss reduces to its plain form.
 */

#pragma once

#include "vbmtl/autodiff.hpp"
#include "vbmtl/task_schema.hpp"

#include <map>
#include <optional>
#include <span>
#include <vector>

namespace vbmtl {

inline constexpr double kCccDenominatorFloor = 1e-12;
inline constexpr double kProbabilityFloor = 1e-12;

/// Concordance correlation coefficient with population moments.
inline double Ccc(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size())
    throw DimensionError("Ccc: length mismatch");
  if (pred.size() < 2) throw DegenerateInput("Ccc: need at least 2 values");
  const double n = static_cast<double>(pred.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mx += pred[i];
    my += target[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i] - mx, dy = target[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  sxx /= n;
  syy /= n;
  sxy /= n;
  const double denom = sxx + syy + (mx - my) * (mx - my);
  if (denom < kCccDenominatorFloor) return 0.0;
  return 2.0 * sxy / denom;
}

inline double Ccc(const Vector& pred, const Vector& target) {
  return Ccc(std::span<const double>(pred.data(), pred.size()),
             std::span<const double>(target.data(), target.size()));
}

/// Unweighted average recall over the classes present in `target`.
inline double Uar(std::span<const int> pred, std::span<const int> target,
                  int num_classes) {
  if (pred.size() != target.size()) throw DimensionError("Uar: length mismatch");
  if (target.empty()) throw DegenerateInput("Uar: empty input");
  std::vector<long long> hits(num_classes, 0), totals(num_classes, 0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] < 0 || target[i] >= num_classes || pred[i] < 0 ||
        pred[i] >= num_classes)
      throw DataError(StrCat("Uar: class index out of range at ", i));
    ++totals[target[i]];
    if (pred[i] == target[i]) ++hits[target[i]];
  }
  double sum = 0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (totals[c] == 0) continue;
    sum += static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
    ++present;
  }
  return sum / present;
}

/// Row-wise argmax; ties resolve to the lowest index.
inline std::vector<int> ArgmaxRows(const Matrix& m) {
  std::vector<int> out(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c)
      if (m(r, c) > m(r, best)) best = static_cast<int>(c);
    out[r] = best;
  }
  return out;
}

namespace internal {

inline Matrix OnesIfEmpty(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.size() == 0) return Matrix::Ones(rows, cols);
  if (m.rows() != rows || m.cols() != cols)
    throw DimensionError(StrCat("mask shape ", m.rows(), "x", m.cols(),
                                ", expected ", rows, "x", cols));
  return m;
}

inline Vector OnesIfEmpty(const Vector& v, Eigen::Index rows) {
  if (v.size() == 0) return Vector::Ones(rows);
  if (v.size() != rows)
    throw DimensionError(StrCat("sample weight length ", v.size(),
                                ", expected ", rows));
  return v;
}

}  // namespace internal

/// 1 - mean over dimensions of the per-dimension CCC, computed over the
/// batch rows where the mask is set (weighted moments when sample weights
/// are given). Dimensions with fewer than two observed rows are skipped.
inline ad::Var CccLoss(const ad::Var& pred, const Matrix& target,
                       const Matrix& dim_mask = {},
                       const Vector& sample_weights = {}) {
  ad::internal::CheckSameShape(pred.value(), target, "CccLoss");
  const Eigen::Index rows = pred.rows(), dims = pred.cols();
  if (rows < 2) throw DegenerateInput("CccLoss: need a batch of at least 2");
  const Matrix mask = internal::OnesIfEmpty(dim_mask, rows, dims);
  const Vector sw = internal::OnesIfEmpty(sample_weights, rows);
  const Matrix& x = pred.value();

  // Per-dimension gradient of CCC w.r.t. x, scaled later by -1/K.
  Matrix dccc = Matrix::Zero(rows, dims);
  double ccc_sum = 0;
  int used = 0;
  for (Eigen::Index k = 0; k < dims; ++k) {
    int count = 0;
    double wsum = 0, mx = 0, my = 0;
    for (Eigen::Index b = 0; b < rows; ++b) {
      if (mask(b, k) == 0.0) continue;
      ++count;
      const double w = sw(b);
      wsum += w;
      mx += w * x(b, k);
      my += w * target(b, k);
    }
    if (count < 2 || !(wsum > 0)) continue;
    mx /= wsum;
    my /= wsum;
    double sxx = 0, syy = 0, sxy = 0;
    for (Eigen::Index b = 0; b < rows; ++b) {
      if (mask(b, k) == 0.0) continue;
      const double w = sw(b), dx = x(b, k) - mx, dy = target(b, k) - my;
      sxx += w * dx * dx;
      syy += w * dy * dy;
      sxy += w * dx * dy;
    }
    sxx /= wsum;
    syy /= wsum;
    sxy /= wsum;
    const double gap = mx - my;
    const double denom = sxx + syy + gap * gap;
    ++used;
    if (denom < kCccDenominatorFloor) continue;  // contributes ccc = 0
    const double num = 2.0 * sxy;
    ccc_sum += num / denom;
    for (Eigen::Index b = 0; b < rows; ++b) {
      if (mask(b, k) == 0.0) continue;
      const double a = sw(b) / wsum;
      const double dnum = 2.0 * a * (target(b, k) - my);
      const double dden = 2.0 * a * (x(b, k) - mx) + 2.0 * gap * a;
      dccc(b, k) = (dnum * denom - num * dden) / (denom * denom);
    }
  }
  if (used == 0)
    throw DegenerateInput("CccLoss: every dimension has fewer than 2 rows");
  Matrix value(1, 1);
  value(0, 0) = 1.0 - ccc_sum / used;
  Matrix grad = dccc * (-1.0 / used);
  auto pp = pred.node();
  return ad::internal::MakeResult(std::move(value), {pred},
                              [pp, grad](const ad::Node& self) {
                                pp->Accumulate(grad * self.grad(0, 0));
                              });
}

namespace internal {

/// Shared body for MSE and MAE: weighted mean of f(pred - target) over the
/// observed entries.
template <typename F, typename DF>
ad::Var ElementwiseLoss(const ad::Var& pred, const Matrix& target,
                        const Matrix& dim_mask, const Vector& sample_weights,
                        const char* name, F f, DF df) {
  ad::internal::CheckSameShape(pred.value(), target, name);
  const Eigen::Index rows = pred.rows(), dims = pred.cols();
  const Matrix mask = OnesIfEmpty(dim_mask, rows, dims);
  const Vector sw = OnesIfEmpty(sample_weights, rows);
  const Matrix weight = sw.asDiagonal() * mask;
  const double total = weight.sum();
  if (!(total > 0))
    throw DegenerateInput(StrCat(name, ": no observed entries"));
  const Matrix diff = pred.value() - target;
  Matrix value(1, 1);
  value(0, 0) = weight.cwiseProduct(diff.unaryExpr(f)).sum() / total;
  Matrix grad = weight.cwiseProduct(diff.unaryExpr(df)) / total;
  auto pp = pred.node();
  return ad::internal::MakeResult(std::move(value), {pred}, [pp, grad](const ad::Node& self) {
    pp->Accumulate(grad * self.grad(0, 0));
  });
}

}  // namespace internal

inline ad::Var MseLoss(const ad::Var& pred, const Matrix& target,
                       const Matrix& dim_mask = {},
                       const Vector& sample_weights = {}) {
  return internal::ElementwiseLoss(
      pred, target, dim_mask, sample_weights, "MseLoss",
      [](double d) { return d * d; }, [](double d) { return 2.0 * d; });
}

inline ad::Var MaeLoss(const ad::Var& pred, const Matrix& target,
                       const Matrix& dim_mask = {},
                       const Vector& sample_weights = {}) {
  return internal::ElementwiseLoss(
      pred, target, dim_mask, sample_weights, "MaeLoss",
      [](double d) { return std::abs(d); },
      [](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); });
}

/// sum_b u_b w_{y_b} (-log p_b[y_b]) / sum_b u_b w_{y_b} on probabilities.
inline ad::Var WeightedCrossEntropy(const ad::Var& probs,
                                    std::span<const int> targets,
                                    std::span<const double> class_weights,
                                    const Vector& sample_weights = {}) {
  const Eigen::Index rows = probs.rows(), classes = probs.cols();
  if (static_cast<Eigen::Index>(targets.size()) != rows)
    throw DimensionError("WeightedCrossEntropy: target count mismatch");
  if (static_cast<Eigen::Index>(class_weights.size()) != classes)
    throw DimensionError("WeightedCrossEntropy: class weight count mismatch");
  const Vector sw = internal::OnesIfEmpty(sample_weights, rows);
  const Matrix& p = probs.value();
  for (Eigen::Index b = 0; b < rows; ++b) {
    if (std::abs(p.row(b).sum() - 1.0) > 1e-6)
      throw DataError(StrCat("WeightedCrossEntropy: row ", b,
                             " does not sum to 1"));
  }
  double total = 0, acc = 0;
  Matrix grad = Matrix::Zero(rows, classes);
  for (Eigen::Index b = 0; b < rows; ++b) {
    const int y = targets[b];
    if (y < 0 || y >= classes)
      throw DataError(StrCat("WeightedCrossEntropy: class ", y, " out of range"));
    if (sw(b) < 0 || class_weights[y] < 0)
      throw DataError("WeightedCrossEntropy: negative weight");
    const double w = sw(b) * class_weights[y];
    total += w;
    const double py = p(b, y);
    acc += w * -std::log(std::max(py, kProbabilityFloor));
    if (py > kProbabilityFloor) grad(b, y) = -w / py;
  }
  if (!(total > 0))
    throw DegenerateInput("WeightedCrossEntropy: zero total weight");
  Matrix value(1, 1);
  value(0, 0) = acc / total;
  grad /= total;
  auto pp = probs.node();
  return ad::internal::MakeResult(std::move(value), {probs},
                              [pp, grad](const ad::Node& self) {
                                pp->Accumulate(grad * self.grad(0, 0));
                              });
}

// Value-only conveniences.
inline double CccLossValue(const Matrix& pred, const Matrix& target,
                           const Matrix& dim_mask = {}) {
  return CccLoss(ad::Constant(pred), target, dim_mask).scalar();
}
inline double MseLossValue(const Matrix& pred, const Matrix& target,
                           const Matrix& dim_mask = {}) {
  return MseLoss(ad::Constant(pred), target, dim_mask).scalar();
}
inline double MaeLossValue(const Matrix& pred, const Matrix& target,
                           const Matrix& dim_mask = {}) {
  return MaeLoss(ad::Constant(pred), target, dim_mask).scalar();
}
inline double WeightedCrossEntropyValue(const Matrix& probs,
                                        std::span<const int> targets,
                                        std::span<const double> class_weights,
                                        const Vector& sample_weights = {}) {
  return WeightedCrossEntropy(ad::Constant(probs), targets, class_weights,
                              sample_weights)
      .scalar();
}

// ---------------------------------------------------------------------------
// Learned-uncertainty combination

/// `kSimple`: total = sum_i exp(-s_i) L_i + s_i for every task.
/// `kHalfRegression`: regression tasks use 0.5 exp(-s_i) L_i + 0.5 s_i and
/// classification tasks exp(-s_i) L_i + 0.5 s_i.
enum class UncertaintyForm { kSimple, kHalfRegression };

inline std::string ToString(UncertaintyForm f) {
  return f == UncertaintyForm::kSimple ? "simple" : "half_regression";
}

inline UncertaintyForm ParseUncertaintyForm(std::string_view s) {
  if (s == "simple") return UncertaintyForm::kSimple;
  if (s == "half_regression") return UncertaintyForm::kHalfRegression;
  throw ConfigError(StrCat("unknown uncertainty form '", s, "'"));
}

struct UncertaintyFactors {
  double loss = 1.0;
  double penalty = 1.0;
};

inline UncertaintyFactors FactorsFor(UncertaintyForm form, TaskKind kind) {
  if (form == UncertaintyForm::kSimple) return {1.0, 1.0};
  return kind == TaskKind::kRegression ? UncertaintyFactors{0.5, 0.5}
                                       : UncertaintyFactors{1.0, 0.5};
}

/// Combines per-task losses with learnable log-variances `log_vars`
/// (1 x n). A missing entry (nullopt) skips that task entirely, loss and
/// penalty both; the trainer uses this for tasks that are undefined on a
/// particular batch.
inline ad::Var CombineMtl(const std::vector<std::optional<ad::Var>>& losses,
                          const ad::Var& log_vars,
                          const std::vector<UncertaintyFactors>& factors,
                          const std::vector<std::string>& task_names = {}) {
  const auto n = static_cast<Eigen::Index>(losses.size());
  if (log_vars.rows() != 1 || log_vars.cols() != n ||
      static_cast<Eigen::Index>(factors.size()) != n)
    throw DimensionError("CombineMtl: one loss, log-variance and factor per task");
  double total = 0;
  std::vector<ad::Var> inputs{log_vars};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!losses[i]) continue;
    const double l = losses[i]->scalar();
    const double s = log_vars.value()(0, i);
    if (!std::isfinite(l) || !std::isfinite(s)) {
      const std::string name =
          i < static_cast<Eigen::Index>(task_names.size()) ? task_names[i]
                                                           : StrCat("#", i);
      throw TrainingDiverged(StrCat("non-finite loss for task ", name));
    }
    total += factors[i].loss * std::exp(-s) * l + factors[i].penalty * s;
    inputs.push_back(*losses[i]);
  }
  Matrix value(1, 1);
  value(0, 0) = total;
  std::vector<std::shared_ptr<ad::Node>> loss_nodes(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (losses[i]) loss_nodes[i] = losses[i]->node();
  auto ps = log_vars.node();
  return ad::internal::MakeResult(
      std::move(value), std::move(inputs),
      [ps, loss_nodes, factors](const ad::Node& self) {
        const double g = self.grad(0, 0);
        Matrix gs = Matrix::Zero(1, ps->value.cols());
        for (std::size_t i = 0; i < loss_nodes.size(); ++i) {
          if (!loss_nodes[i]) continue;
          const double s = ps->value(0, i);
          const double l = loss_nodes[i]->value(0, 0);
          const double w = factors[i].loss * std::exp(-s);
          gs(0, i) = g * (-w * l + factors[i].penalty);
          ad::internal::Push(loss_nodes[i], Matrix::Constant(1, 1, g * w));
        }
        ad::internal::Push(ps, gs);
      });
}

/// Value-only combination with the simple form.
inline double CombineMtlValue(std::span<const double> losses,
                              std::span<const double> log_vars) {
  if (losses.size() != log_vars.size())
    throw DimensionError("CombineMtlValue: size mismatch");
  std::vector<std::optional<ad::Var>> ls;
  Matrix s(1, static_cast<Eigen::Index>(log_vars.size()));
  for (std::size_t i = 0; i < losses.size(); ++i) {
    ls.emplace_back(ad::Scalar(losses[i]));
    s(0, static_cast<Eigen::Index>(i)) = log_vars[i];
  }
  return CombineMtl(ls, ad::Constant(s),
                    std::vector<UncertaintyFactors>(losses.size()))
      .scalar();
}

/// Effective task weights exp(-s_i) as reported in training history.
inline std::vector<double> EffectiveTaskWeights(const Matrix& log_vars) {
  std::vector<double> w;
  for (Eigen::Index i = 0; i < log_vars.cols(); ++i)
    w.push_back(std::exp(-log_vars(0, i)));
  return w;
}

// ---------------------------------------------------------------------------
// Reports

/// Per-task headline metric (CCC for regression, UAR for classification)
/// plus per-task losses and the combined loss.
struct MetricsReport {
  std::vector<std::string> tasks;          // active tasks in declaration order
  std::map<std::string, double> metric;    // CCC or UAR
  std::map<std::string, std::string> metric_name;
  std::map<std::string, double> task_loss;
  double total_loss = 0;

  bool operator==(const MetricsReport&) const = default;

  /// Flat `key=value` block, one entry per line.
  std::string ToKeyValue() const {
    std::ostringstream os;
    os << std::setprecision(17);
    for (const auto& t : tasks) {
      os << "metric." << t << "." << metric_name.at(t) << "=" << metric.at(t)
         << '\n';
    }
    for (const auto& t : tasks) os << "loss." << t << "=" << task_loss.at(t) << '\n';
    os << "loss.total=" << total_loss << '\n';
    return os.str();
  }
};

}  // namespace vbmtl
