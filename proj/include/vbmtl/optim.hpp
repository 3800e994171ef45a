// vbmtl/optim.hpp

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

#include "vbmtl/model.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace vbmtl {

/// Linear warmup from 0 to lr_max over warmup_steps, then half-cosine decay
/// to 0 at total_steps.
inline double LrSchedule(long long step, long long warmup_steps,
                         long long total_steps, double lr_max) {
  if (warmup_steps < 1 || total_steps <= warmup_steps)
    throw ConfigError(StrCat("LrSchedule: need 1 <= warmup_steps (",
                             warmup_steps, ") < total_steps (", total_steps, ")"));
  if (step < 0 || step > total_steps)
    throw ConfigError(StrCat("LrSchedule: step ", step, " outside [0, ",
                             total_steps, "]"));
  if (!(lr_max > 0)) throw ConfigError("LrSchedule: lr_max must be positive");
  if (step < warmup_steps)
    return lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  bool operator==(const AdamWConfig&) const = default;
};

/// Adam with decoupled weight decay. Decay is scaled by the step's learning
/// rate, so a step with lr = 0 leaves every parameter untouched.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (const Parameter* p : params_) {
      m_.push_back(Matrix::Zero(p->var.rows(), p->var.cols()));
      v_.push_back(Matrix::Zero(p->var.rows(), p->var.cols()));
    }
  }

  void Step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const Matrix g = params_[i]->var.GradOrZero();
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
      Matrix& p = params_[i]->var.mutable_value();
      p -= lr * cfg_.weight_decay * p;
      p.array() -= lr * (m_[i].array() / bc1) /
                   ((v_[i].array() / bc2).sqrt() + cfg_.eps);
    }
  }

  long long steps() const { return t_; }
  const std::vector<Parameter*>& parameters() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig cfg_;
  std::vector<Matrix> m_, v_;
  long long t_ = 0;
};

/// Rescales gradients so their global L2 norm is at most max_norm. Returns
/// the norm before clipping.
inline double ClipGradNorm(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0;
  for (const Parameter* p : params)
    if (p->var.grad().size() != 0) sq += p->var.grad().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Parameter* p : params)
      if (p->var.grad().size() != 0) p->var.node()->grad *= scale;
  }
  return norm;
}

}  // namespace vbmtl
