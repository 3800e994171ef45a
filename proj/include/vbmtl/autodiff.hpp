// vbmtl/autodiff.hpp

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
 * Minimal reverse-mode differentiation over dense double matrices.
 *
 * A Var is a handle to a graph node. Ops build new nodes whose backward
 * closure pushes the node's gradient into its parents. Nodes that do not
 * depend on any trainable leaf are created without parents, so a frozen
 * sub-graph costs a plain forward evaluation only.
 *
 * Sequences of frames are carried as stacked matrices: a B x T x D tensor is
 * a (B*T) x D matrix whose row b*T + t holds frame t of sample b.
 */

#pragma once

#include "vbmtl/common.hpp"

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

namespace vbmtl::ad {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backward;

  void Accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }
  bool defined() const { return static_cast<bool>(node_); }

  void ZeroGrad() { node_->grad.resize(0, 0); }

  /// Gradient, or zeros of the value's shape when nothing flowed in.
  Matrix GradOrZero() const {
    if (node_->grad.size() == 0)
      return Matrix::Zero(node_->value.rows(), node_->value.cols());
    return node_->grad;
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

inline Var Constant(Matrix value) { return Var(std::move(value), false); }

inline Var Scalar(double v) { return Constant(Matrix::Constant(1, 1, v)); }

namespace internal {

inline void Push(const std::shared_ptr<Node>& p, const Matrix& g) {
  if (p->requires_grad) p->Accumulate(g);
}

inline Var MakeResult(Matrix value, std::vector<Var> inputs,
                      std::function<void(const Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& in : inputs) {
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (const Var& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

inline void CheckSameShape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(StrCat(op, ": shape mismatch ", a.rows(), "x",
                                a.cols(), " vs ", b.rows(), "x", b.cols()));
  }
}

}  // namespace internal

/// Reverse sweep from a 1x1 root. Leaf gradients accumulate; call ZeroGrad
/// on leaves between steps.
inline void Backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1)
    throw DimensionError("Backward: root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->Accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var MatMul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    throw DimensionError(StrCat("MatMul: inner dimensions ", a.cols(), " vs ",
                                b.rows()));
  auto pa = a.node(), pb = b.node();
  return internal::MakeResult(a.value() * b.value(), {a, b},
                              [pa, pb](const Node& self) {
                                if (pa->requires_grad)
                                  pa->Accumulate(self.grad *
                                                 pb->value.transpose());
                                if (pb->requires_grad)
                                  pb->Accumulate(pa->value.transpose() *
                                                 self.grad);
                              });
}

inline Var Add(const Var& a, const Var& b) {
  internal::CheckSameShape(a.value(), b.value(), "Add");
  auto pa = a.node(), pb = b.node();
  return internal::MakeResult(a.value() + b.value(), {a, b},
                              [pa, pb](const Node& self) {
                                internal::Push(pa, self.grad);
                                internal::Push(pb, self.grad);
                              });
}

/// a + broadcast(bias) where bias is 1 x cols.
inline Var AddRow(const Var& a, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw DimensionError("AddRow: bias must be 1 x cols");
  auto pa = a.node(), pb = bias.node();
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return internal::MakeResult(std::move(out), {a, bias},
                              [pa, pb](const Node& self) {
                                internal::Push(pa, self.grad);
                                if (pb->requires_grad)
                                  pb->Accumulate(self.grad.colwise().sum());
                              });
}

/// Affine map x W + b.
inline Var Affine(const Var& x, const Var& w, const Var& b) {
  return AddRow(MatMul(x, w), b);
}

// ---------------------------------------------------------------------------
// Element-wise activations

inline double GeluValue(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

inline double GeluDerivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf =
      std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline Var Gelu(const Var& a) {
  auto pa = a.node();
  Matrix out = a.value().unaryExpr([](double x) { return GeluValue(x); });
  return internal::MakeResult(std::move(out), {a}, [pa](const Node& self) {
    pa->Accumulate(self.grad.cwiseProduct(
        pa->value.unaryExpr([](double x) { return GeluDerivative(x); })));
  });
}

inline Var Sigmoid(const Var& a) {
  auto pa = a.node();
  Matrix out = a.value().unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
  });
  return internal::MakeResult(out, {a}, [pa, out](const Node& self) {
    pa->Accumulate(self.grad.cwiseProduct(
        out.cwiseProduct((1.0 - out.array()).matrix())));
  });
}

/// min(max(x, 0), 1); derivative 1 on the open interval, 0 elsewhere.
inline Var Clamp01(const Var& a) {
  auto pa = a.node();
  Matrix out = a.value().cwiseMax(0.0).cwiseMin(1.0);
  return internal::MakeResult(std::move(out), {a}, [pa](const Node& self) {
    Matrix pass = pa->value.unaryExpr(
        [](double x) { return (x > 0.0 && x < 1.0) ? 1.0 : 0.0; });
    pa->Accumulate(self.grad.cwiseProduct(pass));
  });
}

/// Row-wise softmax.
inline Var SoftmaxRows(const Var& a) {
  auto pa = a.node();
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double mx = a.value().row(r).maxCoeff();
    out.row(r) = (a.value().row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return internal::MakeResult(out, {a}, [pa, out](const Node& self) {
    Vector dots = self.grad.cwiseProduct(out).rowwise().sum();
    Matrix g = self.grad;
    g.colwise() -= dots;
    pa->Accumulate(g.cwiseProduct(out));
  });
}

// ---------------------------------------------------------------------------
// Structural ops

/// Stops gradient flow; the value is shared.
inline Var Detach(const Var& a) { return Constant(a.value()); }

inline Var ConcatCols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("ConcatCols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw DimensionError("ConcatCols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<Eigen::Index> offsets;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(c);
    c += p.cols();
  }
  return internal::MakeResult(
      std::move(out), parts, [nodes, offsets](const Node& self) {
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          if (nodes[i]->requires_grad)
            nodes[i]->Accumulate(
                self.grad.middleCols(offsets[i], nodes[i]->value.cols()));
        }
      });
}

/// Multiplies row r by row_mask(r); row_mask is a constant.
inline Var MaskRows(const Var& a, const Vector& row_mask) {
  if (row_mask.size() != a.rows()) throw DimensionError("MaskRows: size");
  auto pa = a.node();
  Matrix out = row_mask.asDiagonal() * a.value();
  return internal::MakeResult(std::move(out), {a},
                              [pa, row_mask](const Node& self) {
                                pa->Accumulate(row_mask.asDiagonal() *
                                               self.grad);
                              });
}

/// Within each block of `block_len` consecutive rows, out[t] = a[t + offset],
/// zero where t + offset leaves the block. This is the time shift used by
/// the temporal convolution on stacked B*T x D inputs.
inline Var ShiftRows(const Var& a, Eigen::Index block_len, int offset) {
  if (block_len <= 0 || a.rows() % block_len != 0)
    throw DimensionError("ShiftRows: rows not a multiple of block length");
  const Eigen::Index blocks = a.rows() / block_len;
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (Eigen::Index b = 0; b < blocks; ++b) {
    for (Eigen::Index t = 0; t < block_len; ++t) {
      const Eigen::Index src = t + offset;
      if (src >= 0 && src < block_len)
        out.row(b * block_len + t) = a.value().row(b * block_len + src);
    }
  }
  auto pa = a.node();
  return internal::MakeResult(
      std::move(out), {a}, [pa, block_len, blocks, offset](const Node& self) {
        Matrix g = Matrix::Zero(pa->value.rows(), pa->value.cols());
        for (Eigen::Index b = 0; b < blocks; ++b) {
          for (Eigen::Index t = 0; t < block_len; ++t) {
            const Eigen::Index src = t + offset;
            if (src >= 0 && src < block_len)
              g.row(b * block_len + src) += self.grad.row(b * block_len + t);
          }
        }
        pa->Accumulate(g);
      });
}

/// Mean over the valid frames of each sample. `frames` is (B*T) x D stacked,
/// `mask` is B x T with entries in {0, 1}.
inline Var MaskedMeanPool(const Var& frames, const Matrix& mask) {
  const Eigen::Index batch = mask.rows(), steps = mask.cols();
  if (frames.rows() != batch * steps)
    throw DimensionError(StrCat("MaskedMeanPool: expected ", batch * steps,
                                " frame rows, got ", frames.rows()));
  Vector counts = mask.rowwise().sum();
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (!(counts(b) > 0.0))
      throw DegenerateInput(
          StrCat("MaskedMeanPool: sample ", b, " has no valid frames"));
  }
  Matrix out = Matrix::Zero(batch, frames.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index t = 0; t < steps; ++t) {
      if (mask(b, t) != 0.0)
        out.row(b) += mask(b, t) * frames.value().row(b * steps + t);
    }
    out.row(b) /= counts(b);
  }
  auto pf = frames.node();
  return internal::MakeResult(
      std::move(out), {frames}, [pf, mask, counts](const Node& self) {
        const Eigen::Index batch = mask.rows(), steps = mask.cols();
        Matrix g = Matrix::Zero(pf->value.rows(), pf->value.cols());
        for (Eigen::Index b = 0; b < batch; ++b) {
          for (Eigen::Index t = 0; t < steps; ++t) {
            if (mask(b, t) != 0.0)
              g.row(b * steps + t) = (mask(b, t) / counts(b)) * self.grad.row(b);
          }
        }
        pf->Accumulate(g);
      });
}

}  // namespace vbmtl::ad
