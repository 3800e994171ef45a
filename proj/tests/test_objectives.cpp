// tests/test_objectives.cpp

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


#include "test_util.hpp"

#include <gtest/gtest.h>

namespace vbmtl {
namespace {

using testing::OracleCcc;

double CccOf(std::vector<double> p, std::vector<double> t) { return Ccc(p, t); }

/// Central differences of a scalar function of one matrix.
Matrix NumericGrad(const std::function<double(const Matrix&)>& f, Matrix x,
                   double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + h;
    const double up = f(x);
    x.data()[i] = orig - h;
    const double down = f(x);
    x.data()[i] = orig;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

Matrix AnalyticGrad(const std::function<ad::Var(const ad::Var&)>& f, const Matrix& x) {
  ad::Var v(x, true);
  ad::Backward(f(v));
  return v.GradOrZero();
}

// --- CCC -----------------------------------------------------------------

TEST(CccTest, Examples) {
  EXPECT_DOUBLE_EQ(CccOf({0.2, 0.4, 0.9}, {0.2, 0.4, 0.9}), 1.0);
  EXPECT_DOUBLE_EQ(CccOf({0.5, 0.5, 0.5}, {0.1, 0.5, 0.9}), 0.0);
  const double v = CccOf({0.1, 0.5, 0.9}, {0.0, 0.5, 1.0});
  EXPECT_NEAR(v, 0.9756, 1e-4);
  EXPECT_NEAR(v, OracleCcc({0.1, 0.5, 0.9}, {0.0, 0.5, 1.0}), 1e-12);
}

TEST(CccTest, DegenerateInputs) {
  EXPECT_DOUBLE_EQ(CccOf({0.3, 0.3}, {0.3, 0.3}), 0.0);
  EXPECT_THROW(CccOf({0.3}, {0.3}), DegenerateInput);
  EXPECT_THROW(CccOf({0.3, 0.1}, {0.3}), DimensionError);
}

TEST(CccTest, PropertySymmetryInvarianceAndBound) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(gen() % 50);
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = nd(gen);
      y[i] = 0.6 * x[i] + nd(gen);
    }
    const double c = Ccc(x, y);
    EXPECT_NEAR(c, Ccc(y, x), 1e-12);
    EXPECT_LE(std::abs(c), 1.0 + 1e-12);
    EXPECT_NEAR(c, OracleCcc(x, y), 1e-9);
    const double shift = nd(gen) * 10, scale = 0.1 + std::abs(nd(gen)) * 5;
    std::vector<double> xs(n), ys(n);
    for (int i = 0; i < n; ++i) {
      xs[i] = scale * x[i] + shift;
      ys[i] = scale * y[i] + shift;
    }
    EXPECT_NEAR(Ccc(xs, ys), c, 1e-9);
  }
}

TEST(CccLossTest, Examples) {
  Matrix t = Matrix::Random(6, 10).cwiseAbs();
  EXPECT_NEAR(CccLossValue(t, t), 0.0, 1e-12);
  Matrix constant = Matrix::Constant(6, 10, 0.3);
  EXPECT_NEAR(CccLossValue(t, constant), 1.0, 1e-12);
  // Dim 1 has CCC 2x / (x^2 + 1) = 0.5 with x = 2 - sqrt(3).
  const double x = 2.0 - std::sqrt(3.0);
  Matrix target(2, 2), pred(2, 2);
  target << 0.3, -1.0, 0.7, 1.0;
  pred << 0.3, -x, 0.7, x;
  EXPECT_NEAR(CccLossValue(pred, target), 0.25, 1e-12);
}

TEST(CccLossTest, MaskSkipsUnobservedRowsAndThinDims) {
  Matrix pred(4, 2), target(4, 2), mask(4, 2);
  pred << 0.1, 0.9, 0.5, 0.2, 0.9, 0.4, 0.3, 0.3;
  target << 0.0, 0.1, 0.5, 0.2, 1.0, 0.7, 0.8, 0.6;
  mask << 1, 1, 1, 0, 1, 0, 0, 0;
  // Dim 1 has a single observed row and is skipped; dim 0 uses rows 0..2.
  const double expected = 1.0 - OracleCcc({0.1, 0.5, 0.9}, {0.0, 0.5, 1.0});
  EXPECT_NEAR(CccLossValue(pred, target, mask), expected, 1e-12);
  Matrix none = Matrix::Zero(4, 2);
  none(0, 0) = 1;
  EXPECT_THROW(CccLossValue(pred, target, none), DegenerateInput);
}

TEST(CccLossTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix pred(7, 3), target(7, 3), mask(7, 3);
    Vector w(7);
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      pred.data()[i] = u(gen);
      target.data()[i] = u(gen);
      mask.data()[i] = u(gen) < 0.8 ? 1 : 0;
    }
    for (int i = 0; i < 7; ++i) w(i) = 0.5 + u(gen);
    auto f = [&](const Matrix& p) { return CccLoss(ad::Constant(p), target, mask, w).scalar(); };
    const Matrix num = NumericGrad(f, pred);
    const Matrix ana =
        AnalyticGrad([&](const ad::Var& v) { return CccLoss(v, target, mask, w); }, pred);
    EXPECT_LE((num - ana).cwiseAbs().maxCoeff(), 1e-7);
  }
}

// --- UAR -----------------------------------------------------------------

TEST(UarTest, Examples) {
  std::vector<int> perfect{0, 1, 2, 3, 4, 5, 6, 7};
  EXPECT_DOUBLE_EQ(Uar(perfect, perfect, 8), 1.0);
  std::vector<int> target(100, 0), all_a(100, 0);
  for (int i = 90; i < 100; ++i) target[i] = 1;
  EXPECT_DOUBLE_EQ(Uar(all_a, target, 2), 0.5);
  // recalls 1.0, 0.5, 0.0
  std::vector<int> t3{0, 0, 1, 1, 2, 2}, p3{0, 0, 1, 0, 0, 1};
  EXPECT_DOUBLE_EQ(Uar(p3, t3, 3), 0.5);
  EXPECT_DOUBLE_EQ(testing::OracleUar(p3, t3, 3), 0.5);
}

TEST(UarTest, PropertyOracleAndRelabelingInvariance) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(gen() % 7);
    const int n = 1 + static_cast<int>(gen() % 60);
    std::vector<int> p(n), t(n);
    for (int i = 0; i < n; ++i) {
      t[i] = static_cast<int>(gen() % k);
      p[i] = gen() % 3 == 0 ? static_cast<int>(gen() % k) : t[i];
    }
    const double u = Uar(p, t, k);
    EXPECT_NEAR(u, testing::OracleUar(p, t, k), 1e-12);
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<int> pp(n), tp(n);
    for (int i = 0; i < n; ++i) {
      pp[i] = perm[p[i]];
      tp[i] = perm[t[i]];
    }
    EXPECT_NEAR(Uar(pp, tp, k), u, 1e-12);
  }
}

TEST(UarTest, ArgmaxTiesGoLow) {
  Matrix m(2, 3);
  m << 0.2, 0.4, 0.4, 0.5, 0.5, 0.5;
  EXPECT_EQ(ArgmaxRows(m), (std::vector<int>{1, 0}));
}

// --- cross-entropy -------------------------------------------------------

TEST(CrossEntropyTest, Examples) {
  Matrix onehot = Matrix::Zero(3, 4);
  onehot(0, 1) = onehot(1, 3) = onehot(2, 0) = 1;
  std::vector<int> y{1, 3, 0};
  std::vector<double> w{0.3, 2.0, 1.0, 5.0};
  EXPECT_NEAR(WeightedCrossEntropyValue(onehot, y, w), 0.0, 1e-12);
  Matrix uniform = Matrix::Constant(3, 4, 0.25);
  std::vector<double> unit(4, 1.0);
  EXPECT_NEAR(WeightedCrossEntropyValue(uniform, y, unit), 1.3863, 1e-4);
  EXPECT_NEAR(WeightedCrossEntropyValue(uniform, y, unit), std::log(4.0), 1e-12);
}

TEST(CrossEntropyTest, WeightsNormalize) {
  Matrix p(3, 2);
  p << 0.7, 0.3, 0.6, 0.4, 0.9, 0.1;
  std::vector<int> same{0, 0, 0};
  const double base = WeightedCrossEntropyValue(p, same, std::vector<double>{1.0, 1.0});
  EXPECT_NEAR(WeightedCrossEntropyValue(p, same, std::vector<double>{2.0, 1.0}), base, 1e-12);
  // Unit weights reduce to the plain mean negative log-likelihood.
  const double plain = -(std::log(0.7) + std::log(0.6) + std::log(0.9)) / 3;
  EXPECT_NEAR(base, plain, 1e-12);
  // Mixed classes: hand-evaluated weighted mean.
  std::vector<int> mixed{0, 1, 0};
  const double expected = (1 * -std::log(0.7) + 3 * -std::log(0.4) + 1 * -std::log(0.9)) / 5;
  EXPECT_NEAR(WeightedCrossEntropyValue(p, mixed, std::vector<double>{1.0, 3.0}), expected,
              1e-12);
}

TEST(CrossEntropyTest, RejectsUnnormalizedRows) {
  Matrix p = Matrix::Constant(2, 2, 0.6);
  std::vector<int> y{0, 1};
  EXPECT_THROW(WeightedCrossEntropyValue(p, y, std::vector<double>{1, 1}), DataError);
}

TEST(CrossEntropyTest, GradientMatchesFiniteDifferences) {
  Matrix logits(4, 3);
  logits << 0.2, -0.3, 1.0, 0.5, 0.5, -1.0, -0.2, 0.1, 0.3, 1.5, -0.5, 0.0;
  std::vector<int> y{2, 0, 1, 0};
  std::vector<double> w{0.5, 2.0, 1.5};
  Vector u(4);
  u << 1.0, 0.5, 2.0, 1.0;
  auto loss = [&](const ad::Var& v) {
    return WeightedCrossEntropy(ad::SoftmaxRows(v), y, w, u);
  };
  const Matrix num =
      NumericGrad([&](const Matrix& m) { return loss(ad::Constant(m)).scalar(); }, logits);
  EXPECT_LE((num - AnalyticGrad(loss, logits)).cwiseAbs().maxCoeff(), 1e-8);
}

// --- MSE / MAE -------------------------------------------------------------

TEST(ElementwiseLossTest, Examples) {
  Matrix t(2, 2);
  t << 0.1, 0.2, 0.3, 0.4;
  EXPECT_DOUBLE_EQ(MseLossValue(t, t), 0.0);
  EXPECT_DOUBLE_EQ(MaeLossValue(t, t), 0.0);
  Matrix shifted = t.array() + 0.5;
  EXPECT_NEAR(MseLossValue(shifted, t), 0.25, 1e-12);
  EXPECT_NEAR(MaeLossValue(shifted, t), 0.5, 1e-12);
  Matrix p(1, 2), q(1, 2);
  p << 0, 1;
  q << 1, 0;
  EXPECT_DOUBLE_EQ(MseLossValue(p, q), 1.0);
  EXPECT_DOUBLE_EQ(MaeLossValue(p, q), 1.0);
}

TEST(ElementwiseLossTest, MaskedMean) {
  Matrix p(2, 2), t = Matrix::Zero(2, 2), m(2, 2);
  p << 1, 2, 3, 4;
  m << 1, 0, 0, 1;
  EXPECT_NEAR(MseLossValue(p, t, m), (1.0 + 16.0) / 2, 1e-12);
  EXPECT_NEAR(MaeLossValue(p, t, m), (1.0 + 4.0) / 2, 1e-12);
}

// --- uncertainty combination -----------------------------------------------

TEST(CombineTest, ZeroLogVarsSumLosses) {
  std::vector<double> l{0.3, 1.2, 2.5}, s{0, 0, 0};
  EXPECT_NEAR(CombineMtlValue(l, s), 4.0, 1e-12);
}

TEST(CombineTest, SingleTaskExample) {
  std::vector<double> l{2.0}, s{std::log(2.0)};
  EXPECT_NEAR(CombineMtlValue(l, s), 1.6931, 1e-4);
  EXPECT_NEAR(CombineMtlValue(l, s), 1.0 + std::log(2.0), 1e-12);
}

TEST(CombineTest, GradientAndMinimizer) {
  const double l = 1.7;
  for (double s : {-1.0, 0.0, 0.4, 2.0}) {
    ad::Var sv(Matrix::Constant(1, 1, s), true);
    ad::Var lv(Matrix::Constant(1, 1, l), true);
    ad::Backward(CombineMtl({lv}, sv, {UncertaintyFactors{}}));
    const double h = 1e-6;
    const double fd = (CombineMtlValue(std::vector<double>{l}, std::vector<double>{s + h}) -
                       CombineMtlValue(std::vector<double>{l}, std::vector<double>{s - h})) /
                      (2 * h);
    EXPECT_NEAR(sv.grad()(0, 0), -std::exp(-s) * l + 1.0, 1e-12);
    EXPECT_NEAR(sv.grad()(0, 0), fd, 1e-7);
    EXPECT_NEAR(lv.grad()(0, 0), std::exp(-s), 1e-12);
  }
  // Grid search for the minimiser over s.
  double best_s = 0, best = std::numeric_limits<double>::infinity();
  for (double s = -3; s <= 3; s += 1e-4) {
    const double v = CombineMtlValue(std::vector<double>{l}, std::vector<double>{s});
    if (v < best) {
      best = v;
      best_s = s;
    }
  }
  EXPECT_NEAR(best_s, std::log(l), 2e-4);
}

TEST(CombineTest, MissingTaskContributesNothing) {
  ad::Var s(Matrix::Constant(1, 2, 0.7), true);
  std::vector<std::optional<ad::Var>> losses{ad::Var(Matrix::Constant(1, 1, 2.0), true),
                                             std::nullopt};
  const ad::Var total = CombineMtl(losses, s, {UncertaintyFactors{}, UncertaintyFactors{}});
  EXPECT_NEAR(total.scalar(), std::exp(-0.7) * 2.0 + 0.7, 1e-12);
  ad::Backward(total);
  EXPECT_DOUBLE_EQ(s.grad()(0, 1), 0.0);
}

TEST(CombineTest, NonFiniteLossNamesTask) {
  ad::Var s(Matrix::Zero(1, 2), true);
  std::vector<std::optional<ad::Var>> losses{
      ad::Scalar(1.0), ad::Scalar(std::numeric_limits<double>::quiet_NaN())};
  try {
    CombineMtl(losses, s, {UncertaintyFactors{}, UncertaintyFactors{}}, {"High", "Type"});
    FAIL();
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("Type"), std::string::npos);
  }
}

TEST(CombineTest, HalfRegressionForm) {
  const auto reg = FactorsFor(UncertaintyForm::kHalfRegression, TaskKind::kRegression);
  const auto cls = FactorsFor(UncertaintyForm::kHalfRegression, TaskKind::kClassification);
  EXPECT_DOUBLE_EQ(reg.loss, 0.5);
  EXPECT_DOUBLE_EQ(reg.penalty, 0.5);
  EXPECT_DOUBLE_EQ(cls.loss, 1.0);
  EXPECT_DOUBLE_EQ(cls.penalty, 0.5);
  ad::Var s(Matrix::Constant(1, 2, 0.3), false);
  const double v = CombineMtl({ad::Scalar(2.0), ad::Scalar(1.0)}, s, {reg, cls}).scalar();
  EXPECT_NEAR(v, 0.5 * std::exp(-0.3) * 2 + 0.15 + std::exp(-0.3) * 1 + 0.15, 1e-12);
  EXPECT_EQ(ParseUncertaintyForm(ToString(UncertaintyForm::kHalfRegression)),
            UncertaintyForm::kHalfRegression);
}

TEST(MetricsReportTest, KeyValueText) {
  MetricsReport r;
  r.tasks = {"High", "Type"};
  r.metric = {{"High", 0.5}, {"Type", 0.25}};
  r.metric_name = {{"High", "CCC"}, {"Type", "UAR"}};
  r.task_loss = {{"High", 0.5}, {"Type", 1.0}};
  r.total_loss = 1.5;
  EXPECT_EQ(r.ToKeyValue(),
            "metric.High.CCC=0.5\nmetric.Type.UAR=0.25\nloss.High=0.5\nloss.Type=1\n"
            "loss.total=1.5\n");
}

}  // namespace
}  // namespace vbmtl
