#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "hazefield/adam.hpp"
#include "oracles.hpp"

using namespace hazefield;
using Eigen::VectorXd;

namespace {

// Cauchy-Schwarz on the two exponential averages: after t steps
// |m_hat| / sqrt(v_hat) <= (1 - b1) / c1 * sqrt(sum_k (b1^2 / b2)^k * c2 / (1 - b2)).
double adam_ratio_bound(int t) {
  double sum = 0;
  for (int k = 0; k < t; ++k) sum += std::pow(0.81 / 0.999, k);
  const double c1 = 1 - std::pow(0.9, t), c2 = 1 - std::pow(0.999, t);
  return 0.1 / c1 * std::sqrt(sum * c2 / 0.001);
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  VectorXd p = VectorXd::LinSpaced(5, -1, 1);
  const VectorXd before = p;
  AdamState<double> s(5);
  for (int i = 0; i < 3; ++i) adam_step<double>(p, VectorXd::Zero(5), s, 1e-2);
  EXPECT_TRUE((p.array() == before.array()).all());
  EXPECT_EQ(s.step_count, 3);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  VectorXd p = VectorXd::Zero(3);
  VectorXd g(3);
  g << 0.5, -2.0, 1e3;
  AdamState<double> s(3);
  adam_step<double>(p, g, s, 1e-2);
  // Bias correction makes the first update lr * g / (|g| + eps).
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], -1e-2 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
  EXPECT_NEAR(p[0], -0.01, 1e-9);
  EXPECT_NEAR(p[1], 0.01, 1e-9);
}

TEST(Adam, MatchesReferenceRecurrence) {
  oracle::Gen gen(3);
  const int n = 4;
  VectorXd p = VectorXd::Zero(n), q = p, m = p, v = p;
  AdamState<double> s(n);
  for (int t = 1; t <= 20; ++t) {
    VectorXd g(n);
    for (int i = 0; i < n; ++i) g[i] = gen.uniform(-1, 1);
    adam_step<double>(p, g, s, 3e-3);
    for (int i = 0; i < n; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      q[i] -= 3e-3 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  EXPECT_LE((p - q).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Adam, NonFiniteGradientDiverges) {
  VectorXd p = VectorXd::Zero(2);
  VectorXd g(2);
  g << 1.0, std::numeric_limits<double>::quiet_NaN();
  AdamState<double> s(2);
  try {
    adam_step<double>(p, g, s, 1e-2);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "diverged");
  }
  EXPECT_TRUE(p.isZero(0));
  EXPECT_EQ(s.step_count, 0);
}

TEST(Adam, ShapeAndLrValidation) {
  VectorXd p = VectorXd::Zero(2);
  AdamState<double> s(3);
  EXPECT_THROW(adam_step<double>(p, VectorXd::Zero(2), s, 1e-2), std::invalid_argument);
  AdamState<double> ok(2);
  EXPECT_THROW(adam_step<double>(p, VectorXd::Zero(2), ok, -1.0), std::invalid_argument);
}

TEST(Adam, DeterministicForIdenticalInputs) {
  oracle::Gen gen(9);
  VectorXd a = VectorXd::Zero(6), b = a;
  AdamState<double> sa(6), sb(6);
  for (int t = 0; t < 50; ++t) {
    VectorXd g(6);
    for (int i = 0; i < 6; ++i) g[i] = gen.uniform(-3, 3);
    adam_step<double>(a, g, sa, 1e-2);
    adam_step<double>(b, g, sb, 1e-2);
  }
  EXPECT_TRUE((a.array() == b.array()).all());
  EXPECT_TRUE((sa.v.array() == sb.v.array()).all());
}

TEST(Adam, UpdateMagnitudeWithinCauchySchwarzBound) {
  oracle::Gen gen(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = gen.integer(1, 6);
    VectorXd p = VectorXd::Zero(n);
    AdamState<double> s(n);
    const double lr = gen.uniform(1e-5, 1e-1);
    const int steps = gen.integer(1, 20);
    for (int t = 1; t <= steps; ++t) {
      VectorXd g(n);
      for (int i = 0; i < n; ++i) g[i] = gen.uniform(-1, 1) * std::pow(10.0, gen.uniform(-4, 4));
      const VectorXd before = p;
      adam_step<double>(p, g, s, lr);
      ASSERT_LE((p - before).cwiseAbs().maxCoeff(), lr * adam_ratio_bound(t) * (1 + 1e-12));
    }
  }
}

TEST(Adam, UpdateAtMostLrForSteadyMagnitudes) {
  // Gradients of fixed magnitude per coordinate, random sign.
  oracle::Gen gen(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = gen.integer(1, 6);
    VectorXd mag(n);
    for (int i = 0; i < n; ++i) mag[i] = std::pow(10.0, gen.uniform(-4, 4));
    VectorXd p = VectorXd::Zero(n);
    AdamState<double> s(n);
    const double lr = gen.uniform(1e-5, 1e-1);
    for (int t = 0; t < 30; ++t) {
      VectorXd g(n);
      for (int i = 0; i < n; ++i) g[i] = gen.coin() ? mag[i] : -mag[i];
      const VectorXd before = p;
      adam_step<double>(p, g, s, lr);
      ASSERT_LE((p - before).cwiseAbs().maxCoeff(), lr * (1 + 1e-12));
    }
  }
}

TEST(LrSchedule, MilestoneValues) {
  const LrSchedule s;
  const std::int64_t total = 3000;
  EXPECT_DOUBLE_EQ(lr_at(s, 0, total).grid, 1e-2);
  EXPECT_DOUBLE_EQ(lr_at(s, 999, total).grid, 1e-2);
  EXPECT_NEAR(lr_at(s, 1000, total).grid, 3.3e-3, 1e-15);
  EXPECT_NEAR(lr_at(s, 1800, total).grid, 1e-2 * 0.33 * 0.33, 1e-15);
  EXPECT_NEAR(lr_at(s, 2400, total).grid, 1e-2 * std::pow(0.33, 3), 1e-15);
  EXPECT_NEAR(lr_at(s, 2700, total).grid, 1.186e-4, 1e-7);
  EXPECT_NEAR(lr_at(s, 2999, total).grid, 1.186e-4, 1e-7);
  EXPECT_NEAR(lr_at(s, 2999, total).atmosphere, 3e-4 * std::pow(0.33, 4), 1e-15);
}

TEST(LrSchedule, OutOfRangeThrows) {
  const LrSchedule s;
  EXPECT_THROW(lr_at(s, -1, 10), std::out_of_range);
  EXPECT_THROW(lr_at(s, 10, 10), std::out_of_range);
  EXPECT_THROW(lr_at(s, 0, 0), std::out_of_range);
}

TEST(LrSchedule, NonIncreasingForAnyLength) {
  const LrSchedule s;
  for (std::int64_t total = 1; total <= 1000; ++total) {
    double prev = std::numeric_limits<double>::infinity();
    for (std::int64_t i = 0; i < total; ++i) {
      const double lr = lr_at(s, i, total).grid;
      ASSERT_LE(lr, prev);
      prev = lr;
    }
  }
}

TEST(LrSchedule, Validation) {
  LrSchedule s;
  EXPECT_NO_THROW(s.validate());
  s.decay = 1.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = LrSchedule{};
  s.milestones = {0.5, 0.4, 0.8, 0.9};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = LrSchedule{};
  s.base_lr_grid = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}
