#include <gtest/gtest.h>

#include <cmath>

#include "hazefield/activation.hpp"
#include "hazefield/haze.hpp"
#include "oracles.hpp"

using namespace hazefield;
using Eigen::VectorXd;

TEST(Transmission, ZeroDepthIsOne) { EXPECT_EQ(transmission(0.0, 0.3), 1.0); }

TEST(Transmission, FixtureBetaAtDepthFive) {
  EXPECT_NEAR(transmission(5.0, 0.162), std::exp(-0.81), 1e-15);
  EXPECT_NEAR(transmission(5.0, 0.162), 0.4449, 1e-4);
}

TEST(Transmission, DecreasesTowardZeroWithBeta) {
  double prev = 1.0;
  for (double beta = 0.5; beta < 200.0; beta *= 2.0) {
    const double t = transmission(2.0, beta);
    EXPECT_LT(t, prev);
    prev = t;
  }
  EXPECT_LT(prev, 1e-100);
}

TEST(Transmission, NegativeDepthThrows) { EXPECT_THROW(transmission(-1e-9, 0.1), std::invalid_argument); }

TEST(ApplyAsm, ZeroBetaIsIdentity) {
  oracle::Gen gen(1);
  const auto J = gen.image(5, 4);
  const auto D = gen.map(5, 4, 0.0, 8.0);
  const auto I = apply_asm(J, D, 0.0, 0.8);
  EXPECT_TRUE((I.px == J.px).all());
}

TEST(ApplyAsm, BlackObjectBehindFixtureHaze) {
  const Image<double> J(1, 1);
  const auto D = ScalarMap<double>::constant(1, 1, 5.0);
  const auto I = apply_asm(J, D, 0.162, 0.8);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(I.px(0, c), 0.8 * (1.0 - std::exp(-0.81)), 1e-15);
  EXPECT_NEAR(I.px(0, 0), 0.4441, 1e-4);
}

TEST(ApplyAsm, InfiniteDepthApproachesAirlight) {
  const auto J = Image<double>::constant(1, 1, 0.2);
  const auto D = ScalarMap<double>::constant(1, 1, 1e4);
  const auto I = apply_asm(J, D, 0.2, 0.7);
  EXPECT_NEAR(I.px(0, 0), 0.7, 1e-12);
}

TEST(ApplyAsm, ShapeMismatchThrows) {
  EXPECT_THROW(apply_asm(Image<double>(3, 3), ScalarMap<double>(3, 4), 0.1, 0.5), std::invalid_argument);
}

TEST(InvertAsm, RoundTrip) {
  oracle::Gen gen(2);
  const auto J = gen.image(6, 7);
  const auto D = gen.map(6, 7, 0.0, 10.0);
  const auto back = invert_asm(apply_asm(J, D, 0.3, 0.9), D, 0.3, 0.9);
  EXPECT_LE((back.px - J.px).abs().maxCoeff(), 1e-6);
}

TEST(InvertAsm, SaturatedHazeReturnsAirlight) {
  oracle::Gen gen(3);
  const auto D = gen.map(4, 4, 0.0, 20.0);
  const auto I = Image<double>::constant(4, 4, 0.85);
  const auto J = invert_asm(I, D, 0.25, 0.85);
  EXPECT_LE((J.px - 0.85).abs().maxCoeff(), 1e-12);
}

TEST(InvertAsm, ZeroBetaReturnsInput) {
  oracle::Gen gen(4);
  const auto I = gen.image(3, 3);
  const auto D = gen.map(3, 3, 0.0, 5.0);
  EXPECT_TRUE((invert_asm(I, D, 0.0, 0.6).px == I.px).all());
}

TEST(InvertAsm, NonPositiveTminThrows) {
  EXPECT_THROW(invert_asm(Image<double>(2, 2), ScalarMap<double>(2, 2), 0.1, 0.5, 0.0), std::invalid_argument);
}

TEST(InvertAsm, ClampsTinyTransmission) {
  const auto I = Image<double>::constant(1, 1, 0.5);
  const auto D = ScalarMap<double>::constant(1, 1, 100.0);
  const double t = std::exp(-100.0);
  const auto J = invert_asm(I, D, 1.0, 0.4, 1e-3);
  EXPECT_NEAR(J.px(0, 0), (0.5 - 0.4 * (1.0 - t)) / 1e-3, 1e-9);
}

TEST(AsmBackward, MatchesFiniteDifferences) {
  oracle::Gen gen(5);
  const int h = 4, w = 4;
  const auto J = gen.image(h, w);
  const auto D = gen.map(h, w, 0.5, 6.0);
  const double beta = 0.21, A = 0.83;
  const auto r = gen.image(h, w, -1, 1);
  const auto g = asm_backward(J, D, beta, A, r);
  auto L = [&](const Image<double>& j, const ScalarMap<double>& d, double b, double a) {
    return (apply_asm(j, d, b, a).px * r.px).sum();
  };
  const VectorXd j0 = Eigen::Map<const VectorXd>(J.px.data(), J.px.size());
  const VectorXd nj = oracle::central_diff(
      [&](const VectorXd& x) {
        Image<double> j(h, w);
        std::copy(x.data(), x.data() + x.size(), j.px.data());
        return L(j, D, beta, A);
      },
      j0, 1e-6);
  EXPECT_LE(oracle::rel_err(Eigen::Map<const VectorXd>(g.d_clean.px.data(), g.d_clean.px.size()), nj), 1e-5);
  const VectorXd nd = oracle::central_diff(
      [&](const VectorXd& x) {
        ScalarMap<double> d = D;
        d.v = x.array();
        return L(J, d, beta, A);
      },
      D.v.matrix(), 1e-6);
  EXPECT_LE(oracle::rel_err(g.d_depth.v.matrix(), nd), 1e-5);
  const double h_ = 1e-6;
  const double nb = (L(J, D, beta + h_, A) - L(J, D, beta - h_, A)) / (2 * h_);
  const double na = (L(J, D, beta, A + h_) - L(J, D, beta, A - h_)) / (2 * h_);
  EXPECT_NEAR(g.d_beta, nb, 1e-5 * std::abs(nb));
  EXPECT_NEAR(g.d_airlight, na, 1e-5 * std::abs(na));
}

TEST(AsmBackward, ZeroBeta) {
  oracle::Gen gen(6);
  const auto J = gen.image(3, 3);
  const auto D = gen.map(3, 3, 0.5, 6.0);
  const auto r = gen.image(3, 3, -1, 1);
  const auto g = asm_backward(J, D, 0.0, 0.7, r);
  EXPECT_TRUE((g.d_clean.px == r.px).all());
  EXPECT_EQ(g.d_airlight, 0.0);
}

TEST(AsmBackward, ObjectEqualToAirlight) {
  oracle::Gen gen(7);
  const auto J = Image<double>::constant(3, 3, 0.65);
  const auto D = gen.map(3, 3, 0.5, 6.0);
  const auto g = asm_backward(J, D, 0.2, 0.65, gen.image(3, 3, -1, 1));
  EXPECT_EQ(g.d_beta, 0.0);
  EXPECT_TRUE(g.d_depth.v.isZero(0));
}

TEST(AsmBackward, ShapeMismatchThrows) {
  EXPECT_THROW(asm_backward(Image<double>(2, 2), ScalarMap<double>(2, 2), 0.1, 0.5, Image<double>(2, 3)),
               std::invalid_argument);
}

TEST(Quantize, MidGray) {
  const auto q = quantize(Image<double>::constant(1, 1, 0.5));
  EXPECT_DOUBLE_EQ(q.values.px(0, 0), 128.0 / 255.0);
  EXPECT_NEAR(q.values.px(0, 0), 0.50196, 1e-5);
  EXPECT_NEAR(q.lo.px(0, 0), 0.50000, 1e-5);
  EXPECT_NEAR(q.hi.px(0, 0), 0.50392, 1e-5);
}

TEST(Quantize, ZeroClampsInterval) {
  const auto q = quantize(Image<double>::constant(1, 1, 0.0));
  EXPECT_EQ(q.values.px(0, 0), 0.0);
  EXPECT_EQ(q.lo.px(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(q.hi.px(0, 0), 1.0 / 510.0);
}

TEST(Quantize, IsIdempotentAndBracketsItsValue) {
  oracle::Gen gen(8);
  const auto q = quantize(gen.image(8, 8, -0.2, 1.2));
  const auto q2 = quantize(q.values);
  EXPECT_TRUE((q2.values.px == q.values.px).all());
  EXPECT_TRUE((q.lo.px <= q.values.px).all());
  EXPECT_TRUE((q.values.px <= q.hi.px).all());
  EXPECT_LE((q.hi.px - q.lo.px).maxCoeff(), 1.0 / 255.0 + 1e-9);
  for (Eigen::Index i = 0; i < q.values.px.size(); ++i) {
    const double k = q.values.px.data()[i] * 255.0;
    EXPECT_NEAR(k, std::round(k), 1e-9);
  }
}

TEST(Quantize, TooFewLevelsThrows) { EXPECT_THROW(quantize(Image<double>(1, 1), 1), std::invalid_argument); }

TEST(AtmosphereParamsTest, MappingRoundTripsInitialValues) {
  AtmosphereParams<double> a(3, 0.05, 0.75);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(a.beta(i), 0.05, 1e-14);
    EXPECT_NEAR(a.airlight(i), 0.75, 1e-14);
  }
  EXPECT_THROW(AtmosphereParams<double>(2, 0.0, 0.5), std::invalid_argument);
  EXPECT_THROW(AtmosphereParams<double>(2, 0.1, 1.5), std::invalid_argument);
}

TEST(AtmosphereParamsTest, RawDerivatives) {
  AtmosphereParams<double> a(1, 0.2, 0.9);
  const double h = 1e-6;
  const double r = a.raw()[0];
  EXPECT_NEAR(a.dbeta_draw(0), (softplus(r + h) - softplus(r - h)) / (2 * h), 1e-9);
  const double s = a.raw()[1];
  EXPECT_NEAR(a.dairlight_draw(0), 1.5 * (sigmoid(s + h) - sigmoid(s - h)) / (2 * h), 1e-9);
}
