#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

#include "hazefield/activation.hpp"
#include "hazefield/image.hpp"

namespace hazefield {

// Upper end of the airlight range. Estimates slightly above 1 are legitimate,
// so the admissible interval is (0, kAirlightMax).
inline constexpr double kAirlightMax = 1.5;

// Per-image atmosphere: beta_i = softplus(beta_raw_i), A_i = 1.5 sigmoid(a_raw_i).
// Stored flat like GradBuffer::atmosphere: [beta_raw..., a_raw...].
template <typename Scalar>
class AtmosphereParams {
 public:
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  AtmosphereParams() = default;
  AtmosphereParams(Eigen::Index n_images, Scalar beta, Scalar airlight) : raw_(2 * n_images) {
    if (!(beta > 0) || !(airlight > 0 && airlight < Scalar(kAirlightMax))) {
      throw std::invalid_argument("atmosphere: beta must be > 0 and A in (0, 1.5)");
    }
    raw_.head(n_images).setConstant(inverse_softplus(beta));
    raw_.tail(n_images).setConstant(logit(airlight / Scalar(kAirlightMax)));
  }

  Eigen::Index size() const { return raw_.size() / 2; }
  VectorX& raw() { return raw_; }
  const VectorX& raw() const { return raw_; }
  auto beta_raw() { return raw_.head(size()); }
  auto beta_raw() const { return raw_.head(size()); }
  auto a_raw() { return raw_.tail(size()); }
  auto a_raw() const { return raw_.tail(size()); }

  Scalar beta(Eigen::Index i) const { return softplus(raw_[i]); }
  Scalar airlight(Eigen::Index i) const { return Scalar(kAirlightMax) * sigmoid(raw_[size() + i]); }
  Scalar dbeta_draw(Eigen::Index i) const { return sigmoid(raw_[i]); }
  Scalar dairlight_draw(Eigen::Index i) const {
    const Scalar s = sigmoid(raw_[size() + i]);
    return Scalar(kAirlightMax) * s * (Scalar(1) - s);
  }

  VectorX betas() const { return raw_.head(size()).unaryExpr([](Scalar x) { return softplus(x); }); }
  VectorX airlights() const {
    return raw_.tail(size()).unaryExpr([](Scalar x) { return Scalar(kAirlightMax) * sigmoid(x); });
  }

 private:
  VectorX raw_;
};

template <typename Scalar>
Scalar transmission(Scalar depth, Scalar beta) {
  if (depth < Scalar(0)) {
    throw std::invalid_argument("transmission: negative depth");
  }
  using std::exp;
  return exp(-beta * depth);
}

// Hazy image I = J t + A (1 - t), t = exp(-beta D). No clamping.
template <typename Scalar>
Image<Scalar> apply_asm(const Image<Scalar>& clean, const ScalarMap<Scalar>& depth, Scalar beta, Scalar airlight) {
  require_same_shape(clean, depth, "apply_asm");
  Image<Scalar> out(clean.height, clean.width);
  for (Eigen::Index p = 0; p < clean.pixel_count(); ++p) {
    const Scalar t = transmission(depth.v(p), beta);
    out.px.row(p) = clean.px.row(p) * t + airlight * (Scalar(1) - t);
  }
  return out;
}

// J = (I - A (1 - t)) / max(t, t_min).
template <typename Scalar>
Image<Scalar> invert_asm(const Image<Scalar>& hazy, const ScalarMap<Scalar>& depth, Scalar beta, Scalar airlight,
                         Scalar t_min = Scalar(1e-3)) {
  if (!(t_min > 0)) {
    throw std::invalid_argument("invert_asm: t_min must be positive");
  }
  require_same_shape(hazy, depth, "invert_asm");
  Image<Scalar> out(hazy.height, hazy.width);
  for (Eigen::Index p = 0; p < hazy.pixel_count(); ++p) {
    const Scalar t = transmission(depth.v(p), beta);
    out.px.row(p) = (hazy.px.row(p) - airlight * (Scalar(1) - t)) / std::max(t, t_min);
  }
  return out;
}

template <typename Scalar>
struct AsmGrads {
  Image<Scalar> d_clean;
  ScalarMap<Scalar> d_depth;
  Scalar d_beta = 0;
  Scalar d_airlight = 0;
};

// Adjoint of apply_asm:
//   dI/dJ = t, dI/dA = 1 - t, dI/dbeta = (A - J) D t, dI/dD = (A - J) beta t.
template <typename Scalar>
AsmGrads<Scalar> asm_backward(const Image<Scalar>& clean, const ScalarMap<Scalar>& depth, Scalar beta,
                              Scalar airlight, const Image<Scalar>& d_hazy) {
  require_same_shape(clean, depth, "asm_backward");
  require_same_shape(clean, d_hazy, "asm_backward");
  AsmGrads<Scalar> g;
  g.d_clean = Image<Scalar>(clean.height, clean.width);
  g.d_depth = ScalarMap<Scalar>(clean.height, clean.width);
  for (Eigen::Index p = 0; p < clean.pixel_count(); ++p) {
    const Scalar d = depth.v(p);
    const Scalar t = transmission(d, beta);
    const auto dI = d_hazy.px.row(p);
    g.d_clean.px.row(p) = dI * t;
    const Scalar dI_sum = dI.sum();
    g.d_airlight += dI_sum * (Scalar(1) - t);
    const Scalar dot_aj = (dI * (airlight - clean.px.row(p))).sum();
    g.d_beta += dot_aj * d * t;
    g.d_depth.v(p) = dot_aj * beta * t;
  }
  return g;
}

template <typename Scalar>
struct QuantizedImage {
  Image<Scalar> values;
  Image<Scalar> lo;
  Image<Scalar> hi;
  int levels = 256;

  int height() const { return values.height; }
  int width() const { return values.width; }
};

// Clamp to [0, 1], round to the nearest k / (levels - 1), and record the
// reconstruction interval of half-width 1 / (2 (levels - 1)), clamped to [0, 1].
template <typename Scalar>
QuantizedImage<Scalar> quantize(const Image<Scalar>& image, int levels = 256) {
  using std::round;
  if (levels < 2) {
    throw std::invalid_argument("quantize: levels must be at least 2");
  }
  const Scalar steps = Scalar(levels - 1);
  const Scalar half = Scalar(0.5) / steps;
  QuantizedImage<Scalar> q;
  q.levels = levels;
  q.values = image;
  q.values.px = image.px.unaryExpr([steps](Scalar v) {
    const Scalar c = std::clamp(v, Scalar(0), Scalar(1));
    return round(c * steps) / steps;
  });
  q.lo = q.values;
  q.hi = q.values;
  q.lo.px = (q.values.px - half).max(Scalar(0));
  q.hi.px = (q.values.px + half).min(Scalar(1));
  return q;
}

}  // namespace hazefield
