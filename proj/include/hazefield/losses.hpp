#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "hazefield/haze.hpp"
#include "hazefield/image.hpp"

namespace hazefield {

struct LossWeights {
  double lambda_smrc = 0.1;  // inside-interval coefficient, (0, 1]
  double lambda1 = 0.1;      // atmospheric consistency
  double lambda2 = 0.01;     // contrast discrimination
  double lambda3 = 0.003;    // total variation
  int pool_size = 4;
  double tv_eps = 1e-3;
  bool cd_hinge = false;

  void validate() const {
    if (!(lambda_smrc > 0.0 && lambda_smrc <= 1.0)) throw std::invalid_argument("lambda_smrc must lie in (0, 1]");
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) throw std::invalid_argument("loss weights must be nonnegative");
    if (pool_size < 1) throw std::invalid_argument("pool_size must be positive");
    if (!(tv_eps > 0.0)) throw std::invalid_argument("tv_eps must be positive");
  }
};

template <typename Scalar>
struct ScalarLoss {
  Scalar value = 0;
  Scalar grad = 0;
};

template <typename Scalar>
struct ImageLoss {
  Scalar value = 0;
  Image<Scalar> grad;
};

// Soft-margin penalty of a prediction u against a quantized observation q
// whose true value lies somewhere in [lo, hi].
template <typename Scalar>
ScalarLoss<Scalar> smrc_penalty(Scalar u, Scalar q, Scalar lo, Scalar hi, Scalar lambda) {
  if (u < lo) return {(u - lo) * (u - lo), Scalar(2) * (u - lo)};
  if (u > hi) return {(u - hi) * (u - hi), Scalar(2) * (u - hi)};
  return {lambda * (u - q) * (u - q), Scalar(2) * lambda * (u - q)};
}

// Mean SMRC over every pixel and channel.
template <typename Scalar>
ImageLoss<Scalar> rec_loss(const QuantizedImage<Scalar>& target, const Image<Scalar>& predicted, Scalar lambda) {
  require_same_shape(target.values, predicted, "rec_loss");
  ImageLoss<Scalar> out;
  out.grad = Image<Scalar>(predicted.height, predicted.width);
  const Eigen::Index n = predicted.px.size();
  if (n == 0) return out;
  const Scalar inv_n = Scalar(1) / Scalar(n);
  for (Eigen::Index p = 0; p < predicted.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) {
      const auto r = smrc_penalty(predicted.px(p, c), target.values.px(p, c), target.lo.px(p, c), target.hi.px(p, c), lambda);
      out.value += r.value;
      out.grad.px(p, c) = r.grad * inv_n;
    }
  }
  out.value *= inv_n;
  return out;
}

template <typename Scalar>
struct ConsLoss {
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Scalar value = 0;
  VectorX d_beta;
  VectorX d_airlight;
};

// Variance of the per-image estimates around their (non-detached) means.
// Because the deviations sum to zero, the gradient through the mean vanishes
// and d/dbeta_i = 2 (beta_i - mean) / N.
template <typename Scalar>
ConsLoss<Scalar> cons_loss(const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& betas,
                           const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& airlights) {
  if (betas.size() == 0 || betas.size() != airlights.size()) {
    throw std::invalid_argument("cons_loss: need N >= 1 matching beta/A entries");
  }
  const Scalar n = Scalar(betas.size());
  const auto db = (betas.array() - betas.mean()).matrix();
  const auto da = (airlights.array() - airlights.mean()).matrix();
  ConsLoss<Scalar> out;
  out.value = (db.squaredNorm() + da.squaredNorm()) / n;
  out.d_beta = Scalar(2) / n * db;
  out.d_airlight = Scalar(2) / n * da;
  return out;
}

// Root-mean-square residual between an image and its s x s mean-pooled,
// nearest-upsampled copy. Sides that are not multiples of s are padded by
// edge replication before pooling.
template <typename Scalar>
ImageLoss<Scalar> local_contrast(const Image<Scalar>& image, int s) {
  using std::sqrt;
  if (s < 1 || image.height < s || image.width < s) {
    throw std::invalid_argument("local_contrast: image smaller than one pool cell");
  }
  const int h = image.height;
  const int w = image.width;
  const int ch = (h + s - 1) / s;
  const int cw = (w + s - 1) / s;
  const Scalar inv_area = Scalar(1) / Scalar(s * s);

  Pixels<Scalar> cell_mean = Pixels<Scalar>::Zero(Eigen::Index(ch) * cw, 3);
  for (int py = 0; py < ch * s; ++py) {
    const int y = std::min(py, h - 1);
    for (int px = 0; px < cw * s; ++px) {
      const int x = std::min(px, w - 1);
      cell_mean.row(Eigen::Index(py / s) * cw + px / s) += image.px.row(image.index(y, x));
    }
  }
  cell_mean *= inv_area;

  ImageLoss<Scalar> out;
  out.grad = Image<Scalar>(h, w);
  Image<Scalar>& residual = out.grad;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      residual.px.row(image.index(y, x)) = image.px.row(image.index(y, x)) - cell_mean.row(Eigen::Index(y / s) * cw + x / s);
    }
  }
  const Scalar n = Scalar(residual.px.size());
  out.value = sqrt(residual.px.square().sum() / n);
  if (out.value == Scalar(0)) {
    out.grad.px.setZero();
    return out;
  }
  // dV/dR = R / (n V); then subtract the pooled share from every source pixel.
  residual.px /= n * out.value;
  Pixels<Scalar> cell_sum = Pixels<Scalar>::Zero(Eigen::Index(ch) * cw, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      cell_sum.row(Eigen::Index(y / s) * cw + x / s) += residual.px.row(image.index(y, x));
    }
  }
  cell_sum *= inv_area;
  for (int py = 0; py < ch * s; ++py) {
    const int y = std::min(py, h - 1);
    for (int px = 0; px < cw * s; ++px) {
      const int x = std::min(px, w - 1);
      out.grad.px.row(image.index(y, x)) -= cell_sum.row(Eigen::Index(py / s) * cw + px / s);
    }
  }
  return out;
}

// Contrast discrimination: Lc(hazy) - Lc(estimate). The hazy image is data,
// so only the estimate receives a gradient.
template <typename Scalar>
ImageLoss<Scalar> cd_loss(const Image<Scalar>& hazy, const Image<Scalar>& estimate, int s, bool hinge = false) {
  require_same_shape(hazy, estimate, "cd_loss");
  const Scalar lc_hazy = local_contrast(hazy, s).value;
  ImageLoss<Scalar> lc_est = local_contrast(estimate, s);
  ImageLoss<Scalar> out;
  out.value = lc_hazy - lc_est.value;
  out.grad = std::move(lc_est.grad);
  out.grad.px = -out.grad.px;
  if (hinge && out.value < Scalar(0)) {
    out.value = Scalar(0);
    out.grad.px.setZero();
  }
  return out;
}

// Smoothed isotropic total variation with forward differences, averaged over
// the (h - 1) x (w - 1) interior pixels and the channels.
template <typename Scalar>
ImageLoss<Scalar> tv_loss(const Image<Scalar>& image, Scalar eps) {
  using std::sqrt;
  if (image.height < 2 || image.width < 2) {
    throw std::invalid_argument("tv_loss: degenerate lattice");
  }
  const int h = image.height;
  const int w = image.width;
  const Scalar inv_n = Scalar(1) / Scalar(Eigen::Index(h - 1) * (w - 1) * 3);
  ImageLoss<Scalar> out;
  out.grad = Image<Scalar>(h, w);
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      const Eigen::Index p = image.index(y, x);
      const Eigen::Index px = image.index(y, x + 1);
      const Eigen::Index py = image.index(y + 1, x);
      for (int c = 0; c < 3; ++c) {
        const Scalar ux = image.px(px, c) - image.px(p, c);
        const Scalar uy = image.px(py, c) - image.px(p, c);
        const Scalar m = sqrt(ux * ux + uy * uy + eps * eps);
        out.value += m;
        out.grad.px(px, c) += ux / m * inv_n;
        out.grad.px(py, c) += uy / m * inv_n;
        out.grad.px(p, c) -= (ux + uy) / m * inv_n;
      }
    }
  }
  out.value *= inv_n;
  return out;
}

inline double total_loss(double rec, double cons, double cd, double tv, const LossWeights& w) {
  if (!std::isfinite(rec) || !std::isfinite(cons) || !std::isfinite(cd) || !std::isfinite(tv)) {
    throw std::runtime_error("diverged");
  }
  return rec + w.lambda1 * cons + w.lambda2 * cd + w.lambda3 * tv;
}

// Mean squared error over every pixel and channel; gradient w.r.t. predicted.
template <typename Scalar>
ImageLoss<Scalar> mse_loss(const Image<Scalar>& observed, const Image<Scalar>& predicted) {
  require_same_shape(observed, predicted, "mse_loss");
  ImageLoss<Scalar> out;
  out.grad = Image<Scalar>(predicted.height, predicted.width);
  const Eigen::Index n = predicted.px.size();
  if (n == 0) return out;
  const auto diff = (predicted.px - observed.px).eval();
  out.value = diff.square().sum() / Scalar(n);
  out.grad.px = Scalar(2) / Scalar(n) * diff;
  return out;
}

}  // namespace hazefield
