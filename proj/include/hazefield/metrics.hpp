#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "hazefield/image.hpp"

namespace hazefield {

inline constexpr double kPsnrCap = 99.0;

// Peak signal-to-noise ratio for images in [0, 1].
template <typename Scalar>
Scalar psnr(const Image<Scalar>& a, const Image<Scalar>& b) {
  require_same_shape(a, b, "psnr");
  if (a.px.size() == 0) throw std::invalid_argument("psnr: empty image");
  const Scalar mse = (a.px - b.px).square().sum() / Scalar(a.px.size());
  if (mse < Scalar(1e-10)) return Scalar(kPsnrCap);
  return Scalar(10) * std::log10(Scalar(1) / mse);
}

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - c;
    k[std::size_t(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += k[std::size_t(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable "valid" filtering of a row-major h x w plane.
inline Eigen::ArrayXXd filter_valid(const Eigen::ArrayXXd& plane, const std::vector<double>& k) {
  const int n = int(k.size());
  const Eigen::Index oh = plane.rows() - n + 1;
  const Eigen::Index ow = plane.cols() - n + 1;
  Eigen::ArrayXXd tmp(plane.rows(), ow);
  for (Eigen::Index y = 0; y < plane.rows(); ++y) {
    for (Eigen::Index x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[std::size_t(i)] * plane(y, x + i);
      tmp(y, x) = s;
    }
  }
  Eigen::ArrayXXd out(oh, ow);
  for (Eigen::Index y = 0; y < oh; ++y) {
    for (Eigen::Index x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[std::size_t(i)] * tmp(y + i, x);
      out(y, x) = s;
    }
  }
  return out;
}

}  // namespace detail

// Structural similarity: 11 x 11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, dynamic range 1, valid windows only, mean over channels.
template <typename Scalar>
double ssim(const Image<Scalar>& a, const Image<Scalar>& b) {
  constexpr int kWindow = 11;
  require_same_shape(a, b, "ssim");
  if (a.height < kWindow || a.width < kWindow) throw std::invalid_argument("ssim: image smaller than 11x11");
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const std::vector<double> k = detail::gaussian_kernel(kWindow, 1.5);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    Eigen::ArrayXXd pa(a.height, a.width), pb(a.height, a.width);
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < a.width; ++x) {
        pa(y, x) = double(a.at(y, x, c));
        pb(y, x) = double(b.at(y, x, c));
      }
    }
    const Eigen::ArrayXXd mu_a = detail::filter_valid(pa, k);
    const Eigen::ArrayXXd mu_b = detail::filter_valid(pb, k);
    const Eigen::ArrayXXd var_a = detail::filter_valid(pa * pa, k) - mu_a * mu_a;
    const Eigen::ArrayXXd var_b = detail::filter_valid(pb * pb, k) - mu_b * mu_b;
    const Eigen::ArrayXXd cov = detail::filter_valid(pa * pb, k) - mu_a * mu_b;
    const Eigen::ArrayXXd map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                                ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    total += map.mean();
  }
  return total / 3.0;
}

struct ParamError {
  double rel_beta = 0.0;
  double rel_a = 0.0;
  double average = 0.0;
};

inline ParamError param_error(double beta_hat, double a_hat, double beta_gt, double a_gt) {
  if (!(beta_gt > 0.0) || !(a_gt > 0.0)) throw std::invalid_argument("param_error: ground truth must be positive");
  ParamError e;
  e.rel_beta = std::abs(beta_hat - beta_gt) / beta_gt;
  e.rel_a = std::abs(a_hat - a_gt) / a_gt;
  e.average = 0.5 * (e.rel_beta + e.rel_a);
  return e;
}

}  // namespace hazefield
