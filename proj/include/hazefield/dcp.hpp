#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "hazefield/image.hpp"

namespace hazefield {

// Per-pixel channel minimum followed by a patch x patch minimum filter
// (window clipped at the border).
template <typename Scalar>
ScalarMap<Scalar> dark_channel(const Image<Scalar>& image, int patch) {
  const int h = image.height;
  const int w = image.width;
  const int r = patch / 2;
  ScalarMap<Scalar> cmin(h, w);
  for (Eigen::Index p = 0; p < image.pixel_count(); ++p) cmin.v(p) = image.px.row(p).minCoeff();
  ScalarMap<Scalar> rows(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Scalar m = cmin.at(y, x);
      for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) m = std::min(m, cmin.at(y, xx));
      rows.at(y, x) = m;
    }
  }
  ScalarMap<Scalar> out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Scalar m = rows.at(y, x);
      for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy) m = std::min(m, rows.at(yy, x));
      out.at(y, x) = m;
    }
  }
  return out;
}

template <typename Scalar>
struct DcpResult {
  Image<Scalar> dehazed;
  ScalarMap<Scalar> transmission;  // before the t0 floor
  Eigen::Matrix<Scalar, 3, 1> airlight;
};

// Dark-channel-prior dehazing without transmission refinement.
template <typename Scalar>
DcpResult<Scalar> dcp_dehaze_full(const Image<Scalar>& hazy, Scalar omega = Scalar(0.95), int patch = 15,
                                  Scalar t0 = Scalar(0.1)) {
  if (patch < 1 || hazy.height < patch || hazy.width < patch) {
    throw std::invalid_argument("dcp_dehaze: image smaller than the patch");
  }
  if (!(omega > Scalar(0) && omega <= Scalar(1)) || !(t0 > Scalar(0) && t0 <= Scalar(1))) {
    throw std::invalid_argument("dcp_dehaze: omega and t0 must lie in (0, 1]");
  }
  if (!hazy.px.allFinite()) throw std::invalid_argument("dcp_dehaze: non-finite pixels");

  const ScalarMap<Scalar> dark = dark_channel(hazy, patch);
  const Eigen::Index n = hazy.pixel_count();
  const Eigen::Index top = std::max<Eigen::Index>(1, n / 1000);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::partial_sort(order.begin(), order.begin() + top, order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return dark.v(a) != dark.v(b) ? dark.v(a) > dark.v(b) : a < b;
  });
  Eigen::Index best = order[0];
  for (Eigen::Index i = 1; i < top; ++i) {
    if (hazy.px.row(order[std::size_t(i)]).sum() > hazy.px.row(best).sum()) best = order[std::size_t(i)];
  }

  DcpResult<Scalar> r;
  r.airlight = hazy.px.row(best).transpose().matrix().cwiseMax(Scalar(1e-6));
  Image<Scalar> normalized = hazy;
  for (int c = 0; c < 3; ++c) normalized.px.col(c) /= r.airlight(c);
  const ScalarMap<Scalar> dark_n = dark_channel(normalized, patch);
  r.transmission = ScalarMap<Scalar>(hazy.height, hazy.width);
  r.transmission.v = Scalar(1) - omega * dark_n.v;
  r.dehazed = Image<Scalar>(hazy.height, hazy.width);
  for (Eigen::Index p = 0; p < n; ++p) {
    const Scalar t = std::max(r.transmission.v(p), t0);
    for (int c = 0; c < 3; ++c) {
      const Scalar j = (hazy.px(p, c) - r.airlight(c)) / t + r.airlight(c);
      r.dehazed.px(p, c) = std::clamp(j, Scalar(0), Scalar(1));
    }
  }
  return r;
}

template <typename Scalar>
Image<Scalar> dcp_dehaze(const Image<Scalar>& hazy, Scalar omega = Scalar(0.95), int patch = 15, Scalar t0 = Scalar(0.1)) {
  return dcp_dehaze_full(hazy, omega, patch, t0).dehazed;
}

}  // namespace hazefield
