#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "hazefield/activation.hpp"
#include "hazefield/camera.hpp"
#include "hazefield/rng.hpp"

namespace hazefield {

// Explicit radiance field on a regular lattice of nodes spanning
// [bbox_min, bbox_max]. Node (i, j, k) sits at bbox_min + (i, j, k) * spacing
// with spacing = extent / (resolution - 1).
//
// All raw (pre-activation) values live in one flat vector so that a single
// optimizer state can cover the whole group:
//   params[0, n)          density_raw, one per node
//   params[n, 4n)         color_raw, node-major, RGB minor
template <typename Scalar>
class VoxelGrid {
 public:
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  VoxelGrid() = default;

  VoxelGrid(const Eigen::Vector3i& resolution, const Vec3& bbox_min, const Vec3& bbox_max,
            Scalar density_raw = Scalar(-2), Scalar color_raw = Scalar(0),
            const Vec3& background = Vec3::Zero())
      : resolution_(resolution), bbox_min_(bbox_min), bbox_max_(bbox_max), background_(background) {
    if ((resolution.array() < 2).any()) {
      throw std::invalid_argument("voxel grid: resolution must be at least 2 per axis");
    }
    if (!(bbox_min.array() < bbox_max.array()).all()) {
      throw std::invalid_argument("voxel grid: bbox_min must be below bbox_max");
    }
    const Eigen::Index n = node_count();
    params_.resize(4 * n);
    params_.head(n).setConstant(density_raw);
    params_.tail(3 * n).setConstant(color_raw);
  }

  const Eigen::Vector3i& resolution() const { return resolution_; }
  const Vec3& bbox_min() const { return bbox_min_; }
  const Vec3& bbox_max() const { return bbox_max_; }
  Vec3 spacing() const { return (bbox_max_ - bbox_min_).cwiseQuotient((resolution_.array() - 1).matrix().template cast<Scalar>()); }
  const Vec3& background() const { return background_; }
  void set_background(const Vec3& bg) { background_ = bg; }

  Eigen::Index node_count() const {
    return Eigen::Index(resolution_.x()) * resolution_.y() * resolution_.z();
  }
  Eigen::Index node_index(int i, int j, int k) const {
    return (Eigen::Index(k) * resolution_.y() + j) * resolution_.x() + i;
  }

  VectorX& params() { return params_; }
  const VectorX& params() const { return params_; }
  auto density_raw() { return params_.head(node_count()); }
  auto density_raw() const { return params_.head(node_count()); }
  auto color_raw() { return params_.tail(3 * node_count()); }
  auto color_raw() const { return params_.tail(3 * node_count()); }

  bool all_finite() const { return params_.allFinite() && background_.allFinite(); }

 private:
  Eigen::Vector3i resolution_ = Eigen::Vector3i::Constant(2);
  Vec3 bbox_min_ = Vec3::Zero();
  Vec3 bbox_max_ = Vec3::Ones();
  Vec3 background_ = Vec3::Zero();
  VectorX params_;
};

// Gradient accumulator mirroring the grid parameters and the per-image
// atmosphere raws (beta_raw for images [0, m), a_raw for [m, 2m)).
template <typename Scalar>
struct GradBuffer {
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  VectorX grid;
  VectorX atmosphere;

  GradBuffer() = default;
  GradBuffer(Eigen::Index grid_params, Eigen::Index n_images)
      : grid(VectorX::Zero(grid_params)), atmosphere(VectorX::Zero(2 * n_images)) {}

  static GradBuffer like(const VoxelGrid<Scalar>& g, Eigen::Index n_images) {
    return GradBuffer(g.params().size(), n_images);
  }

  Eigen::Index node_count() const { return grid.size() / 4; }
  Eigen::Index image_count() const { return atmosphere.size() / 2; }
  auto d_density_raw() { return grid.head(node_count()); }
  auto d_color_raw() { return grid.tail(3 * node_count()); }
  auto d_beta_raw() { return atmosphere.head(image_count()); }
  auto d_a_raw() { return atmosphere.tail(image_count()); }
  auto d_density_raw() const { return grid.head(node_count()); }
  auto d_color_raw() const { return grid.tail(3 * node_count()); }
  auto d_beta_raw() const { return atmosphere.head(image_count()); }
  auto d_a_raw() const { return atmosphere.tail(image_count()); }

  void set_zero() {
    grid.setZero();
    atmosphere.setZero();
  }
  bool all_finite() const { return grid.allFinite() && atmosphere.allFinite(); }

  GradBuffer& operator+=(const GradBuffer& other) {
    grid += other.grid;
    atmosphere += other.atmosphere;
    return *this;
  }
};

// The eight lattice nodes around a point. `base < 0` marks a point outside
// the bounding box (empty stencil).
template <typename Scalar>
struct TrilinearStencil {
  Eigen::Index base = -1;
  Scalar fx = 0, fy = 0, fz = 0;

  bool empty() const { return base < 0; }

  // Corner c in [0, 8): bit 0 -> +x, bit 1 -> +y, bit 2 -> +z.
  template <typename Grid>
  Eigen::Index corner_index(const Grid& grid, int c) const {
    const Eigen::Index sx = 1;
    const Eigen::Index sy = grid.resolution().x();
    const Eigen::Index sz = sy * grid.resolution().y();
    return base + ((c & 1) ? sx : 0) + ((c & 2) ? sy : 0) + ((c & 4) ? sz : 0);
  }
  Scalar corner_weight(int c) const {
    return ((c & 1) ? fx : Scalar(1) - fx) * ((c & 2) ? fy : Scalar(1) - fy) * ((c & 4) ? fz : Scalar(1) - fz);
  }
};

template <typename Scalar>
struct FieldSample {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  Scalar sigma = 0;
  Vec3 rgb = Vec3::Zero();
  TrilinearStencil<Scalar> stencil;
  // Interpolated raw values, kept for the activation derivatives.
  Scalar density_raw = 0;
  Vec3 color_raw = Vec3::Zero();
};

template <typename Scalar>
TrilinearStencil<Scalar> locate(const VoxelGrid<Scalar>& grid, const Eigen::Matrix<Scalar, 3, 1>& point) {
  using std::floor;
  TrilinearStencil<Scalar> s;
  const auto& lo = grid.bbox_min();
  const auto& hi = grid.bbox_max();
  if ((point.array() < lo.array()).any() || (point.array() > hi.array()).any()) {
    return s;
  }
  const auto& res = grid.resolution();
  Eigen::Index idx[3];
  Scalar frac[3];
  for (int a = 0; a < 3; ++a) {
    const Scalar g = (point[a] - lo[a]) / (hi[a] - lo[a]) * Scalar(res[a] - 1);
    Eigen::Index i0 = static_cast<Eigen::Index>(floor(g));
    if (i0 > res[a] - 2) i0 = res[a] - 2;
    if (i0 < 0) i0 = 0;
    idx[a] = i0;
    frac[a] = g - Scalar(i0);
  }
  s.base = grid.node_index(int(idx[0]), int(idx[1]), int(idx[2]));
  s.fx = frac[0];
  s.fy = frac[1];
  s.fz = frac[2];
  return s;
}

// Trilinear interpolation of raw values followed by activation. Points outside
// the box are empty space: sigma = 0 and the background color.
template <typename Scalar>
FieldSample<Scalar> sample_field(const VoxelGrid<Scalar>& grid, const Eigen::Matrix<Scalar, 3, 1>& point) {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  if (!point.allFinite()) {
    throw std::invalid_argument("invalid sample position");
  }
  FieldSample<Scalar> out;
  out.stencil = locate(grid, point);
  if (out.stencil.empty()) {
    out.sigma = Scalar(0);
    out.rgb = grid.background();
    return out;
  }
  const auto& p = grid.params();
  const Eigen::Index n = grid.node_count();
  Scalar d = 0;
  Vec3 c = Vec3::Zero();
  for (int k = 0; k < 8; ++k) {
    const Eigen::Index idx = out.stencil.corner_index(grid, k);
    const Scalar w = out.stencil.corner_weight(k);
    d += w * p[idx];
    c += w * p.template segment<3>(n + 3 * idx);
  }
  out.density_raw = d;
  out.color_raw = c;
  out.sigma = softplus(d);
  out.rgb = c.unaryExpr([](Scalar x) { return sigmoid(x); });
  return out;
}

template <typename Scalar>
struct PixelOutput {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  Vec3 color = Vec3::Zero();
  Scalar depth = 0;
  Scalar opacity = 0;
};

// Per-sample forward state of one ray, enough to run the exact adjoint.
template <typename Scalar>
struct RayTape {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  struct Sample {
    TrilinearStencil<Scalar> stencil;
    Scalar depth = 0;
    Scalar delta = 0;
    Scalar sigma = 0;
    Scalar dsigma_draw = 0;
    Vec3 rgb = Vec3::Zero();
  };
  std::vector<Sample> samples;
  // transmittance[i] = T_i; transmittance[n] = T after the last sample.
  std::vector<Scalar> transmittance;
  Vec3 background = Vec3::Zero();
  Scalar far = 0;
  Eigen::Index grid_params = 0;
};

// Stratified volume rendering of color, expected depth and opacity along a
// ray. Without `jitter` the samples sit at bin midpoints.
template <typename Scalar>
PixelOutput<Scalar> render_ray(const VoxelGrid<Scalar>& grid, const Ray<Scalar>& ray, int n_samples, Rng* jitter,
                               std::type_identity_t<RayTape<Scalar>*> tape) {
  using std::exp;
  if (n_samples < 2) {
    throw std::invalid_argument("insufficient samples");
  }
  if (!(ray.near < ray.far)) {
    throw std::invalid_argument("render_ray: require near < far");
  }
  const Scalar bin = (ray.far - ray.near) / Scalar(n_samples);

  RayTape<Scalar> local;
  RayTape<Scalar>& tp = tape ? *tape : local;
  tp.samples.resize(std::size_t(n_samples));
  tp.transmittance.resize(std::size_t(n_samples) + 1);
  tp.background = grid.background();
  tp.far = ray.far;
  tp.grid_params = grid.params().size();

  for (int i = 0; i < n_samples; ++i) {
    const Scalar u = jitter ? Scalar(uniform01(*jitter)) : Scalar(0.5);
    tp.samples[i].depth = ray.near + (Scalar(i) + u) * bin;
  }

  PixelOutput<Scalar> out;
  Scalar transmittance = 1;
  Scalar weight_sum = 0;
  for (int i = 0; i < n_samples; ++i) {
    auto& s = tp.samples[i];
    s.delta = (i + 1 < n_samples ? tp.samples[i + 1].depth : ray.far) - s.depth;
    const FieldSample<Scalar> f = sample_field(grid, ray.at(s.depth));
    s.stencil = f.stencil;
    s.sigma = f.sigma;
    s.dsigma_draw = f.stencil.empty() ? Scalar(0) : softplus_grad(f.density_raw);
    s.rgb = f.rgb;

    tp.transmittance[i] = transmittance;
    const Scalar survive = exp(-s.sigma * s.delta);
    const Scalar w = transmittance * (Scalar(1) - survive);
    out.color += w * s.rgb;
    out.depth += w * s.depth;
    weight_sum += w;
    transmittance *= survive;
  }
  tp.transmittance[n_samples] = transmittance;

  out.opacity = weight_sum;
  out.color += (Scalar(1) - weight_sum) * grid.background();
  out.depth += (Scalar(1) - weight_sum) * ray.far;
  return out;
}

// Adjoint of render_ray: accumulates dL/d(params) into grads.grid given the
// cotangents of color, depth and opacity.
template <typename Scalar>
void render_ray_backward(const VoxelGrid<Scalar>& grid, const RayTape<Scalar>& tape,
                         const Eigen::Matrix<Scalar, 3, 1>& d_color, Scalar d_depth, Scalar d_opacity,
                         GradBuffer<Scalar>& grads) {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  if (tape.grid_params != grid.params().size() || grads.grid.size() != grid.params().size()) {
    throw std::invalid_argument("render_ray_backward: tape/grid shape mismatch");
  }
  const std::size_t n = tape.samples.size();
  if (tape.transmittance.size() != n + 1) {
    throw std::invalid_argument("render_ray_backward: malformed tape");
  }
  if (d_color.isZero(0) && d_depth == Scalar(0) && d_opacity == Scalar(0)) {
    return;
  }
  const Eigen::Index nodes = grid.node_count();

  // dL/dw_i for each sample weight, including the (1 - W) background terms.
  // w_i = T_i - T_{i+1}; dw_k/dsigma_k = delta_k T_{k+1};
  // dw_i/dsigma_k = -delta_k w_i for i > k.
  Scalar suffix = 0;  // sum_{i > k} w_i g_i
  for (std::size_t kk = n; kk-- > 0;) {
    const auto& s = tape.samples[kk];
    const Scalar t_k = tape.transmittance[kk];
    const Scalar t_next = tape.transmittance[kk + 1];
    const Scalar w = t_k - t_next;
    const Scalar g = d_color.dot(s.rgb - tape.background) + d_depth * (s.depth - tape.far) + d_opacity;

    if (!s.stencil.empty()) {
      const Scalar d_sigma = s.delta * (t_next * g - suffix);
      const Scalar d_draw = d_sigma * s.dsigma_draw;
      const Vec3 d_craw = (w * d_color).cwiseProduct(s.rgb.cwiseProduct(Vec3::Ones() - s.rgb));
      for (int c = 0; c < 8; ++c) {
        const Eigen::Index idx = s.stencil.corner_index(grid, c);
        const Scalar cw = s.stencil.corner_weight(c);
        grads.grid[idx] += cw * d_draw;
        grads.grid.template segment<3>(nodes + 3 * idx) += cw * d_craw;
      }
    }
    suffix += w * g;
  }
}

}  // namespace hazefield
