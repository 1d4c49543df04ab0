#pragma once

#include <algorithm>
#include <stdexcept>
#include <thread>
#include <type_traits>
#include <vector>

#include "hazefield/field.hpp"
#include "hazefield/image.hpp"

namespace hazefield {

// Regular pixel lattice: rows/cols selected pixels starting at (offset_x,
// offset_y) with spacing `stride` along both axes.
struct SubgridSpec {
  int stride = 1;
  int offset_x = 0;
  int offset_y = 0;
  int rows = 0;
  int cols = 0;

  int pixel_x(int col) const { return offset_x + col * stride; }
  int pixel_y(int row) const { return offset_y + row * stride; }

  static SubgridSpec full(int height, int width) { return {1, 0, 0, height, width}; }

  // Largest lattice with the given stride and offset inside a height x width image.
  static SubgridSpec fit(int height, int width, int stride, int offset_x, int offset_y) {
    SubgridSpec s{stride, offset_x, offset_y, 0, 0};
    s.rows = (height - offset_y + stride - 1) / stride;
    s.cols = (width - offset_x + stride - 1) / stride;
    return s;
  }

  void validate(int height, int width) const {
    if (stride < 1 || rows < 1 || cols < 1 || offset_x < 0 || offset_y < 0 ||
        pixel_x(cols - 1) >= width || pixel_y(rows - 1) >= height) {
      throw std::invalid_argument("subgrid lattice out of image bounds");
    }
  }
};

template <typename Scalar>
struct RenderImage {
  Image<Scalar> color;
  ScalarMap<Scalar> depth;
  ScalarMap<Scalar> opacity;
};

template <typename Scalar>
struct SubgridRender {
  RenderImage<Scalar> out;
  std::vector<RayTape<Scalar>> tapes;
};

namespace detail {

template <typename Fn>
void parallel_chunks(int count, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    fn(0, 0, count);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(threads));
  for (int w = 0; w < threads; ++w) {
    const int begin = int(std::int64_t(count) * w / threads);
    const int end = int(std::int64_t(count) * (w + 1) / threads);
    pool.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

// One ray per lattice pixel through the pixel center. With `jitter`, a single
// draw seeds an independent stream per ray, so the result does not depend on
// the thread count.
template <typename Scalar>
SubgridRender<Scalar> render_subgrid(const VoxelGrid<Scalar>& grid, const Camera& camera, const SubgridSpec& pixels,
                                     int n_samples, Rng* jitter, bool keep_tapes = true, int threads = 1) {
  pixels.validate(camera.height, camera.width);
  if (n_samples < 2) {
    throw std::invalid_argument("insufficient samples");
  }
  SubgridRender<Scalar> r;
  r.out.color = Image<Scalar>(pixels.rows, pixels.cols);
  r.out.depth = ScalarMap<Scalar>(pixels.rows, pixels.cols);
  r.out.opacity = ScalarMap<Scalar>(pixels.rows, pixels.cols);
  const int count = pixels.rows * pixels.cols;
  if (keep_tapes) r.tapes.resize(std::size_t(count));
  const std::uint64_t stream_seed = jitter ? (*jitter)() : 0;

  detail::parallel_chunks(count, threads, [&](int, int begin, int end) {
    RayTape<Scalar> scratch;
    for (int p = begin; p < end; ++p) {
      const int row = p / pixels.cols;
      const int col = p % pixels.cols;
      const Ray<Scalar> ray = camera.pixel_ray<Scalar>(pixels.pixel_x(col), pixels.pixel_y(row));
      Rng ray_rng = derive_rng(stream_seed, std::uint64_t(p));
      RayTape<Scalar>* tape = keep_tapes ? &r.tapes[std::size_t(p)] : &scratch;
      const PixelOutput<Scalar> px = render_ray(grid, ray, n_samples, jitter ? &ray_rng : nullptr, tape);
      r.out.color.px.row(p) = px.color.transpose();
      r.out.depth.v(p) = px.depth;
      r.out.opacity.v(p) = px.opacity;
    }
  });
  return r;
}

// Backward over a rendered lattice. With several threads each worker owns a
// buffer; buffers are summed in worker order so the result is reproducible
// for a fixed thread count.
template <typename Scalar>
void render_subgrid_backward(const VoxelGrid<Scalar>& grid, const SubgridRender<Scalar>& render,
                             const Image<Scalar>& d_color, std::type_identity_t<const ScalarMap<Scalar>*> d_depth,
                             std::type_identity_t<const ScalarMap<Scalar>*> d_opacity, GradBuffer<Scalar>& grads, int threads = 1) {
  const int count = int(render.tapes.size());
  if (count != d_color.pixel_count() || (d_depth && d_depth->v.size() != count) ||
      (d_opacity && d_opacity->v.size() != count)) {
    throw std::invalid_argument("render_subgrid_backward: cotangent shape mismatch");
  }
  threads = std::max(1, std::min(threads, count));
  auto body = [&](GradBuffer<Scalar>& target, int begin, int end) {
    for (int p = begin; p < end; ++p) {
      const Eigen::Matrix<Scalar, 3, 1> dc = d_color.px.row(p).transpose();
      render_ray_backward(grid, render.tapes[std::size_t(p)], dc, d_depth ? d_depth->v(p) : Scalar(0),
                          d_opacity ? d_opacity->v(p) : Scalar(0), target);
    }
  };
  if (threads == 1) {
    body(grads, 0, count);
    return;
  }
  std::vector<GradBuffer<Scalar>> partial(std::size_t(threads), GradBuffer<Scalar>(grads.grid.size(), 0));
  detail::parallel_chunks(count, threads, [&](int w, int begin, int end) { body(partial[std::size_t(w)], begin, end); });
  for (const auto& part : partial) grads.grid += part.grid;
}

// Deterministic full-frame render (no jitter, no tapes).
template <typename Scalar>
RenderImage<Scalar> render_image(const VoxelGrid<Scalar>& grid, const Camera& camera, int n_samples, int threads = 1) {
  return render_subgrid(grid, camera, SubgridSpec::full(camera.height, camera.width), n_samples, nullptr, false, threads)
      .out;
}

}  // namespace hazefield
