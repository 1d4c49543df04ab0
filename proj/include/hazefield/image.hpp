#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace hazefield {

// Row-major pixel list: row (y * width + x) holds the RGB triple.
template <typename Scalar>
using Pixels = Eigen::Array<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

template <typename Scalar>
struct Image {
  int height = 0;
  int width = 0;
  Pixels<Scalar> px;

  Image() = default;
  Image(int h, int w) : height(h), width(w), px(Pixels<Scalar>::Zero(Eigen::Index(h) * w, 3)) {}

  static Image constant(int h, int w, Scalar value) {
    Image img(h, w);
    img.px.setConstant(value);
    return img;
  }

  Eigen::Index index(int y, int x) const { return Eigen::Index(y) * width + x; }
  Scalar& at(int y, int x, int c) { return px(index(y, x), c); }
  Scalar at(int y, int x, int c) const { return px(index(y, x), c); }
  Eigen::Index pixel_count() const { return Eigen::Index(height) * width; }

  template <typename Other>
  Image<Other> cast() const {
    Image<Other> out;
    out.height = height;
    out.width = width;
    out.px = px.template cast<Other>();
    return out;
  }
};

// Single-channel map (depth, opacity, transmission).
template <typename Scalar>
struct ScalarMap {
  int height = 0;
  int width = 0;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> v;

  ScalarMap() = default;
  ScalarMap(int h, int w) : height(h), width(w), v(Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(Eigen::Index(h) * w)) {}

  static ScalarMap constant(int h, int w, Scalar value) {
    ScalarMap m(h, w);
    m.v.setConstant(value);
    return m;
  }

  Scalar& at(int y, int x) { return v(Eigen::Index(y) * width + x); }
  Scalar at(int y, int x) const { return v(Eigen::Index(y) * width + x); }
};

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width) + ")");
  }
}

}  // namespace hazefield
