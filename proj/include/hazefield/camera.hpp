#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace hazefield {

template <typename Scalar>
struct Ray {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  Scalar near = Scalar(0);
  Scalar far = Scalar(1);

  Vec3 at(Scalar t) const { return origin + t * direction; }
};

// Pinhole camera. Camera frame: x right, y down, z forward.
// cam_to_world = [R | position].
struct Camera {
  int width = 0;
  int height = 0;
  double focal = 1.0;
  Eigen::Vector2d principal_point = Eigen::Vector2d::Zero();
  Eigen::Matrix<double, 3, 4> cam_to_world = Eigen::Matrix<double, 3, 4>::Identity();
  double near = 0.1;
  double far = 10.0;

  Eigen::Matrix3d rotation() const { return cam_to_world.leftCols<3>(); }
  Eigen::Vector3d position() const { return cam_to_world.col(3); }
  Eigen::Vector3d forward() const { return cam_to_world.col(2); }

  void validate() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera: non-positive image size");
    if (!(focal > 0.0)) throw std::invalid_argument("camera: focal must be positive");
    if (!(near > 0.0 && near < far)) throw std::invalid_argument("camera: require 0 < near < far");
    const Eigen::Matrix3d r = rotation();
    if (!(r.transpose() * r).isIdentity(1e-6) || std::abs(r.determinant() - 1.0) > 1e-6) {
      throw std::invalid_argument("camera: rotation is not a proper rotation");
    }
  }

  // Ray through continuous pixel coordinate (px, py); pixel (x, y) has its
  // center at (x + 0.5, y + 0.5).
  template <typename Scalar = double>
  Ray<Scalar> ray(double px, double py) const {
    const Eigen::Vector3d dir_cam((px - principal_point.x()) / focal, (py - principal_point.y()) / focal, 1.0);
    Ray<Scalar> r;
    r.origin = position().cast<Scalar>();
    r.direction = (rotation() * dir_cam).normalized().cast<Scalar>();
    r.near = Scalar(near);
    r.far = Scalar(far);
    return r;
  }

  template <typename Scalar = double>
  Ray<Scalar> pixel_ray(int x, int y) const {
    return ray<Scalar>(x + 0.5, y + 0.5);
  }
};

// Camera at `eye` looking at `target` with world up `up`.
inline Eigen::Matrix<double, 3, 4> look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                                           const Eigen::Vector3d& up = Eigen::Vector3d::UnitZ()) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-9) {
    right = forward.cross(Eigen::Vector3d::UnitX());
  }
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix<double, 3, 4> m;
  m.col(0) = right;
  m.col(1) = down;
  m.col(2) = forward;
  m.col(3) = eye;
  return m;
}

}  // namespace hazefield
