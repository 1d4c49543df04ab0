#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hazefield/camera.hpp"
#include "hazefield/image.hpp"

namespace hazefield {

struct DatasetManifest;
struct Dataset;

struct Primitive {
  enum class Kind { sphere, box };
  Kind kind = Kind::sphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  // Sphere: radius in x. Box: half-extents.
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.5);

  static Primitive sphere(const Eigen::Vector3d& c, double r, const Eigen::Vector3d& albedo) {
    return {Kind::sphere, c, Eigen::Vector3d::Constant(r), albedo};
  }
  static Primitive box(const Eigen::Vector3d& c, const Eigen::Vector3d& half, const Eigen::Vector3d& albedo) {
    return {Kind::box, c, half, albedo};
  }
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  Eigen::Vector3d bbox_min = Eigen::Vector3d::Constant(-1.5);
  Eigen::Vector3d bbox_max = Eigen::Vector3d::Constant(1.5);
  Eigen::Vector3d light_dir = Eigen::Vector3d::UnitZ();
  double ambient = 0.3;

  void validate() const;
};

struct CameraIntrinsics {
  int width = 64;
  int height = 64;
  double focal = 64.0;
  double near = 1.5;
  double far = 7.0;
};

struct RigSpec {
  int n_train = 20;
  int n_test = 5;
  double radius = 4.0;
  double elevation_min_deg = 20.0;
  double elevation_max_deg = 45.0;
  CameraIntrinsics intrinsics;
  std::uint64_t seed = 7;
};

// Named scene presets: "fixture" (three spheres and a box on a ground slab)
// and "single" (one sphere on a slab).
SceneSpec scene_preset(const std::string& name);
std::vector<std::string> scene_preset_names();

// n cameras on a sphere of `radius` looking at the origin (z up), azimuths
// equally spaced from `azimuth_offset_deg`, elevations uniform in the range.
std::vector<Camera> generate_cameras(int n, double radius, std::pair<double, double> elevation_range_deg,
                                     const CameraIntrinsics& intrinsics, std::uint64_t seed = 0,
                                     double azimuth_offset_deg = 0.0);

// Training rig followed by held-out views placed halfway between training azimuths.
std::vector<Camera> generate_rig(const RigSpec& rig);

struct RayHit {
  bool hit = false;
  double distance = 0.0;
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  const Primitive* primitive = nullptr;
};

RayHit intersect_scene(const SceneSpec& scene, const Ray<double>& ray);

struct GroundTruthView {
  Image<double> clean;
  ScalarMap<double> depth;
};

// Exact clean render with Lambertian + ambient shading; misses get the
// background color and depth = far. Depth is distance along the ray, clamped
// to [near, far].
GroundTruthView gt_render(const SceneSpec& scene, const Camera& camera);

struct BuildOptions {
  double beta = 0.162;
  double airlight = 0.8;
  int levels = 256;
  int n_train = 20;  // cameras [0, n_train) train, the rest are held out
};

// The same views as build_dataset, kept in memory (no ground-truth block).
Dataset make_dataset(const SceneSpec& scene, const std::vector<Camera>& cameras, const BuildOptions& options);

// Renders, hazes with the exact depth, quantizes and writes every view plus
// manifest.json under out_dir.
DatasetManifest build_dataset(const SceneSpec& scene, const std::vector<Camera>& cameras, const BuildOptions& options,
                              const std::filesystem::path& out_dir);

}  // namespace hazefield
