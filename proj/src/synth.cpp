#include "hazefield/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "hazefield/haze.hpp"
#include "hazefield/io.hpp"
#include "hazefield/rng.hpp"

namespace hazefield {

namespace {

std::string view_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03zu", i);
  return buf;
}

bool intersect_sphere(const Primitive& p, const Ray<double>& ray, double& t_hit, Eigen::Vector3d& normal) {
  const double r = p.size.x();
  const Eigen::Vector3d oc = ray.origin - p.center;
  const double b = oc.dot(ray.direction);
  const double c = oc.squaredNorm() - r * r;
  const double disc = b * b - c;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= 1e-9) t = -b + sq;
  if (t <= 1e-9) return false;
  t_hit = t;
  normal = (ray.at(t) - p.center).normalized();
  return true;
}

bool intersect_box(const Primitive& p, const Ray<double>& ray, double& t_hit, Eigen::Vector3d& normal) {
  const Eigen::Vector3d lo = p.center - p.size;
  const Eigen::Vector3d hi = p.center + p.size;
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  int axis0 = -1;
  int axis1 = -1;
  for (int a = 0; a < 3; ++a) {
    const double d = ray.direction[a];
    if (std::abs(d) < 1e-15) {
      if (ray.origin[a] < lo[a] || ray.origin[a] > hi[a]) return false;
      continue;
    }
    double ta = (lo[a] - ray.origin[a]) / d;
    double tb = (hi[a] - ray.origin[a]) / d;
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      axis0 = a;
    }
    if (tb < t1) {
      t1 = tb;
      axis1 = a;
    }
    if (t0 > t1) return false;
  }
  int axis = axis0;
  double t = t0;
  if (t <= 1e-9) {
    t = t1;
    axis = axis1;
  }
  if (t <= 1e-9 || axis < 0) return false;
  t_hit = t;
  normal = Eigen::Vector3d::Zero();
  normal[axis] = ray.direction[axis] > 0.0 ? -1.0 : 1.0;
  return true;
}

}  // namespace

void SceneSpec::validate() const {
  if (primitives.empty()) throw std::invalid_argument("scene: at least one primitive required");
  if (std::abs(light_dir.norm() - 1.0) > 1e-9) throw std::invalid_argument("scene: light_dir must be unit length");
  if (ambient < 0.0 || ambient > 1.0) throw std::invalid_argument("scene: ambient must lie in [0, 1]");
  if (!(bbox_min.array() < bbox_max.array()).all()) throw std::invalid_argument("scene: empty bbox");
  for (const auto& p : primitives) {
    if (!(p.size.array() > 0.0).all()) throw std::invalid_argument("scene: primitive size must be positive");
    const Eigen::Vector3d ext = p.kind == Primitive::Kind::sphere ? Eigen::Vector3d::Constant(p.size.x()) : p.size;
    if (((p.center - ext).array() < bbox_min.array()).any() || ((p.center + ext).array() > bbox_max.array()).any()) {
      throw std::invalid_argument("scene: primitive outside the scene bbox");
    }
    if ((p.albedo.array() < 0.0).any() || (p.albedo.array() > 1.0).any()) {
      throw std::invalid_argument("scene: albedo outside [0, 1]");
    }
  }
}

SceneSpec scene_preset(const std::string& name) {
  SceneSpec s;
  s.background = Eigen::Vector3d(0.25, 0.45, 0.7);
  s.light_dir = Eigen::Vector3d(0.4, 0.3, 0.866).normalized();
  s.ambient = 0.3;
  const auto slab = Primitive::box({0.0, 0.0, -1.1}, {1.4, 1.4, 0.1}, {0.6, 0.55, 0.5});
  if (name == "fixture") {
    s.primitives = {
        slab,
        Primitive::sphere({-0.5, -0.4, -0.45}, 0.55, {0.85, 0.2, 0.15}),
        Primitive::sphere({0.65, 0.35, -0.6}, 0.4, {0.2, 0.75, 0.3}),
        Primitive::sphere({-0.1, 0.75, -0.7}, 0.3, {0.15, 0.3, 0.85}),
        Primitive::box({0.45, -0.65, -0.65}, {0.3, 0.3, 0.35}, {0.9, 0.8, 0.2}),
    };
  } else if (name == "single") {
    s.primitives = {slab, Primitive::sphere({0.0, 0.0, -0.4}, 0.6, {0.85, 0.3, 0.2})};
  } else {
    throw std::invalid_argument("unknown scene preset: " + name);
  }
  s.validate();
  return s;
}

std::vector<std::string> scene_preset_names() { return {"fixture", "single"}; }

std::vector<Camera> generate_cameras(int n, double radius, std::pair<double, double> elevation_range_deg,
                                     const CameraIntrinsics& intrinsics, std::uint64_t seed,
                                     double azimuth_offset_deg) {
  if (n < 2) throw std::invalid_argument("generate_cameras: need at least 2 cameras");
  if (!(radius > 0.0)) throw std::invalid_argument("generate_cameras: radius must be positive");
  const auto [el_lo, el_hi] = elevation_range_deg;
  if (el_lo > el_hi || std::abs(el_lo) >= 90.0 || std::abs(el_hi) >= 90.0) {
    throw std::invalid_argument("generate_cameras: bad elevation range");
  }
  constexpr double deg = std::numbers::pi / 180.0;
  Rng rng(seed);
  std::vector<Camera> cams;
  cams.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    const double az = (azimuth_offset_deg + 360.0 * i / n) * deg;
    const double el = (el_lo + (el_hi - el_lo) * uniform01(rng)) * deg;
    const Eigen::Vector3d eye(radius * std::cos(el) * std::cos(az), radius * std::cos(el) * std::sin(az),
                              radius * std::sin(el));
    Camera c;
    c.width = intrinsics.width;
    c.height = intrinsics.height;
    c.focal = intrinsics.focal;
    c.principal_point = Eigen::Vector2d(0.5 * intrinsics.width, 0.5 * intrinsics.height);
    c.cam_to_world = look_at(eye, Eigen::Vector3d::Zero());
    c.near = intrinsics.near;
    c.far = intrinsics.far;
    c.validate();
    cams.push_back(c);
  }
  return cams;
}

std::vector<Camera> generate_rig(const RigSpec& rig) {
  auto cams = generate_cameras(rig.n_train, rig.radius, {rig.elevation_min_deg, rig.elevation_max_deg}, rig.intrinsics,
                               rig.seed);
  if (rig.n_test > 0) {
    const double offset = 180.0 / rig.n_train;
    std::vector<Camera> test;
    if (rig.n_test == 1) {
      test = generate_cameras(2, rig.radius, {rig.elevation_min_deg, rig.elevation_max_deg}, rig.intrinsics,
                              rig.seed + 1, offset);
      test.resize(1);
    } else {
      test = generate_cameras(rig.n_test, rig.radius, {rig.elevation_min_deg, rig.elevation_max_deg}, rig.intrinsics,
                              rig.seed + 1, offset);
    }
    cams.insert(cams.end(), test.begin(), test.end());
  }
  return cams;
}

RayHit intersect_scene(const SceneSpec& scene, const Ray<double>& ray) {
  RayHit best;
  best.distance = std::numeric_limits<double>::infinity();
  for (const auto& p : scene.primitives) {
    double t = 0.0;
    Eigen::Vector3d n;
    const bool hit = p.kind == Primitive::Kind::sphere ? intersect_sphere(p, ray, t, n) : intersect_box(p, ray, t, n);
    if (hit && t < best.distance) {
      best.hit = true;
      best.distance = t;
      best.normal = n;
      best.primitive = &p;
    }
  }
  return best;
}

GroundTruthView gt_render(const SceneSpec& scene, const Camera& camera) {
  GroundTruthView v;
  v.clean = Image<double>(camera.height, camera.width);
  v.depth = ScalarMap<double>(camera.height, camera.width);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const Ray<double> ray = camera.pixel_ray<double>(x, y);
      const RayHit hit = intersect_scene(scene, ray);
      const Eigen::Index p = v.clean.index(y, x);
      if (!hit.hit || hit.distance > camera.far) {
        v.clean.px.row(p) = scene.background.transpose();
        v.depth.v(p) = camera.far;
        continue;
      }
      const double lambert = std::max(0.0, hit.normal.dot(scene.light_dir));
      const double shade = scene.ambient + (1.0 - scene.ambient) * lambert;
      v.clean.px.row(p) = (hit.primitive->albedo * shade).transpose();
      v.depth.v(p) = std::clamp(hit.distance, camera.near, camera.far);
    }
  }
  return v;
}

namespace {

void check_build(const SceneSpec& scene, const std::vector<Camera>& cameras, const BuildOptions& options) {
  if (!(options.beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!(options.airlight > 0.0 && options.airlight < kAirlightMax)) {
    throw std::invalid_argument("A must lie in (0, 1.5)");
  }
  if (options.levels < 2) throw std::invalid_argument("levels must be at least 2");
  if (cameras.empty()) throw std::invalid_argument("no cameras");
  for (const Camera& cam : cameras) {
    if (cam.near != cameras.front().near || cam.far != cameras.front().far) {
      throw std::invalid_argument("cameras must share near/far");
    }
  }
  scene.validate();
}

QuantizedImage<double> haze_view(const GroundTruthView& gt, const BuildOptions& options) {
  Image<double> hazy = apply_asm(gt.clean, gt.depth, options.beta, options.airlight);
  hazy.px = hazy.px.max(0.0).min(1.0);
  return quantize(hazy, options.levels);
}

}  // namespace

Dataset make_dataset(const SceneSpec& scene, const std::vector<Camera>& cameras, const BuildOptions& options) {
  check_build(scene, cameras, options);
  Dataset d;
  d.background = scene.background;
  d.near = cameras.front().near;
  d.far = cameras.front().far;
  d.levels = options.levels;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    d.cameras.push_back(cameras[i]);
    d.images.push_back(haze_view(gt_render(scene, cameras[i]), options));
    (int(i) < options.n_train ? d.train : d.test).push_back(int(i));
  }
  return d;
}

DatasetManifest build_dataset(const SceneSpec& scene, const std::vector<Camera>& cameras, const BuildOptions& options,
                              const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  check_build(scene, cameras, options);

  std::error_code ec;
  fs::create_directories(out_dir / "hazy", ec);
  fs::create_directories(out_dir / "clean", ec);
  fs::create_directories(out_dir / "depth", ec);
  if (ec || !fs::is_directory(out_dir / "hazy")) {
    throw std::runtime_error("cannot create output directory " + out_dir.string());
  }

  DatasetManifest m;
  m.background = scene.background;
  m.near = cameras.front().near;
  m.far = cameras.front().far;
  m.levels = options.levels;
  m.gt = DatasetManifest::GroundTruth{options.beta, options.airlight, {}, {}};
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const Camera& cam = cameras[i];
    const GroundTruthView gt = gt_render(scene, cam);
    const QuantizedImage<double> q = haze_view(gt, options);

    const std::string name = view_name(i);
    const std::string hazy_rel = "hazy/" + name + ".png";
    const std::string clean_rel = "clean/" + name + ".png";
    const std::string depth_rel = "depth/" + name + ".pfm";
    write_png(out_dir / hazy_rel, q.values);
    write_png(out_dir / clean_rel, gt.clean);
    write_pfm(out_dir / depth_rel, gt.depth);

    m.cameras.push_back(cam);
    m.images.push_back(hazy_rel);
    m.split.push_back(int(i) < options.n_train ? "train" : "test");
    m.gt->clean.push_back(clean_rel);
    m.gt->depth.push_back(depth_rel);
  }
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace hazefield
