#include "hazefield/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hazefield {

namespace fs = std::filesystem;
using nlohmann::json;

void write_png(const fs::path& path, const Image<double>& image) {
  std::vector<std::uint8_t> buf(std::size_t(image.pixel_count()) * 3);
  for (Eigen::Index p = 0; p < image.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(image.px(p, c), 0.0, 1.0);
      buf[std::size_t(p) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = png_uint_32(image.width);
  img.height = png_uint_32(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + msg);
  }
}

Image<double> read_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw CorruptArtifact("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw CorruptArtifact("cannot decode PNG " + path.string() + ": " + msg);
  }
  Image<double> out(int(img.height), int(img.width));
  for (Eigen::Index p = 0; p < out.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) out.px(p, c) = buf[std::size_t(p) * 3 + c] / 255.0;
  }
  return out;
}

namespace {

void write_float_le(std::ostream& os, float f) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  char b[4] = {char(u & 0xff), char((u >> 8) & 0xff), char((u >> 16) & 0xff), char((u >> 24) & 0xff)};
  os.write(b, 4);
}

template <typename Getter>
void write_pfm_impl(const fs::path& path, int h, int w, int channels, Getter&& get) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write PFM " + path.string());
  os << (channels == 3 ? "PF" : "Pf") << "\n" << w << " " << h << "\n-1.0\n";
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) write_float_le(os, float(get(y, x, c)));
    }
  }
  if (!os) throw std::runtime_error("cannot write PFM " + path.string());
}

}  // namespace

void write_pfm(const fs::path& path, const ScalarMap<double>& map) {
  write_pfm_impl(path, map.height, map.width, 1, [&](int y, int x, int) { return map.at(y, x); });
}

void write_pfm(const fs::path& path, const Image<double>& image) {
  write_pfm_impl(path, image.height, image.width, 3, [&](int y, int x, int c) { return image.at(y, x, c); });
}

ScalarMap<double> read_pfm_map(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptArtifact("cannot read PFM " + path.string());
  std::string magic;
  int w = 0;
  int h = 0;
  double scale = 0.0;
  is >> magic >> w >> h >> scale;
  is.get();
  if (magic != "Pf" || w <= 0 || h <= 0 || scale >= 0.0) {
    throw CorruptArtifact("unsupported PFM " + path.string());
  }
  ScalarMap<double> m(h, w);
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      unsigned char b[4];
      if (!is.read(reinterpret_cast<char*>(b), 4)) throw CorruptArtifact("truncated PFM " + path.string());
      const std::uint32_t u = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
                              std::uint32_t(b[3]) << 24;
      m.at(y, x) = std::bit_cast<float>(u);
    }
  }
  return m;
}

json camera_to_json(const Camera& c) {
  std::vector<double> pose;
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 4; ++k) pose.push_back(c.cam_to_world(r, k));
  }
  return json{{"width", c.width},
              {"height", c.height},
              {"focal", c.focal},
              {"principal_point", {c.principal_point.x(), c.principal_point.y()}},
              {"cam_to_world", pose},
              {"near", c.near},
              {"far", c.far}};
}

Camera camera_from_json(const json& j) {
  Camera c;
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.focal = j.at("focal").get<double>();
  const auto pp = j.at("principal_point").get<std::vector<double>>();
  if (pp.size() != 2) throw CorruptArtifact("camera: principal_point needs 2 entries");
  c.principal_point = Eigen::Vector2d(pp[0], pp[1]);
  const auto pose = j.at("cam_to_world").get<std::vector<double>>();
  if (pose.size() != 12) throw CorruptArtifact("camera: cam_to_world needs 12 entries");
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 4; ++k) c.cam_to_world(r, k) = pose[std::size_t(r * 4 + k)];
  }
  c.near = j.value("near", 0.1);
  c.far = j.value("far", 10.0);
  return c;
}

json DatasetManifest::to_json() const {
  json cams = json::array();
  for (const auto& c : cameras) cams.push_back(camera_to_json(c));
  json j{{"cameras", cams},
         {"images", images},
         {"split", split},
         {"background", {background.x(), background.y(), background.z()}},
         {"near", near},
         {"far", far},
         {"levels", levels}};
  if (gt) {
    j["gt"] = json{{"evaluation_only", true}, {"beta", gt->beta}, {"A", gt->airlight}, {"clean", gt->clean}, {"depth", gt->depth}};
  }
  return j;
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  DatasetManifest m;
  try {
    for (const auto& c : j.at("cameras")) m.cameras.push_back(camera_from_json(c));
    m.images = j.at("images").get<std::vector<std::string>>();
    if (j.contains("split")) {
      m.split = j.at("split").get<std::vector<std::string>>();
    } else {
      m.split.assign(m.images.size(), "train");
    }
    const auto bg = j.at("background").get<std::vector<double>>();
    if (bg.size() != 3) throw CorruptArtifact("manifest: background needs 3 entries");
    m.background = Eigen::Vector3d(bg[0], bg[1], bg[2]);
    m.near = j.at("near").get<double>();
    m.far = j.at("far").get<double>();
    m.levels = j.at("levels").get<int>();
    if (j.contains("gt")) {
      const auto& g = j.at("gt");
      m.gt = GroundTruth{g.at("beta").get<double>(), g.at("A").get<double>(), g.at("clean").get<std::vector<std::string>>(),
                         g.at("depth").get<std::vector<std::string>>()};
    }
  } catch (const json::exception& e) {
    throw CorruptArtifact(std::string("malformed manifest: ") + e.what());
  }
  if (m.cameras.size() != m.images.size() || m.split.size() != m.images.size()) {
    throw CorruptArtifact("manifest: cameras, images and split must have one entry per image");
  }
  if (m.gt && (m.gt->clean.size() != m.images.size() || m.gt->depth.size() != m.images.size())) {
    throw CorruptArtifact("manifest: ground-truth lists must have one entry per image");
  }
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  write_text(path, manifest.to_json().dump(2) + "\n");
}

fs::path manifest_path(const fs::path& path) {
  return fs::is_directory(path) ? path / "manifest.json" : path;
}

DatasetManifest load_manifest(const fs::path& path) {
  const fs::path file = manifest_path(path);
  if (!fs::exists(file)) throw std::invalid_argument("dataset not found: " + file.string());
  json j;
  try {
    j = json::parse(read_text(file));
  } catch (const json::exception& e) {
    throw CorruptArtifact(std::string("malformed manifest: ") + e.what());
  }
  return DatasetManifest::from_json(j);
}

Dataset load_dataset(const fs::path& path) {
  const fs::path file = manifest_path(path);
  const DatasetManifest m = load_manifest(file);
  const fs::path root = file.parent_path();
  Dataset d;
  d.cameras = m.cameras;
  d.background = m.background;
  d.near = m.near;
  d.far = m.far;
  d.levels = m.levels;
  for (std::size_t i = 0; i < m.images.size(); ++i) {
    Image<double> img = read_png(root / m.images[i]);
    if (img.height != m.cameras[i].height || img.width != m.cameras[i].width) {
      throw CorruptArtifact("image size does not match its camera: " + m.images[i]);
    }
    d.images.push_back(quantize(img, m.levels));
    (m.split[i] == "test" ? d.test : d.train).push_back(int(i));
  }
  if (d.train.empty()) throw std::invalid_argument("dataset has no training views");
  return d;
}

EvalGroundTruth load_ground_truth(const fs::path& path) {
  const fs::path file = manifest_path(path);
  const DatasetManifest m = load_manifest(file);
  if (!m.gt) throw std::invalid_argument("dataset lacks evaluation ground truth");
  const fs::path root = file.parent_path();
  EvalGroundTruth gt;
  gt.beta = m.gt->beta;
  gt.airlight = m.gt->airlight;
  for (std::size_t i = 0; i < m.images.size(); ++i) {
    gt.clean.push_back(read_png(root / m.gt->clean[i]));
    gt.depth.push_back(read_pfm_map(root / m.gt->depth[i]));
  }
  return gt;
}

}  // namespace hazefield
