#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "hazefield/camera.hpp"
#include "hazefield/haze.hpp"
#include "hazefield/image.hpp"

namespace hazefield {

// Thrown for unreadable or malformed artifacts (bad magic, truncated files).
class CorruptArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit RGB PNG. Values are clamped to [0, 1] and rounded to k / 255.
void write_png(const std::filesystem::path& path, const Image<double>& image);
Image<double> read_png(const std::filesystem::path& path);

// PFM, little-endian (scale -1.0), rows stored bottom to top.
void write_pfm(const std::filesystem::path& path, const ScalarMap<double>& map);
void write_pfm(const std::filesystem::path& path, const Image<double>& image);
ScalarMap<double> read_pfm_map(const std::filesystem::path& path);

nlohmann::json camera_to_json(const Camera& camera);
Camera camera_from_json(const nlohmann::json& j);

struct DatasetManifest {
  struct GroundTruth {
    double beta = 0.0;
    double airlight = 0.0;
    std::vector<std::string> clean;
    std::vector<std::string> depth;
  };
  std::vector<Camera> cameras;
  std::vector<std::string> images;
  std::vector<std::string> split;  // "train" or "test" per image
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  double near = 0.0;
  double far = 0.0;
  int levels = 256;
  std::optional<GroundTruth> gt;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Training-side view of a dataset. The evaluation-only ground-truth block is
// never loaded here.
struct Dataset {
  std::vector<Camera> cameras;
  std::vector<QuantizedImage<double>> images;
  std::vector<int> train;
  std::vector<int> test;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  double near = 0.0;
  double far = 0.0;
  int levels = 256;
};

// `path` may name the manifest file or the directory that holds manifest.json.
Dataset load_dataset(const std::filesystem::path& path);

struct EvalGroundTruth {
  double beta = 0.0;
  double airlight = 0.0;
  std::vector<Image<double>> clean;
  std::vector<ScalarMap<double>> depth;
};

// Throws std::invalid_argument("dataset lacks evaluation ground truth") when absent.
EvalGroundTruth load_ground_truth(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace hazefield
