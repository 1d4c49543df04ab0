#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hazefield/adam.hpp"
#include "hazefield/field.hpp"
#include "hazefield/haze.hpp"
#include "hazefield/io.hpp"
#include "hazefield/losses.hpp"
#include "hazefield/render.hpp"
#include "hazefield/rng.hpp"

namespace hazefield {

enum class TrainMode { ours, naive };
enum class RecMode { smrc, mse };
// Mean used by the consistency loss: the views of the current step, or every
// training view (gradient reaches all of them).
enum class ConsMean { batch, dataset };

struct TrainConfig {
  std::int64_t total_iterations = 3000;
  int n_samples = 128;
  int stride = 4;
  int views_per_step = 4;
  int grid_resolution = 64;
  Eigen::Vector3d bbox_min = Eigen::Vector3d::Constant(-1.5);
  Eigen::Vector3d bbox_max = Eigen::Vector3d::Constant(1.5);
  LossWeights weights;
  LrSchedule schedule{1e-2, 3e-2};
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::int64_t log_every = 100;
  double init_beta = 0.2;  // middle of the 0.04 to 0.36 range the sweep covers
  double init_airlight = 0.75;
  double init_density_raw = -2.0;
  TrainMode mode = TrainMode::ours;
  RecMode rec_mode = RecMode::smrc;
  ConsMean cons_mean = ConsMean::batch;
  bool freeze_atmosphere = false;
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  // Strict: unknown keys are rejected; missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
  std::uint64_t hash() const;
};

// Everything needed to continue a run bit-for-bit. The per-step random stream
// is derived from (seed, iteration), so no generator state is stored.
struct TrainState {
  VoxelGrid<double> grid;
  AtmosphereParams<double> atmosphere;  // entry k belongs to training view k
  AdamState<double> grid_opt;
  AdamState<double> atmosphere_opt;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

TrainState init_state(const Dataset& dataset, const TrainConfig& config);

struct LossBreakdown {
  double rec = 0.0;
  double cons = 0.0;
  double cd = 0.0;
  double tv = 0.0;
  double total = 0.0;
};

struct StepReport {
  std::int64_t iter = 0;
  LossBreakdown loss;
  double beta_mean = 0.0;
  double a_mean = 0.0;
  double beta_std = 0.0;
  double lr_grid = 0.0;
  double lr_atmo = 0.0;

  nlohmann::json to_json() const;
};

// Views (positions in Dataset::train), their lattices and the jitter stream
// of one step.
struct StepPlan {
  std::vector<int> views;
  std::vector<SubgridSpec> subgrids;
  std::uint64_t jitter_seed = 0;
  bool jitter = true;
};

// Lattice with uniform random offset in [0, stride)^2.
SubgridSpec sample_subgrid(int height, int width, int stride, Rng& rng);

StepPlan plan_step(const Dataset& dataset, const TrainConfig& config, Rng& rng);

// Loss of one step; with `grads`, the exact gradient w.r.t. grid raws and the
// atmosphere raws is accumulated into it.
LossBreakdown evaluate_loss(const TrainState& state, const Dataset& dataset, const StepPlan& plan,
                            const TrainConfig& config, GradBuffer<double>* grads);

StepReport train_step(TrainState& state, const Dataset& dataset, const StepPlan& plan, const TrainConfig& config);

// Plans with the stream derived from (seed, iteration) and steps once.
StepReport train_step(TrainState& state, const Dataset& dataset, const TrainConfig& config);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: nothing written
  std::optional<TrainState> resume;
  std::int64_t stop_at = -1;      // stop before this iteration (tests, resumable runs)
  std::function<void(const StepReport&)> on_step;
};

struct TrainResult {
  TrainState state;
  std::vector<StepReport> history;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::filesystem::path last_good)
      : std::runtime_error(what), last_good_checkpoint(std::move(last_good)) {}
  std::filesystem::path last_good_checkpoint;
};

TrainResult train(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options = {});

struct NovelView {
  Image<double> clean;
  ScalarMap<double> depth;
};

// Inference renders the radiance field only; the atmosphere is not consulted.
NovelView render_novel_view(const VoxelGrid<double>& grid, const Camera& camera, int n_samples = 128, int threads = 1);

// HZNF container: "HZNF", u32 version, u32 array count, then per array a u64
// length followed by little-endian f64 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;
std::string serialize_checkpoint(const TrainState& state);
TrainState parse_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace hazefield
