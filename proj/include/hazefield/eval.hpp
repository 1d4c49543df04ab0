#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hazefield/io.hpp"
#include "hazefield/metrics.hpp"
#include "hazefield/synth.hpp"
#include "hazefield/trainer.hpp"

namespace hazefield {

// ours: full pipeline. naive: mse training on the hazy images.
// dcp: dark-channel dehazing of the training images, then mse training.
enum class Baseline { ours, naive, dcp };

std::string to_string(Baseline b);
// Accepts "ours", "naive", "dcp" and "dcp-then-train".
Baseline parse_baseline(const std::string& name);

struct ViewScore {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::string mode;
  std::vector<ViewScore> per_view;
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
  double hazy_psnr_mean = 0.0;  // hazy input against the clean reference, same views
  // Set only when the run estimated the atmosphere (mode ours).
  std::optional<double> beta_hat;
  std::optional<double> a_hat;
  std::optional<ParamError> error;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

// Training configuration for a baseline: naive and dcp train with mse on the
// (possibly dehazed) images and leave the atmosphere untouched.
TrainConfig baseline_config(TrainConfig config, Baseline mode);

// Copy of the dataset whose training images are replaced by their
// dark-channel estimates (re-quantized at the dataset's levels).
Dataset dcp_dataset(const Dataset& dataset);

// Held-out metrics of a trained state. Parameter errors are filled for ours.
EvalReport score_state(const TrainState& state, const Dataset& dataset, const EvalGroundTruth& gt,
                       const std::vector<std::string>& view_names, Baseline mode, int n_samples = 128, int threads = 1);

struct EvalOptions {
  std::filesystem::path out_dir;           // empty: nothing written
  std::optional<TrainState> checkpoint;    // skip training and score this state
  std::function<void(const StepReport&)> on_step;
};

// Trains (unless a checkpoint is given) and scores on the held-out views.
// Writes report.json plus the training artifacts under out_dir/train.
EvalReport run_eval(const std::filesystem::path& dataset_path, Baseline mode, const TrainConfig& config,
                    const EvalOptions& options = {});

struct SweepResult {
  std::vector<double> betas;
  std::vector<Baseline> modes;
  std::vector<std::vector<EvalReport>> reports;  // [mode][beta]

  // PSNR drop from the best to the worst beta for one mode.
  double degradation(std::size_t mode_index) const;
  nlohmann::json to_json() const;
};

struct SweepSetup {
  SceneSpec scene = scene_preset("fixture");
  RigSpec rig;
  BuildOptions build;  // beta is overridden per point
};

// One dataset per beta under work_dir/beta_<value>, one report per mode.
SweepResult run_beta_sweep(const std::vector<double>& betas, const std::vector<Baseline>& modes,
                           const TrainConfig& config, const std::filesystem::path& work_dir,
                           const SweepSetup& setup = {});

// Loss terms that can be switched off: smrc (replaced by mse), cons, cd, tv.
const std::vector<std::string>& ablation_terms();
void apply_ablation(TrainConfig& config, const std::string& term);

struct AblationEntry {
  std::string term;  // "full" for the reference run
  EvalReport report;
};

// Reference run followed by one run per disabled term. A given `reference`
// report stands in for the full run (it must come from the same config).
std::vector<AblationEntry> run_ablation(const std::filesystem::path& dataset_path, const TrainConfig& config,
                                        const std::vector<std::string>& terms, const std::filesystem::path& work_dir,
                                        const EvalReport* reference = nullptr);
nlohmann::json ablation_to_json(const std::vector<AblationEntry>& entries);

}  // namespace hazefield
