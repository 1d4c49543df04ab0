// hazefield command-line front end.
//
// Exit codes: 0 success, 1 internal error or divergence, 2 invalid input,
// 3 corrupt artifact.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hazefield/eval.hpp"
#include "hazefield/gradcheck.hpp"
#include "hazefield/io.hpp"
#include "hazefield/synth.hpp"
#include "hazefield/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hazefield;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitCorrupt = 3;

void write_run_files(const fs::path& out, const std::string& command, const json& config) {
  fs::create_directories(out);
  write_text(out / "tool.json", json{{"tool", "hazefield"}, {"version", HAZEFIELD_VERSION}, {"command", command}}.dump(2) + "\n");
  write_text(out / "config.json", config.dump(2) + "\n");
}

// "a:b:step", inclusive of b up to rounding.
std::vector<double> parse_range(const std::string& spec) {
  double a = 0, b = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream is(spec);
  if (!(is >> a >> c1 >> b >> c2 >> step) || c1 != ':' || c2 != ':' || !is.eof()) {
    throw std::invalid_argument("range must look like start:stop:step, got \"" + spec + "\"");
  }
  if (!(step > 0.0) || b < a) throw std::invalid_argument("range needs step > 0 and stop >= start");
  std::vector<double> out;
  for (int k = 0;; ++k) {
    const double v = std::round((a + k * step) * 1e9) / 1e9;
    if (v > b + 1e-9) break;
    out.push_back(v);
  }
  return out;
}

// Flags that override keys of the run configuration.
struct ConfigFlags {
  struct Entry {
    std::string key;
    std::string value;
    CLI::Option* option = nullptr;
  };
  std::vector<Entry> entries;
  std::string config_path;
  std::vector<std::string> ablate;

  void attach(CLI::App* app) {
    app->add_option("config", config_path, "Run configuration (JSON); flags override its values");
    static const std::vector<std::pair<std::string, std::string>> table{
        {"--iters", "total_iterations"},   {"--seed", "seed"},
        {"--samples", "n_samples"},        {"--stride", "stride"},
        {"--views-per-step", "views_per_step"}, {"--grid-res", "grid_resolution"},
        {"--lr-grid", "lr_grid"},          {"--lr-atmosphere", "lr_atmosphere"},
        {"--lambda-smrc", "lambda_smrc"},  {"--lambda1", "lambda1"},
        {"--lambda2", "lambda2"},          {"--lambda3", "lambda3"},
        {"--pool-size", "pool_size"},      {"--mode", "mode"},
        {"--rec-mode", "rec_mode"},        {"--cons-mean", "cons_mean"},
        {"--checkpoint-every", "checkpoint_every"}, {"--log-every", "log_every"},
    };
    entries.reserve(table.size());
    for (const auto& [flag, key] : table) {
      entries.push_back({key, "", nullptr});
      entries.back().option = app->add_option(flag, entries.back().value, "Override \"" + key + "\"");
    }
    app->add_option("--ablate", ablate, "Disable a loss term: smrc (use mse), cons, cd, tv");
  }

  // Config file, then flags. Returns the merged document with "dataset" and
  // "out" separated from the training keys.
  json merged(int threads) const {
    json j = json::object();
    if (!config_path.empty()) {
      try {
        j = json::parse(read_text(config_path));
      } catch (const json::parse_error& e) {
        throw std::invalid_argument("config is not valid JSON: " + std::string(e.what()));
      }
      if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    }
    for (const auto& e : entries) {
      if (!e.option->count()) continue;
      json v = json::parse(e.value, nullptr, false);
      j[e.key] = v.is_discarded() ? json(e.value) : v;
    }
    if (threads > 0) j["threads"] = threads;
    return j;
  }
};

struct RunConfig {
  std::string dataset;
  std::string out;
  TrainConfig train;

  json to_json() const {
    json j = train.to_json();
    j["dataset"] = dataset;
    j["out"] = out;
    return j;
  }

  static RunConfig from_json(json j) {
    RunConfig r;
    if (j.contains("dataset")) {
      r.dataset = j.at("dataset").get<std::string>();
      j.erase("dataset");
    }
    if (j.contains("out")) {
      r.out = j.at("out").get<std::string>();
      j.erase("out");
    }
    r.train = TrainConfig::from_json(j);
    return r;
  }
};

RunConfig resolve(const ConfigFlags& flags, const std::string& data, const std::string& out, int threads) {
  RunConfig rc = RunConfig::from_json(flags.merged(threads));
  if (!data.empty()) rc.dataset = data;
  if (!out.empty()) rc.out = out;
  for (const auto& term : flags.ablate) apply_ablation(rc.train, term);
  return rc;
}

void print_report(const EvalReport& r) {
  std::printf("%-6s psnr %.3f dB  ssim %.4f  (hazy input %.3f dB)", r.mode.c_str(), r.psnr_mean, r.ssim_mean,
              r.hazy_psnr_mean);
  if (r.error) std::printf("  beta %.4f  A %.4f  avg rel err %.2f%%", *r.beta_hat, *r.a_hat, 100.0 * r.error->average);
  std::printf("\n");
}

std::function<void(const StepReport&)> progress(std::int64_t every) {
  return [every](const StepReport& s) {
    if (s.iter % every != 0) return;
    std::fprintf(stderr, "iter %6lld  loss %.6f  rec %.6f  beta %.4f  A %.4f\n", static_cast<long long>(s.iter),
                 s.loss.total, s.loss.rec, s.beta_mean, s.a_mean);
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hazefield: radiance fields from hazy images"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("hazefield ") + HAZEFIELD_VERSION);
  int threads = 0;
  app.add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "Build a synthetic hazy dataset");
  std::string preset = "fixture";
  double beta = 0.162, airlight = 0.8;
  int views = 20, test_views = 5, res = 64, levels = 256;
  std::uint64_t rig_seed = 7;
  std::string synth_out, sweep_spec;
  synth->add_option("--preset", preset, "Scene preset")->capture_default_str();
  synth->add_option("--beta", beta, "Scattering coefficient")->capture_default_str();
  synth->add_option("--A", airlight, "Atmospheric light")->capture_default_str();
  synth->add_option("--views", views, "Training views")->capture_default_str();
  synth->add_option("--test-views", test_views, "Held-out views")->capture_default_str();
  synth->add_option("--res", res, "Image side in pixels")->capture_default_str();
  synth->add_option("--levels", levels, "Quantization levels")->capture_default_str();
  synth->add_option("--seed", rig_seed, "Camera rig seed")->capture_default_str();
  synth->add_option("--beta-sweep", sweep_spec, "One dataset per beta in start:stop:step");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a radiance field on a hazy dataset");
  ConfigFlags train_flags;
  train_flags.attach(train_cmd);
  std::string train_data, train_out, resume_path;
  bool print_config = false;
  train_cmd->add_option("--data", train_data, "Dataset directory or manifest");
  train_cmd->add_option("--out", train_out, "Output directory");
  train_cmd->add_option("--resume", resume_path, "Continue from a checkpoint");
  train_cmd->add_flag("--print-config", print_config, "Print the resolved configuration and exit");

  // render
  auto* render_cmd = app.add_subcommand("render", "Render clean views from a checkpoint");
  std::string render_ckpt, render_data, render_out;
  int camera_index = -1, orbit_n = 0, render_samples = 128;
  bool write_depth = false;
  render_cmd->add_option("--checkpoint", render_ckpt, "Checkpoint (.hznf)")->required();
  render_cmd->add_option("--data", render_data, "Dataset providing cameras and intrinsics");
  auto* cam_opt = render_cmd->add_option("--camera", camera_index, "Dataset camera index");
  auto* orbit_opt = render_cmd->add_option("--orbit", orbit_n, "Number of orbit poses");
  cam_opt->excludes(orbit_opt);
  render_cmd->add_option("--samples", render_samples, "Samples per ray")->capture_default_str();
  render_cmd->add_flag("--depth", write_depth, "Also write expected depth as PFM");
  render_cmd->add_option("--out", render_out, "Output directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score a method on held-out views");
  ConfigFlags eval_flags;
  eval_flags.attach(eval_cmd);
  std::string eval_data, eval_out, eval_ckpt, baseline = "ours";
  eval_cmd->add_option("--data", eval_data, "Dataset directory or manifest");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Score this checkpoint instead of training");
  eval_cmd->add_option("--baseline", baseline, "ours | naive | dcp")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Output directory");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Haze-density sweep: one dataset and report per beta and method");
  ConfigFlags sweep_flags;
  sweep_flags.attach(sweep_cmd);
  std::string sweep_betas = "0.04:0.36:0.08", sweep_out;
  std::vector<std::string> sweep_modes{"ours", "naive"};
  sweep_cmd->add_option("--betas", sweep_betas, "start:stop:step")->capture_default_str();
  sweep_cmd->add_option("--baselines", sweep_modes, "Methods to run")->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "Output directory")->required();

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Train with each loss term disabled in turn");
  ConfigFlags ablate_flags;
  ablate_flags.attach(ablate_cmd);
  std::string ablate_data, ablate_out;
  std::vector<std::string> terms = ablation_terms();
  ablate_cmd->add_option("--data", ablate_data, "Dataset directory or manifest");
  ablate_cmd->add_option("--terms", terms, "Terms to disable")->delimiter(',');
  ablate_cmd->add_option("--out", ablate_out, "Output directory");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  std::uint64_t grad_seed = 0;
  std::string grad_out;
  grad_cmd->add_option("--seed", grad_seed, "Instance seed")->capture_default_str();
  grad_cmd->add_option("--out", grad_out, "Directory for gradcheck.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (synth->parsed()) {
      CameraIntrinsics intr;
      intr.width = res;
      intr.height = res;
      intr.focal = res;
      if (res < 8) throw std::invalid_argument("res must be at least 8");
      RigSpec rig;
      rig.n_train = views;
      rig.n_test = test_views;
      rig.seed = rig_seed;
      rig.intrinsics = intr;
      if (views < 1 || test_views < 0) throw std::invalid_argument("views must be >= 1 and test-views >= 0");
      const SceneSpec scene = scene_preset(preset);
      BuildOptions build;
      build.beta = beta;
      build.airlight = airlight;
      build.levels = levels;
      build.n_train = views;
      std::vector<double> betas{beta};
      if (!sweep_spec.empty()) betas = parse_range(sweep_spec);
      const std::vector<Camera> cams = generate_rig(rig);
      json config{{"preset", preset}, {"beta", betas.size() == 1 ? json(betas[0]) : json(betas)},
                  {"A", airlight},     {"views", views},
                  {"test_views", test_views}, {"res", res},
                  {"levels", levels},  {"seed", rig_seed}};
      for (double b : betas) {
        build.beta = b;
        std::ostringstream tag;
        tag << "beta_" << b;
        const fs::path dir = sweep_spec.empty() ? fs::path(synth_out) : fs::path(synth_out) / tag.str();
        build_dataset(scene, cams, build, dir);
        std::printf("wrote %s (beta %g, A %g, %zu views)\n", dir.c_str(), b, airlight, cams.size());
      }
      write_run_files(synth_out, "synth", config);
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      const RunConfig rc = resolve(train_flags, train_data, train_out, threads);
      if (print_config) {
        std::printf("%s\n", rc.to_json().dump(2).c_str());
        return kExitOk;
      }
      if (rc.dataset.empty()) throw std::invalid_argument("no dataset given (--data or \"dataset\")");
      if (rc.out.empty()) throw std::invalid_argument("no output directory given (--out or \"out\")");
      const Dataset data = load_dataset(rc.dataset);
      write_run_files(rc.out, "train", rc.to_json());
      TrainOptions opt;
      opt.out_dir = rc.out;
      opt.on_step = progress(rc.train.log_every);
      if (!resume_path.empty()) opt.resume = load_checkpoint(resume_path);
      const TrainResult result = train(data, rc.train, opt);
      const auto& atmo = result.state.atmosphere;
      const json summary{{"iterations", result.state.iteration},
                         {"beta_hat", atmo.betas().mean()},
                         {"a_hat", atmo.airlights().mean()},
                         {"checkpoint", (fs::path(rc.out) / "final.hznf").string()}};
      write_text(fs::path(rc.out) / "summary.json", summary.dump(2) + "\n");
      std::printf("trained %lld iterations: beta %.4f  A %.4f\n", static_cast<long long>(result.state.iteration),
                  atmo.betas().mean(), atmo.airlights().mean());
      return kExitOk;
    }

    if (render_cmd->parsed()) {
      const TrainState state = load_checkpoint(render_ckpt);
      std::vector<Camera> cams;
      std::vector<std::string> names;
      if (cam_opt->count()) {
        if (render_data.empty()) throw std::invalid_argument("--camera needs --data");
        const DatasetManifest m = load_manifest(manifest_path(render_data));
        if (camera_index < 0 || camera_index >= int(m.cameras.size())) {
          throw std::invalid_argument("camera index out of range");
        }
        cams.push_back(m.cameras[std::size_t(camera_index)]);
        char name[32];
        std::snprintf(name, sizeof name, "view_%03d", camera_index);
        names.emplace_back(name);
      } else if (orbit_opt->count()) {
        CameraIntrinsics intr;
        if (!render_data.empty()) {
          const DatasetManifest m = load_manifest(manifest_path(render_data));
          if (m.cameras.empty()) throw std::invalid_argument("dataset has no cameras");
          const Camera& ref = m.cameras.front();
          intr.width = ref.width;
          intr.height = ref.height;
          intr.focal = ref.focal;
          intr.near = ref.near;
          intr.far = ref.far;
        }
        if (orbit_n < 2) throw std::invalid_argument("--orbit needs at least 2 poses");
        cams = generate_cameras(orbit_n, 4.0, {30.0, 30.0}, intr);
        for (int i = 0; i < orbit_n; ++i) {
          char name[32];
          std::snprintf(name, sizeof name, "orbit_%03d", i);
          names.emplace_back(name);
        }
      } else {
        throw std::invalid_argument("give --camera or --orbit");
      }
      fs::create_directories(render_out);
      json files = json::array();
      const int workers = threads > 0 ? threads : 1;
      for (std::size_t i = 0; i < cams.size(); ++i) {
        const NovelView v = render_novel_view(state.grid, cams[i], render_samples, workers);
        write_png(fs::path(render_out) / (names[i] + ".png"), v.clean);
        files.push_back(names[i] + ".png");
        if (write_depth) {
          write_pfm(fs::path(render_out) / (names[i] + "_depth.pfm"), v.depth);
          files.push_back(names[i] + "_depth.pfm");
        }
      }
      write_run_files(render_out, "render",
                      json{{"checkpoint", render_ckpt}, {"data", render_data}, {"camera", camera_index},
                           {"orbit", orbit_n}, {"samples", render_samples}, {"depth", write_depth}});
      write_text(fs::path(render_out) / "render.json", json{{"files", files}}.dump(2) + "\n");
      std::printf("rendered %zu view(s) into %s\n", cams.size(), render_out.c_str());
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      const RunConfig rc = resolve(eval_flags, eval_data, eval_out, threads);
      if (rc.dataset.empty()) throw std::invalid_argument("no dataset given (--data or \"dataset\")");
      if (rc.out.empty()) throw std::invalid_argument("no output directory given (--out or \"out\")");
      const Baseline mode = parse_baseline(baseline);
      EvalOptions opt;
      opt.out_dir = rc.out;
      opt.on_step = progress(rc.train.log_every);
      if (!eval_ckpt.empty()) opt.checkpoint = load_checkpoint(eval_ckpt);
      json cfg = rc.to_json();
      cfg["baseline"] = to_string(mode);
      cfg["checkpoint"] = eval_ckpt;
      load_ground_truth(rc.dataset);  // fail before writing anything
      write_run_files(rc.out, "eval", cfg);
      print_report(run_eval(rc.dataset, mode, rc.train, opt));
      return kExitOk;
    }

    if (sweep_cmd->parsed()) {
      const RunConfig rc = resolve(sweep_flags, "", sweep_out, threads);
      const std::vector<double> betas = parse_range(sweep_betas);
      std::vector<Baseline> modes;
      for (const auto& m : sweep_modes) modes.push_back(parse_baseline(m));
      json cfg = rc.to_json();
      cfg["betas"] = betas;
      cfg["baselines"] = sweep_modes;
      write_run_files(rc.out, "sweep", cfg);
      const SweepResult s = run_beta_sweep(betas, modes, rc.train, rc.out);
      for (std::size_t m = 0; m < modes.size(); ++m) {
        std::printf("%-6s", to_string(modes[m]).c_str());
        for (const auto& r : s.reports[m]) std::printf("  %.3f", r.psnr_mean);
        std::printf("   (drop %.3f dB)\n", s.degradation(m));
      }
      return kExitOk;
    }

    if (ablate_cmd->parsed()) {
      const RunConfig rc = resolve(ablate_flags, ablate_data, ablate_out, threads);
      if (rc.dataset.empty()) throw std::invalid_argument("no dataset given (--data or \"dataset\")");
      if (rc.out.empty()) throw std::invalid_argument("no output directory given (--out or \"out\")");
      load_ground_truth(rc.dataset);
      json cfg = rc.to_json();
      cfg["terms"] = terms;
      write_run_files(rc.out, "ablate", cfg);
      for (const auto& e : run_ablation(rc.dataset, rc.train, terms, rc.out)) {
        std::printf("%-5s ", e.term.c_str());
        print_report(e.report);
      }
      return kExitOk;
    }

    if (grad_cmd->parsed()) {
      const GradCheckReport report = run_gradcheck(grad_seed);
      std::printf("%s", report.table().c_str());
      if (!grad_out.empty()) {
        write_run_files(grad_out, "gradcheck", json{{"seed", grad_seed}});
        write_text(fs::path(grad_out) / "gradcheck.json", report.to_json().dump(2) + "\n");
      }
      std::printf("%s\n", report.all_pass() ? "all gradient checks passed" : "gradient check FAILED");
      return report.all_pass() ? kExitOk : kExitInternal;
    }
  } catch (const CorruptArtifact& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCorrupt;
  } catch (const TrainingDiverged& e) {
    std::fprintf(stderr, "error: %s (last good state: %s)\n", e.what(), e.last_good_checkpoint.c_str());
    return kExitInternal;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  } catch (const std::out_of_range& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitInternal;
}
