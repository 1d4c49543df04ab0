#include "hazefield/eval.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "hazefield/dcp.hpp"

namespace hazefield {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::ours: return "ours";
    case Baseline::naive: return "naive";
    case Baseline::dcp: return "dcp";
  }
  return "?";
}

Baseline parse_baseline(const std::string& name) {
  if (name == "ours") return Baseline::ours;
  if (name == "naive") return Baseline::naive;
  if (name == "dcp" || name == "dcp-then-train") return Baseline::dcp;
  throw std::invalid_argument("unknown baseline: " + name);
}

json EvalReport::to_json() const {
  json views = json::array();
  for (const auto& v : per_view) views.push_back({{"name", v.name}, {"psnr", v.psnr}, {"ssim", v.ssim}});
  auto opt = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
  return json{{"mode", mode},
              {"per_view", views},
              {"psnr_mean", psnr_mean},
              {"ssim_mean", ssim_mean},
              {"hazy_psnr_mean", hazy_psnr_mean},
              {"beta_hat", opt(beta_hat)},
              {"a_hat", opt(a_hat)},
              {"rel_beta", error ? json(error->rel_beta) : json(nullptr)},
              {"rel_a", error ? json(error->rel_a) : json(nullptr)},
              {"avg_rel_err", error ? json(error->average) : json(nullptr)}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  r.mode = j.at("mode").get<std::string>();
  for (const auto& v : j.at("per_view")) {
    r.per_view.push_back({v.at("name").get<std::string>(), v.at("psnr").get<double>(), v.at("ssim").get<double>()});
  }
  r.psnr_mean = j.at("psnr_mean").get<double>();
  r.ssim_mean = j.at("ssim_mean").get<double>();
  r.hazy_psnr_mean = j.value("hazy_psnr_mean", 0.0);
  if (!j.at("beta_hat").is_null()) r.beta_hat = j.at("beta_hat").get<double>();
  if (!j.at("a_hat").is_null()) r.a_hat = j.at("a_hat").get<double>();
  if (!j.at("avg_rel_err").is_null()) {
    r.error = ParamError{j.at("rel_beta").get<double>(), j.at("rel_a").get<double>(), j.at("avg_rel_err").get<double>()};
  }
  return r;
}

TrainConfig baseline_config(TrainConfig config, Baseline mode) {
  if (mode != Baseline::ours) config.mode = TrainMode::naive;
  return config;
}

Dataset dcp_dataset(const Dataset& dataset) {
  Dataset out = dataset;
  for (int i : dataset.train) {
    auto& img = out.images[std::size_t(i)];
    img = quantize(dcp_dehaze(img.values), dataset.levels);
  }
  return out;
}

EvalReport score_state(const TrainState& state, const Dataset& dataset, const EvalGroundTruth& gt,
                       const std::vector<std::string>& view_names, Baseline mode, int n_samples, int threads) {
  if (dataset.test.empty()) throw std::invalid_argument("dataset has no held-out views");
  EvalReport r;
  r.mode = to_string(mode);
  r.per_view.resize(dataset.test.size());
  std::vector<double> hazy(dataset.test.size());
  detail::parallel_chunks(int(dataset.test.size()), threads, [&](int, int begin, int end) {
    for (int t = begin; t < end; ++t) {
      const int i = dataset.test[std::size_t(t)];
      const NovelView v = render_novel_view(state.grid, dataset.cameras[std::size_t(i)], n_samples, 1);
      const Image<double>& clean = gt.clean[std::size_t(i)];
      ViewScore& s = r.per_view[std::size_t(t)];
      s.name = i < int(view_names.size()) ? view_names[std::size_t(i)] : std::to_string(i);
      s.psnr = psnr(v.clean, clean);
      s.ssim = ssim(v.clean, clean);
      hazy[std::size_t(t)] = psnr(dataset.images[std::size_t(i)].values, clean);
    }
  });
  for (std::size_t t = 0; t < r.per_view.size(); ++t) {
    r.psnr_mean += r.per_view[t].psnr;
    r.ssim_mean += r.per_view[t].ssim;
    r.hazy_psnr_mean += hazy[t];
  }
  const double n = double(r.per_view.size());
  r.psnr_mean /= n;
  r.ssim_mean /= n;
  r.hazy_psnr_mean /= n;
  if (mode == Baseline::ours) {
    r.beta_hat = state.atmosphere.betas().mean();
    r.a_hat = state.atmosphere.airlights().mean();
    r.error = param_error(*r.beta_hat, *r.a_hat, gt.beta, gt.airlight);
  }
  return r;
}

EvalReport run_eval(const fs::path& dataset_path, Baseline mode, const TrainConfig& config, const EvalOptions& options) {
  // Ground truth first: a dataset without it cannot be scored, so do not train.
  const EvalGroundTruth gt = load_ground_truth(dataset_path);
  const DatasetManifest manifest = load_manifest(manifest_path(dataset_path));
  Dataset dataset = load_dataset(dataset_path);
  const TrainConfig cfg = baseline_config(config, mode);

  TrainState state;
  if (options.checkpoint) {
    state = *options.checkpoint;
  } else {
    const Dataset train_data = mode == Baseline::dcp ? dcp_dataset(dataset) : dataset;
    TrainOptions topt;
    if (!options.out_dir.empty()) topt.out_dir = options.out_dir / "train";
    topt.on_step = options.on_step;
    state = train(train_data, cfg, topt).state;
  }
  EvalReport report = score_state(state, dataset, gt, manifest.images, mode, cfg.n_samples, cfg.threads);
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    write_text(options.out_dir / "report.json", report.to_json().dump(2) + "\n");
  }
  return report;
}

double SweepResult::degradation(std::size_t mode_index) const {
  const auto& row = reports.at(mode_index);
  if (row.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(row.begin(), row.end(), [](const EvalReport& a, const EvalReport& b) {
    return a.psnr_mean < b.psnr_mean;
  });
  return hi->psnr_mean - lo->psnr_mean;
}

json SweepResult::to_json() const {
  json curves = json::object();
  json full = json::object();
  json drops = json::object();
  for (std::size_t m = 0; m < modes.size(); ++m) {
    json psnrs = json::array();
    json rows = json::array();
    for (const auto& r : reports[m]) {
      psnrs.push_back(r.psnr_mean);
      rows.push_back(r.to_json());
    }
    curves[to_string(modes[m])] = psnrs;
    full[to_string(modes[m])] = rows;
    drops[to_string(modes[m])] = degradation(m);
  }
  return json{{"beta", betas}, {"psnr", curves}, {"degradation_db", drops}, {"reports", full}};
}

namespace {

std::string beta_tag(double beta) {
  std::ostringstream os;
  os << "beta_" << beta;
  return os.str();
}

}  // namespace

SweepResult run_beta_sweep(const std::vector<double>& betas, const std::vector<Baseline>& modes,
                           const TrainConfig& config, const fs::path& work_dir, const SweepSetup& setup) {
  if (work_dir.empty()) throw std::invalid_argument("sweep needs a work directory");
  if (betas.empty() || modes.empty()) throw std::invalid_argument("sweep needs at least one beta and one method");
  SweepResult result;
  result.betas = betas;
  result.modes = modes;
  result.reports.assign(modes.size(), {});
  const std::vector<Camera> cameras = generate_rig(setup.rig);
  BuildOptions build = setup.build;
  build.n_train = setup.rig.n_train;
  for (double beta : betas) {
    const fs::path point = work_dir / beta_tag(beta);
    build.beta = beta;
    build_dataset(setup.scene, cameras, build, point / "data");
    for (std::size_t m = 0; m < modes.size(); ++m) {
      EvalOptions opt;
      opt.out_dir = point / to_string(modes[m]);
      result.reports[m].push_back(run_eval(point / "data", modes[m], config, opt));
    }
  }
  if (!work_dir.empty()) write_text(work_dir / "sweep.json", result.to_json().dump(2) + "\n");
  return result;
}

const std::vector<std::string>& ablation_terms() {
  static const std::vector<std::string> terms{"smrc", "cons", "cd", "tv"};
  return terms;
}

void apply_ablation(TrainConfig& config, const std::string& term) {
  if (term == "smrc") config.rec_mode = RecMode::mse;
  else if (term == "cons") config.weights.lambda1 = 0.0;
  else if (term == "cd") config.weights.lambda2 = 0.0;
  else if (term == "tv") config.weights.lambda3 = 0.0;
  else throw std::invalid_argument("unknown ablation term: " + term);
}

std::vector<AblationEntry> run_ablation(const fs::path& dataset_path, const TrainConfig& config,
                                        const std::vector<std::string>& terms, const fs::path& work_dir,
                                        const EvalReport* reference) {
  std::vector<AblationEntry> entries;
  for (const auto& t : terms) {
    TrainConfig probe = config;
    apply_ablation(probe, t);  // reject unknown terms before any training
  }
  EvalOptions opt;
  if (reference) {
    entries.push_back({"full", *reference});
  } else {
    opt.out_dir = work_dir.empty() ? fs::path() : work_dir / "full";
    entries.push_back({"full", run_eval(dataset_path, Baseline::ours, config, opt)});
  }
  for (const auto& t : terms) {
    TrainConfig c = config;
    apply_ablation(c, t);
    opt.out_dir = work_dir.empty() ? fs::path() : work_dir / ("no_" + t);
    entries.push_back({t, run_eval(dataset_path, Baseline::ours, c, opt)});
  }
  if (!work_dir.empty()) write_text(work_dir / "ablation.json", ablation_to_json(entries).dump(2) + "\n");
  return entries;
}

json ablation_to_json(const std::vector<AblationEntry>& entries) {
  json out = json::array();
  for (const auto& e : entries) out.push_back({{"disabled", e.term}, {"report", e.report.to_json()}});
  return out;
}

}  // namespace hazefield
