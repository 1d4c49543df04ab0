#include "hazefield/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

namespace hazefield {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* to_string(TrainMode m) { return m == TrainMode::ours ? "ours" : "naive"; }
const char* to_string(RecMode m) { return m == RecMode::smrc ? "smrc" : "mse"; }
const char* to_string(ConsMean m) { return m == ConsMean::batch ? "batch" : "dataset"; }

template <typename Enum>
Enum parse_enum(const json& j, std::initializer_list<std::pair<const char*, Enum>> options, const char* key) {
  const std::string s = j.get<std::string>();
  for (const auto& [name, value] : options) {
    if (s == name) return value;
  }
  throw std::invalid_argument(std::string("config: bad value for ") + key + ": " + s);
}

json vec3_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw std::invalid_argument("config: expected a 3-vector");
  return {v[0], v[1], v[2]};
}

// Quantized target restricted to a lattice.
QuantizedImage<double> extract(const QuantizedImage<double>& q, const SubgridSpec& s) {
  QuantizedImage<double> out;
  out.levels = q.levels;
  out.values = Image<double>(s.rows, s.cols);
  out.lo = Image<double>(s.rows, s.cols);
  out.hi = Image<double>(s.rows, s.cols);
  for (int r = 0; r < s.rows; ++r) {
    for (int c = 0; c < s.cols; ++c) {
      const Eigen::Index src = q.values.index(s.pixel_y(r), s.pixel_x(c));
      const Eigen::Index dst = out.values.index(r, c);
      out.values.px.row(dst) = q.values.px.row(src);
      out.lo.px.row(dst) = q.lo.px.row(src);
      out.hi.px.row(dst) = q.hi.px.row(src);
    }
  }
  return out;
}

double stddev(const Eigen::VectorXd& v) {
  if (v.size() == 0) return 0.0;
  return std::sqrt((v.array() - v.mean()).square().mean());
}

}  // namespace

void TrainConfig::validate() const {
  if (total_iterations < 1) throw std::invalid_argument("total_iterations must be >= 1");
  if (n_samples < 2) throw std::invalid_argument("n_samples must be >= 2");
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  if (views_per_step < 1) throw std::invalid_argument("views_per_step must be >= 1");
  if (grid_resolution < 2) throw std::invalid_argument("grid_resolution must be >= 2");
  if (!(bbox_min.array() < bbox_max.array()).all()) throw std::invalid_argument("bbox_min must be below bbox_max");
  if (checkpoint_every < 0 || log_every < 1) throw std::invalid_argument("bad checkpoint/log interval");
  if (!(init_beta > 0.0) || !(init_airlight > 0.0 && init_airlight < kAirlightMax)) {
    throw std::invalid_argument("init_beta must be > 0 and init_airlight in (0, 1.5)");
  }
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  weights.validate();
  schedule.validate();
}

json TrainConfig::to_json() const {
  return json{
      {"total_iterations", total_iterations},
      {"n_samples", n_samples},
      {"stride", stride},
      {"views_per_step", views_per_step},
      {"grid_resolution", grid_resolution},
      {"bbox_min", vec3_json(bbox_min)},
      {"bbox_max", vec3_json(bbox_max)},
      {"lambda_smrc", weights.lambda_smrc},
      {"lambda1", weights.lambda1},
      {"lambda2", weights.lambda2},
      {"lambda3", weights.lambda3},
      {"pool_size", weights.pool_size},
      {"tv_eps", weights.tv_eps},
      {"cd_hinge", weights.cd_hinge},
      {"lr_grid", schedule.base_lr_grid},
      {"lr_atmosphere", schedule.base_lr_atmosphere},
      {"lr_milestones", schedule.milestones},
      {"lr_decay", schedule.decay},
      {"seed", seed},
      {"checkpoint_every", checkpoint_every},
      {"log_every", log_every},
      {"init_beta", init_beta},
      {"init_airlight", init_airlight},
      {"init_density_raw", init_density_raw},
      {"mode", to_string(mode)},
      {"rec_mode", to_string(rec_mode)},
      {"cons_mean", to_string(cons_mean)},
      {"freeze_atmosphere", freeze_atmosphere},
      {"threads", threads},
  };
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "total_iterations") c.total_iterations = v.get<std::int64_t>();
      else if (key == "n_samples") c.n_samples = v.get<int>();
      else if (key == "stride") c.stride = v.get<int>();
      else if (key == "views_per_step") c.views_per_step = v.get<int>();
      else if (key == "grid_resolution") c.grid_resolution = v.get<int>();
      else if (key == "bbox_min") c.bbox_min = vec3_from(v);
      else if (key == "bbox_max") c.bbox_max = vec3_from(v);
      else if (key == "lambda_smrc") c.weights.lambda_smrc = v.get<double>();
      else if (key == "lambda1") c.weights.lambda1 = v.get<double>();
      else if (key == "lambda2") c.weights.lambda2 = v.get<double>();
      else if (key == "lambda3") c.weights.lambda3 = v.get<double>();
      else if (key == "pool_size") c.weights.pool_size = v.get<int>();
      else if (key == "tv_eps") c.weights.tv_eps = v.get<double>();
      else if (key == "cd_hinge") c.weights.cd_hinge = v.get<bool>();
      else if (key == "lr_grid") c.schedule.base_lr_grid = v.get<double>();
      else if (key == "lr_atmosphere") c.schedule.base_lr_atmosphere = v.get<double>();
      else if (key == "lr_milestones") {
        const auto m = v.get<std::vector<double>>();
        if (m.size() != c.schedule.milestones.size()) throw std::invalid_argument("config: lr_milestones needs 4 entries");
        std::copy(m.begin(), m.end(), c.schedule.milestones.begin());
      } else if (key == "lr_decay") c.schedule.decay = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "checkpoint_every") c.checkpoint_every = v.get<std::int64_t>();
      else if (key == "log_every") c.log_every = v.get<std::int64_t>();
      else if (key == "init_beta") c.init_beta = v.get<double>();
      else if (key == "init_airlight") c.init_airlight = v.get<double>();
      else if (key == "init_density_raw") c.init_density_raw = v.get<double>();
      else if (key == "mode") c.mode = parse_enum<TrainMode>(v, {{"ours", TrainMode::ours}, {"naive", TrainMode::naive}}, "mode");
      else if (key == "rec_mode") c.rec_mode = parse_enum<RecMode>(v, {{"smrc", RecMode::smrc}, {"mse", RecMode::mse}}, "rec_mode");
      else if (key == "cons_mean") c.cons_mean = parse_enum<ConsMean>(v, {{"batch", ConsMean::batch}, {"dataset", ConsMean::dataset}}, "cons_mean");
      else if (key == "freeze_atmosphere") c.freeze_atmosphere = v.get<bool>();
      else if (key == "threads") c.threads = v.get<int>();
      else throw std::invalid_argument("config: unknown key \"" + key + "\"");
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: bad value for \"" + key + "\": " + e.what());
    }
  }
  c.validate();
  return c;
}

std::uint64_t TrainConfig::hash() const {
  // FNV-1a over the canonical JSON, excluding settings that do not change results.
  json j = to_json();
  j.erase("threads");
  j.erase("checkpoint_every");
  j.erase("log_every");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

json StepReport::to_json() const {
  return json{{"iter", iter},       {"rec", loss.rec},         {"cons", loss.cons},       {"cd", loss.cd},
              {"tv", loss.tv},      {"total", loss.total},     {"beta_mean", beta_mean}, {"beta_std", beta_std}, {"a_mean", a_mean},
              {"lr_grid", lr_grid}, {"lr_atmo", lr_atmo}};
}

namespace {

// The per-step lattice must be large enough for the image-space losses.
void check_against_dataset(const Dataset& dataset, const TrainConfig& config) {
  if (dataset.train.empty()) throw std::invalid_argument("dataset has no training views");
  int side = std::numeric_limits<int>::max();
  for (int i : dataset.train) {
    const Camera& cam = dataset.cameras[std::size_t(i)];
    side = std::min({side, cam.height / config.stride, cam.width / config.stride});
  }
  if (side < 1) throw std::invalid_argument("stride exceeds the image size");
  if (config.mode != TrainMode::ours) return;
  if (config.weights.lambda2 > 0.0 && side < config.weights.pool_size) {
    throw std::invalid_argument("pool_size exceeds the per-step subgrid (" + std::to_string(side) + " pixels)");
  }
  if (config.weights.lambda3 > 0.0 && side < 2) throw std::invalid_argument("per-step subgrid too small for tv");
}

}  // namespace

TrainState init_state(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  check_against_dataset(dataset, config);
  TrainState s;
  s.grid = VoxelGrid<double>(Eigen::Vector3i::Constant(config.grid_resolution), config.bbox_min, config.bbox_max,
                             config.init_density_raw, 0.0, dataset.background);
  s.atmosphere = AtmosphereParams<double>(Eigen::Index(dataset.train.size()), config.init_beta, config.init_airlight);
  s.grid_opt = AdamState<double>(s.grid.params().size());
  s.atmosphere_opt = AdamState<double>(s.atmosphere.raw().size());
  s.seed = config.seed;
  s.config_hash = config.hash();
  return s;
}

SubgridSpec sample_subgrid(int height, int width, int stride, Rng& rng) {
  if (stride < 1 || stride > std::min(height, width)) {
    throw std::invalid_argument("sample_subgrid: stride out of range");
  }
  const int ox = int(uniform_index(rng, std::uint64_t(stride)));
  const int oy = int(uniform_index(rng, std::uint64_t(stride)));
  return SubgridSpec::fit(height, width, stride, ox, oy);
}

StepPlan plan_step(const Dataset& dataset, const TrainConfig& config, Rng& rng) {
  StepPlan plan;
  const int n = int(dataset.train.size());
  const int k = std::min(config.views_per_step, n);
  // Partial Fisher-Yates: k distinct views.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + int(uniform_index(rng, std::uint64_t(n - i)));
    std::swap(order[std::size_t(i)], order[std::size_t(j)]);
  }
  plan.views.assign(order.begin(), order.begin() + k);
  std::sort(plan.views.begin(), plan.views.end());
  for (int v : plan.views) {
    const Camera& cam = dataset.cameras[std::size_t(dataset.train[std::size_t(v)])];
    plan.subgrids.push_back(sample_subgrid(cam.height, cam.width, config.stride, rng));
  }
  plan.jitter_seed = rng();
  return plan;
}

LossBreakdown evaluate_loss(const TrainState& state, const Dataset& dataset, const StepPlan& plan,
                            const TrainConfig& config, GradBuffer<double>* grads) {
  if (plan.views.empty()) throw std::invalid_argument("train_step: empty batch");
  if (plan.views.size() != plan.subgrids.size()) throw std::invalid_argument("train_step: malformed plan");
  const LossWeights& w = config.weights;
  const bool ours = config.mode == TrainMode::ours;
  const double inv_views = 1.0 / double(plan.views.size());
  const auto& atmo = state.atmosphere;
  LossBreakdown loss;
  Rng jitter(plan.jitter_seed);

  for (std::size_t b = 0; b < plan.views.size(); ++b) {
    const int k = plan.views[b];
    const int image_index = dataset.train[std::size_t(k)];
    const Camera& cam = dataset.cameras[std::size_t(image_index)];
    const SubgridSpec& spec = plan.subgrids[b];
    const QuantizedImage<double> target = extract(dataset.images[std::size_t(image_index)], spec);
    const SubgridRender<double> render = render_subgrid(state.grid, cam, spec, config.n_samples,
                                                        plan.jitter ? &jitter : nullptr, grads != nullptr, config.threads);
    const Image<double>& clean = render.out.color;

    if (!ours) {
      const ImageLoss<double> rec = mse_loss(target.values, clean);
      loss.rec += rec.value * inv_views;
      if (grads) {
        Image<double> d_color = rec.grad;
        d_color.px *= inv_views;
        render_subgrid_backward(state.grid, render, d_color, nullptr, nullptr, *grads, config.threads);
      }
      continue;
    }

    const double beta = atmo.beta(k);
    const double airlight = atmo.airlight(k);
    const Image<double> hazy = apply_asm(clean, render.out.depth, beta, airlight);
    const ImageLoss<double> rec = config.rec_mode == RecMode::smrc ? rec_loss(target, hazy, w.lambda_smrc)
                                                                   : mse_loss(target.values, hazy);
    loss.rec += rec.value * inv_views;

    ImageLoss<double> cd;
    ImageLoss<double> tv;
    if (w.lambda2 > 0.0) {
      cd = cd_loss(target.values, clean, w.pool_size, w.cd_hinge);
      loss.cd += cd.value * inv_views;
    }
    if (w.lambda3 > 0.0) {
      tv = tv_loss(clean, w.tv_eps);
      loss.tv += tv.value * inv_views;
    }
    if (!grads) continue;

    Image<double> d_hazy = rec.grad;
    d_hazy.px *= inv_views;
    AsmGrads<double> ag = asm_backward(clean, render.out.depth, beta, airlight, d_hazy);
    if (w.lambda2 > 0.0) ag.d_clean.px += (w.lambda2 * inv_views) * cd.grad.px;
    if (w.lambda3 > 0.0) ag.d_clean.px += (w.lambda3 * inv_views) * tv.grad.px;
    render_subgrid_backward(state.grid, render, ag.d_clean, &ag.d_depth, nullptr, *grads, config.threads);
    grads->d_beta_raw()[k] += ag.d_beta * atmo.dbeta_draw(k);
    grads->d_a_raw()[k] += ag.d_airlight * atmo.dairlight_draw(k);
  }

  if (ours) {
    std::vector<int> members = plan.views;
    if (config.cons_mean == ConsMean::dataset) {
      members.resize(dataset.train.size());
      std::iota(members.begin(), members.end(), 0);
    }
    Eigen::VectorXd betas(Eigen::Index(members.size()));
    Eigen::VectorXd airlights(Eigen::Index(members.size()));
    for (std::size_t i = 0; i < members.size(); ++i) {
      betas[Eigen::Index(i)] = atmo.beta(members[i]);
      airlights[Eigen::Index(i)] = atmo.airlight(members[i]);
    }
    const ConsLoss<double> cons = cons_loss<double>(betas, airlights);
    loss.cons = cons.value;
    if (grads && w.lambda1 > 0.0) {
      for (std::size_t i = 0; i < members.size(); ++i) {
        const int k = members[i];
        grads->d_beta_raw()[k] += w.lambda1 * cons.d_beta[Eigen::Index(i)] * atmo.dbeta_draw(k);
        grads->d_a_raw()[k] += w.lambda1 * cons.d_airlight[Eigen::Index(i)] * atmo.dairlight_draw(k);
      }
    }
  }
  loss.total = total_loss(loss.rec, loss.cons, loss.cd, loss.tv, w);
  return loss;
}

StepReport train_step(TrainState& state, const Dataset& dataset, const StepPlan& plan, const TrainConfig& config) {
  const LearningRates lr = lr_at(config.schedule, state.iteration, config.total_iterations);
  GradBuffer<double> grads = GradBuffer<double>::like(state.grid, state.atmosphere.size());
  StepReport report;
  report.iter = state.iteration;
  report.loss = evaluate_loss(state, dataset, plan, config, &grads);
  // Check before touching any parameter so a failed step leaves the state intact.
  if (!grads.all_finite()) throw std::runtime_error("diverged");
  adam_step<double>(state.grid.params(), grads.grid, state.grid_opt, lr.grid);
  if (config.mode == TrainMode::ours && !config.freeze_atmosphere) {
    adam_step<double>(state.atmosphere.raw(), grads.atmosphere, state.atmosphere_opt, lr.atmosphere);
  }
  ++state.iteration;
  const Eigen::VectorXd betas = state.atmosphere.betas();
  report.beta_mean = betas.mean();
  report.beta_std = stddev(betas);
  report.a_mean = state.atmosphere.airlights().mean();
  report.lr_grid = lr.grid;
  report.lr_atmo = lr.atmosphere;
  return report;
}

StepReport train_step(TrainState& state, const Dataset& dataset, const TrainConfig& config) {
  Rng rng = derive_rng(state.seed, std::uint64_t(state.iteration));
  const StepPlan plan = plan_step(dataset, config, rng);
  return train_step(state, dataset, plan, config);
}

TrainResult train(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  TrainResult result;
  if (options.resume) {
    result.state = *options.resume;
    if (result.state.config_hash != config.hash()) {
      throw std::invalid_argument("checkpoint was produced with a different configuration");
    }
    if (result.state.atmosphere.size() != Eigen::Index(dataset.train.size())) {
      throw std::invalid_argument("checkpoint does not match the dataset");
    }
    check_against_dataset(dataset, config);
  } else {
    result.state = init_state(dataset, config);
  }
  const bool write = !options.out_dir.empty();
  std::ofstream log;
  if (write) {
    fs::create_directories(options.out_dir);
    log.open(options.out_dir / "metrics.ndjson", options.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write metrics log in " + options.out_dir.string());
  }
  const std::int64_t end = options.stop_at >= 0 ? std::min(options.stop_at, config.total_iterations) : config.total_iterations;
  while (result.state.iteration < end) {
    StepReport report;
    try {
      report = train_step(result.state, dataset, config);
    } catch (const std::runtime_error& e) {
      if (std::string(e.what()) != "diverged") throw;
      fs::path last_good;
      if (write) {
        last_good = options.out_dir / "last_good.hznf";
        save_checkpoint(last_good, result.state);
        json dump{{"error", "diverged"}, {"iteration", result.state.iteration},
                  {"beta", std::vector<double>(result.state.atmosphere.betas().data(),
                                               result.state.atmosphere.betas().data() + result.state.atmosphere.size())},
                  {"grid_finite", result.state.grid.all_finite()}};
        write_text(options.out_dir / "divergence.json", dump.dump(2) + "\n");
      }
      throw TrainingDiverged("diverged at iteration " + std::to_string(result.state.iteration), last_good);
    }
    result.history.push_back(report);
    if (options.on_step) options.on_step(report);
    const bool last = result.state.iteration == config.total_iterations;
    if (write && (report.iter % config.log_every == 0 || last)) {
      log << report.to_json().dump() << "\n";
      log.flush();
    }
    if (write && config.checkpoint_every > 0 && result.state.iteration % config.checkpoint_every == 0 && !last) {
      save_checkpoint(options.out_dir / ("checkpoint_" + std::to_string(result.state.iteration) + ".hznf"), result.state);
    }
  }
  if (write && result.state.iteration == config.total_iterations) {
    save_checkpoint(options.out_dir / "final.hznf", result.state);
  }
  return result;
}

NovelView render_novel_view(const VoxelGrid<double>& grid, const Camera& camera, int n_samples, int threads) {
  RenderImage<double> r = render_image(grid, camera, n_samples, threads);
  NovelView v;
  v.clean = std::move(r.color);
  v.clean.px = v.clean.px.max(0.0).min(1.0);
  v.depth = std::move(r.depth);
  return v;
}

// ---- checkpoint container -------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void put_array(std::string& out, const double* data, std::size_t n) {
  put_u64(out, n);
  for (std::size_t i = 0; i < n; ++i) put_u64(out, std::bit_cast<std::uint64_t>(data[i]));
}
void put_array(std::string& out, const Eigen::VectorXd& v) { put_array(out, v.data(), std::size_t(v.size())); }

struct Reader {
  const std::string& bytes;
  std::size_t pos = 0;

  std::uint64_t get(int width) {
    if (pos + std::size_t(width) > bytes.size()) throw CorruptArtifact("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= std::uint64_t(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += std::size_t(width);
    return v;
  }
  Eigen::VectorXd array() {
    const std::uint64_t n = get(8);
    if (n > (bytes.size() - pos) / 8) throw CorruptArtifact("checkpoint truncated");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) v[Eigen::Index(i)] = std::bit_cast<double>(get(8));
    return v;
  }
};

double hi32(std::uint64_t v) { return double(v >> 32); }
double lo32(std::uint64_t v) { return double(v & 0xffffffffULL); }
std::uint64_t join32(double hi, double lo) { return (std::uint64_t(hi) << 32) | std::uint64_t(lo); }

constexpr std::uint32_t kArrayCount = 7;

}  // namespace

std::string serialize_checkpoint(const TrainState& s) {
  const auto& g = s.grid;
  Eigen::VectorXd header(26);
  header << double(s.iteration), g.resolution().x(), g.resolution().y(), g.resolution().z(), g.bbox_min().x(),
      g.bbox_min().y(), g.bbox_min().z(), g.bbox_max().x(), g.bbox_max().y(), g.bbox_max().z(), g.background().x(),
      g.background().y(), g.background().z(), double(s.atmosphere.size()), hi32(s.seed), lo32(s.seed),
      hi32(s.config_hash), lo32(s.config_hash), double(s.grid_opt.step_count), double(s.atmosphere_opt.step_count),
      s.grid_opt.beta1, s.grid_opt.beta2, s.grid_opt.eps, s.atmosphere_opt.beta1, s.atmosphere_opt.beta2, s.atmosphere_opt.eps;
  std::string out = "HZNF";
  put_u32(out, kCheckpointVersion);
  put_u32(out, kArrayCount);
  put_array(out, header);
  put_array(out, g.params());
  put_array(out, s.atmosphere.raw());
  put_array(out, s.grid_opt.m);
  put_array(out, s.grid_opt.v);
  put_array(out, s.atmosphere_opt.m);
  put_array(out, s.atmosphere_opt.v);
  return out;
}

TrainState parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "HZNF") != 0) throw CorruptArtifact("not a checkpoint (bad magic)");
  Reader r{bytes, 4};
  const auto version = std::uint32_t(r.get(4));
  if (version != kCheckpointVersion) throw CorruptArtifact("unsupported checkpoint version " + std::to_string(version));
  if (r.get(4) != kArrayCount) throw CorruptArtifact("unexpected checkpoint layout");
  const Eigen::VectorXd h = r.array();
  if (h.size() != 26) throw CorruptArtifact("bad checkpoint header");
  TrainState s;
  try {
    s.grid = VoxelGrid<double>(Eigen::Vector3i(int(h[1]), int(h[2]), int(h[3])), Eigen::Vector3d(h[4], h[5], h[6]),
                               Eigen::Vector3d(h[7], h[8], h[9]), 0.0, 0.0, Eigen::Vector3d(h[10], h[11], h[12]));
  } catch (const std::invalid_argument& e) {
    throw CorruptArtifact(std::string("bad checkpoint grid: ") + e.what());
  }
  s.iteration = std::int64_t(h[0]);
  const auto n_images = Eigen::Index(h[13]);
  s.seed = join32(h[14], h[15]);
  s.config_hash = join32(h[16], h[17]);
  Eigen::VectorXd params = r.array();
  Eigen::VectorXd atmo = r.array();
  if (params.size() != s.grid.params().size() || atmo.size() != 2 * n_images) {
    throw CorruptArtifact("checkpoint arrays do not match the header");
  }
  s.grid.params() = std::move(params);
  s.atmosphere = AtmosphereParams<double>(n_images, 0.1, 0.75);
  s.atmosphere.raw() = std::move(atmo);
  s.grid_opt.m = r.array();
  s.grid_opt.v = r.array();
  s.atmosphere_opt.m = r.array();
  s.atmosphere_opt.v = r.array();
  if (s.grid_opt.m.size() != s.grid.params().size() || s.grid_opt.v.size() != s.grid.params().size() ||
      s.atmosphere_opt.m.size() != 2 * n_images || s.atmosphere_opt.v.size() != 2 * n_images) {
    throw CorruptArtifact("optimizer state does not match the parameters");
  }
  s.grid_opt.step_count = std::int64_t(h[18]);
  s.atmosphere_opt.step_count = std::int64_t(h[19]);
  s.grid_opt.beta1 = h[20];
  s.grid_opt.beta2 = h[21];
  s.grid_opt.eps = h[22];
  s.atmosphere_opt.beta1 = h[23];
  s.atmosphere_opt.beta2 = h[24];
  s.atmosphere_opt.eps = h[25];
  if (r.pos != bytes.size()) throw CorruptArtifact("trailing bytes in checkpoint");
  return s;
}

void save_checkpoint(const fs::path& path, const TrainState& state) { write_text(path, serialize_checkpoint(state)); }

TrainState load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot read checkpoint " + path.string());
  return parse_checkpoint(read_text(path));
}

}  // namespace hazefield
