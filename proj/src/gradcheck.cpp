#include "hazefield/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hazefield/field.hpp"
#include "hazefield/haze.hpp"
#include "hazefield/losses.hpp"
#include "hazefield/render.hpp"
#include "hazefield/rng.hpp"
#include "hazefield/synth.hpp"
#include "hazefield/trainer.hpp"

namespace hazefield {

using Eigen::VectorXd;

VectorXd numeric_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h) {
  VectorXd g(x.size());
  VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_relative_error(const VectorXd& analytic, const VectorXd& numeric) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("max_relative_error: size mismatch");
  if (analytic.size() == 0) return 0.0;
  const double floor = std::max(1e-12, 1e-3 * numeric.cwiseAbs().maxCoeff());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

bool GradCheckReport::all_pass() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.pass; });
}

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    rs.push_back({{"component", r.component},
                  {"max_rel_error", r.max_rel_error},
                  {"tolerance", r.tolerance},
                  {"probes", r.probes},
                  {"pass", r.pass}});
  }
  return {{"seed", seed}, {"pass", all_pass()}, {"checks", rs}};
}

std::string GradCheckReport::table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %12s %10s %7s  %s\n", "component", "max_rel_err", "tolerance", "probes", "result");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-24s %12.3e %10.1e %7lld  %s\n", r.component.c_str(), r.max_rel_error, r.tolerance,
                  static_cast<long long>(r.probes), r.pass ? "PASS" : "FAIL");
    os << line;
  }
  return os.str();
}

namespace {

struct Checker {
  GradCheckReport& report;
  void add(const std::string& name, const VectorXd& analytic, const VectorXd& numeric, double tol) {
    GradCheckRow r;
    r.component = name;
    r.max_rel_error = max_relative_error(analytic, numeric);
    r.tolerance = tol;
    r.probes = analytic.size();
    r.pass = std::isfinite(r.max_rel_error) && r.max_rel_error <= tol;
    report.rows.push_back(r);
  }
};

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

Image<double> random_image(Rng& rng, int h, int w, double lo = 0.0, double hi = 1.0) {
  Image<double> img(h, w);
  for (Eigen::Index i = 0; i < img.px.size(); ++i) img.px.data()[i] = uniform(rng, lo, hi);
  return img;
}

Image<double> image_from(const VectorXd& x, int h, int w) {
  Image<double> img(h, w);
  std::copy(x.data(), x.data() + x.size(), img.px.data());
  return img;
}

VectorXd flat(const Image<double>& img) { return Eigen::Map<const VectorXd>(img.px.data(), img.px.size()); }

double dot(const Image<double>& a, const Image<double>& b) { return (a.px * b.px).sum(); }

void randomize_grid(VoxelGrid<double>& grid, Rng& rng) {
  const Eigen::Index n = grid.node_count();
  for (Eigen::Index i = 0; i < n; ++i) grid.params()[i] = uniform(rng, -2.0, 1.5);
  for (Eigen::Index i = n; i < 4 * n; ++i) grid.params()[i] = uniform(rng, -2.0, 2.0);
}

void check_render(Checker& check, Rng& rng) {
  const int res = 4 + int(uniform_index(rng, 5));  // 4..8
  VoxelGrid<double> grid(Eigen::Vector3i::Constant(res), Eigen::Vector3d::Constant(-1.0), Eigen::Vector3d::Constant(1.0),
                         -1.0, 0.0, Eigen::Vector3d(uniform01(rng), uniform01(rng), uniform01(rng)));
  randomize_grid(grid, rng);
  Camera cam;
  cam.width = 8;
  cam.height = 8;
  cam.focal = 8.0;
  cam.principal_point = Eigen::Vector2d(4.0, 4.0);
  cam.near = 1.0;
  cam.far = 4.5;
  cam.cam_to_world = look_at(Eigen::Vector3d(2.2, 1.1, 0.9), Eigen::Vector3d::Zero());
  const SubgridSpec spec = SubgridSpec::full(cam.height, cam.width);
  const int n_samples = 24;
  const std::uint64_t jitter_seed = rng();

  const Image<double> rc = random_image(rng, cam.height, cam.width, -1.0, 1.0);
  ScalarMap<double> rd(cam.height, cam.width);
  ScalarMap<double> ro(cam.height, cam.width);
  for (Eigen::Index i = 0; i < rd.v.size(); ++i) {
    rd.v[i] = uniform(rng, -1.0, 1.0);
    ro.v[i] = uniform(rng, -1.0, 1.0);
  }

  const VectorXd x0 = grid.params();
  auto render_at = [&](const VectorXd& x) {
    VoxelGrid<double> g = grid;
    g.params() = x;
    Rng jitter(jitter_seed);
    return render_subgrid(g, cam, spec, n_samples, &jitter, true).out;
  };
  Rng jitter(jitter_seed);
  const SubgridRender<double> base = render_subgrid(grid, cam, spec, n_samples, &jitter, true);
  const Image<double> zero_c(cam.height, cam.width);

  GradBuffer<double> g = GradBuffer<double>::like(grid, 0);
  render_subgrid_backward(grid, base, rc, nullptr, nullptr, g);
  check.add("render.color", g.grid, numeric_gradient([&](const VectorXd& x) { return dot(render_at(x).color, rc); }, x0, 1e-6),
            kPipelineGradTolerance);

  g.set_zero();
  render_subgrid_backward(grid, base, zero_c, &rd, nullptr, g);
  check.add("render.depth", g.grid,
            numeric_gradient([&](const VectorXd& x) { return (render_at(x).depth.v * rd.v).sum(); }, x0, 1e-6),
            kPipelineGradTolerance);

  g.set_zero();
  render_subgrid_backward(grid, base, zero_c, nullptr, &ro, g);
  check.add("render.opacity", g.grid,
            numeric_gradient([&](const VectorXd& x) { return (render_at(x).opacity.v * ro.v).sum(); }, x0, 1e-6),
            kPipelineGradTolerance);
}

void check_asm(Checker& check, Rng& rng) {
  const int h = 8, w = 8;
  const Image<double> clean = random_image(rng, h, w);
  ScalarMap<double> depth(h, w);
  for (Eigen::Index i = 0; i < depth.v.size(); ++i) depth.v[i] = uniform(rng, 0.5, 6.0);
  const double beta = uniform(rng, 0.05, 0.4);
  const double airlight = uniform(rng, 0.5, 1.2);
  const Image<double> r = random_image(rng, h, w, -1.0, 1.0);
  const AsmGrads<double> g = asm_backward(clean, depth, beta, airlight, r);

  check.add("asm.clean", flat(g.d_clean),
            numeric_gradient([&](const VectorXd& x) { return dot(apply_asm(image_from(x, h, w), depth, beta, airlight), r); },
                             flat(clean), 1e-6),
            kPipelineGradTolerance);
  check.add("asm.depth", Eigen::Map<const VectorXd>(g.d_depth.v.data(), g.d_depth.v.size()),
            numeric_gradient(
                [&](const VectorXd& x) {
                  ScalarMap<double> d = depth;
                  d.v = x.array();
                  return dot(apply_asm(clean, d, beta, airlight), r);
                },
                depth.v.matrix(), 1e-6),
            kPipelineGradTolerance);
  VectorXd ab(2);
  ab << g.d_beta, g.d_airlight;
  VectorXd p0(2);
  p0 << beta, airlight;
  check.add("asm.beta_airlight", ab,
            numeric_gradient([&](const VectorXd& p) { return dot(apply_asm(clean, depth, p[0], p[1]), r); }, p0, 1e-7),
            kPipelineGradTolerance);
}

void check_smrc(Checker& check, Rng& rng) {
  const int h = 6, w = 6, levels = 8;
  const QuantizedImage<double> target = quantize(random_image(rng, h, w), levels);
  const double lambda = uniform(rng, 0.05, 1.0);
  // Stay clear of the interval bounds and the observation, where the penalty is not smooth.
  Image<double> pred(h, w);
  for (Eigen::Index i = 0; i < pred.px.size(); ++i) {
    double u;
    do {
      u = uniform(rng, -0.2, 1.2);
    } while (std::abs(u - target.lo.px.data()[i]) < 1e-3 || std::abs(u - target.hi.px.data()[i]) < 1e-3);
    pred.px.data()[i] = u;
  }
  const ImageLoss<double> l = rec_loss(target, pred, lambda);
  check.add("loss.smrc", flat(l.grad),
            numeric_gradient([&](const VectorXd& x) { return rec_loss(target, image_from(x, h, w), lambda).value; }, flat(pred),
                             1e-7),
            kLossGradTolerance);
}

void check_cons(Checker& check, Rng& rng) {
  const Eigen::Index n = 6;
  VectorXd betas(n), airlights(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    betas[i] = uniform(rng, 0.05, 0.4);
    airlights[i] = uniform(rng, 0.5, 1.2);
  }
  const ConsLoss<double> l = cons_loss<double>(betas, airlights);
  VectorXd x0(2 * n), analytic(2 * n);
  x0 << betas, airlights;
  analytic << l.d_beta, l.d_airlight;
  check.add("loss.cons", analytic,
            numeric_gradient([&](const VectorXd& x) { return cons_loss<double>(x.head(n), x.tail(n)).value; }, x0, 1e-7),
            kLossGradTolerance);
}

void check_cd(Checker& check, Rng& rng) {
  const int h = 12, w = 12;
  const Image<double> hazy = random_image(rng, h, w);
  const Image<double> est = random_image(rng, h, w);
  for (int s : {4, 5}) {
    const ImageLoss<double> l = cd_loss(hazy, est, s);
    check.add("loss.cd(s=" + std::to_string(s) + ")", flat(l.grad),
              numeric_gradient([&](const VectorXd& x) { return cd_loss(hazy, image_from(x, h, w), s).value; }, flat(est), 1e-6),
              kLossGradTolerance);
  }
}

void check_tv(Checker& check, Rng& rng) {
  const int h = 10, w = 9;
  const Image<double> img = random_image(rng, h, w);
  const double eps = 1e-3;
  const ImageLoss<double> l = tv_loss(img, eps);
  check.add("loss.tv", flat(l.grad),
            numeric_gradient([&](const VectorXd& x) { return tv_loss(image_from(x, h, w), eps).value; }, flat(img), 1e-6),
            kLossGradTolerance);
}

void check_end_to_end(Checker& check, Rng& rng) {
  CameraIntrinsics intr;
  intr.width = 16;
  intr.height = 16;
  intr.focal = 16.0;
  const std::vector<Camera> cams = generate_cameras(3, 4.0, {20.0, 45.0}, intr, rng());
  BuildOptions build;
  build.levels = 4;  // wide intervals keep the probes away from the penalty's seams
  build.n_train = 3;
  const Dataset data = make_dataset(scene_preset("fixture"), cams, build);

  TrainConfig cfg;
  cfg.grid_resolution = 6;
  cfg.n_samples = 16;
  cfg.stride = 2;
  cfg.views_per_step = 3;
  cfg.weights.lambda1 = 1.0;
  cfg.weights.lambda2 = 0.5;
  cfg.weights.lambda3 = 0.1;
  cfg.seed = rng();
  TrainState state = init_state(data, cfg);
  randomize_grid(state.grid, rng);
  for (Eigen::Index k = 0; k < state.atmosphere.size(); ++k) {
    state.atmosphere.beta_raw()[k] = uniform(rng, -2.5, -1.0);
    state.atmosphere.a_raw()[k] = uniform(rng, -0.5, 0.8);
  }
  Rng plan_rng = derive_rng(cfg.seed, 0);
  const StepPlan plan = plan_step(data, cfg, plan_rng);

  GradBuffer<double> g = GradBuffer<double>::like(state.grid, state.atmosphere.size());
  evaluate_loss(state, data, plan, cfg, &g);

  const VectorXd grid0 = state.grid.params();
  check.add("end_to_end.grid", g.grid,
            numeric_gradient(
                [&](const VectorXd& x) {
                  TrainState s = state;
                  s.grid.params() = x;
                  return evaluate_loss(s, data, plan, cfg, nullptr).total;
                },
                grid0, 1e-6),
            kPipelineGradTolerance);
  const VectorXd atmo0 = state.atmosphere.raw();
  const VectorXd num_atmo = numeric_gradient(
      [&](const VectorXd& x) {
        TrainState s = state;
        s.atmosphere.raw() = x;
        return evaluate_loss(s, data, plan, cfg, nullptr).total;
      },
      atmo0, 1e-6);
  const Eigen::Index m = state.atmosphere.size();
  check.add("end_to_end.beta_raw", g.atmosphere.head(m), num_atmo.head(m), kPipelineGradTolerance);
  check.add("end_to_end.a_raw", g.atmosphere.tail(m), num_atmo.tail(m), kPipelineGradTolerance);
}

}  // namespace

GradCheckReport run_gradcheck(std::uint64_t seed) {
  GradCheckReport report;
  report.seed = seed;
  Checker check{report};
  Rng rng(seed);
  check_render(check, rng);
  check_asm(check, rng);
  check_smrc(check, rng);
  check_cons(check, rng);
  check_cd(check, rng);
  check_tv(check, rng);
  check_end_to_end(check, rng);
  return report;
}

}  // namespace hazefield
