// Acceptance runner: one PASS/FAIL line per criterion.
//
// Criteria 3-6 train at full desk scale (64^3 grid, 20 views at 64x64, 3000
// iterations) and take most of the runtime. Property suites (criterion 7) are
// the gtest cases compiled into this binary from test_properties.cpp.
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "hazefield/eval.hpp"
#include "hazefield/gradcheck.hpp"
#include "hazefield/haze.hpp"
#include "hazefield/io.hpp"
#include "hazefield/synth.hpp"
#include "hazefield/trainer.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace hazefield;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kFixtureBeta = 0.162;
constexpr double kFixtureAirlight = 0.8;

struct Outcome {
  bool pass = false;
  std::string detail;
  json data = json::object();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shared state: the fixture dataset and the full-scale runs on it.
struct Context {
  fs::path work;
  TrainConfig config;
  int threads = 1;
  std::optional<EvalReport> ours;
  std::optional<EvalReport> naive;
  std::vector<StepReport> ours_history;

  fs::path fixture() {
    const fs::path dir = work / "fixture" / "data";
    if (!fs::exists(dir / "manifest.json")) {
      BuildOptions build;
      build.beta = kFixtureBeta;
      build.airlight = kFixtureAirlight;
      build.n_train = RigSpec{}.n_train;
      build_dataset(scene_preset("fixture"), generate_rig(RigSpec{}), build, dir);
    }
    return dir;
  }

  const EvalReport& ours_report() {
    if (!ours) {
      EvalOptions opt;
      opt.out_dir = work / "fixture" / "ours";
      opt.on_step = [this](const StepReport& r) {
        ours_history.push_back(r);
        if (r.iter % 500 == 0) std::fprintf(stderr, "  [ours] iter %lld\n", static_cast<long long>(r.iter));
      };
      ours = run_eval(fixture(), Baseline::ours, config, opt);
    }
    return *ours;
  }

  const EvalReport& naive_report() {
    if (!naive) {
      EvalOptions opt;
      opt.out_dir = work / "fixture" / "naive";
      naive = run_eval(fixture(), Baseline::naive, config, opt);
    }
    return *naive;
  }
};

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradCheckReport r = run_gradcheck(1);
  const double secs = seconds_since(t0);
  double worst_pipeline = 0, worst_loss = 0;
  for (const auto& row : r.rows) {
    double& w = row.tolerance <= kLossGradTolerance ? worst_loss : worst_pipeline;
    w = std::max(w, row.max_rel_error);
  }
  Outcome o;
  o.pass = r.all_pass() && secs < 120.0;
  o.detail = "worst rel. error " + fmt("%.2e", worst_pipeline) + " (tol 1e-3), isolated losses " +
             fmt("%.2e", worst_loss) + " (tol 1e-4), " + std::to_string(r.rows.size()) + " components, " +
             fmt("%.1f", secs) + " s (limit 120 s)";
  o.data = r.to_json();
  o.data["seconds"] = secs;
  return o;
}

Outcome criterion_asm_round_trip() {
  oracle::Gen gen(2024);
  double worst_exact = 0, worst_ratio = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 16, w = 16;
    const auto J = gen.image(h, w);
    const auto D = gen.map(h, w, 1.5, 7.0);
    const double beta = gen.uniform(0.04, 0.36), A = gen.uniform(0.6, 1.0);
    const auto I = apply_asm(J, D, beta, A);
    worst_exact = std::max(worst_exact, (invert_asm(I, D, beta, A).px - J.px).abs().maxCoeff());
    const auto back = invert_asm(quantize(I).values, D, beta, A);
    for (Eigen::Index p = 0; p < J.px.rows(); ++p) {
      const double bound = (0.5 / 255.0) / transmission(D.v[p], beta);
      worst_ratio = std::max(worst_ratio, (back.px.row(p) - J.px.row(p)).abs().maxCoeff() / bound);
    }
  }
  Outcome o;
  o.pass = worst_exact <= 1e-6 && worst_ratio <= 1.0 + 1e-9;
  o.detail = "unquantized max error " + fmt("%.2e", worst_exact) + " (tol 1e-6); quantized error reaches " +
             fmt("%.3f", worst_ratio) + " of the 1/(2*255)/t bound";
  o.data = {{"max_error_unquantized", worst_exact}, {"max_fraction_of_quantized_bound", worst_ratio}};
  return o;
}

Outcome criterion_recovery(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const EvalReport& r = ctx.ours_report();
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = r.error && r.error->average <= 0.25;
  o.detail = "beta_hat " + fmt("%.4f", *r.beta_hat) + " (gt 0.162), A_hat " + fmt("%.4f", *r.a_hat) +
             " (gt 0.8), average relative error " + fmt("%.1f%%", 100 * r.error->average) + " (limit 25%), " +
             fmt("%.0f", secs) + " s";
  o.data = r.to_json();
  return o;
}

Outcome invariant_consistency(Context& ctx) {
  ctx.ours_report();
  const auto& h = ctx.ours_history;
  Outcome o;
  if (h.size() <= 100) {
    o.detail = "run too short to compare (history of " + std::to_string(h.size()) + " steps)";
    return o;
  }
  const double early = h[100].beta_std, last = h.back().beta_std;
  o.pass = last < early;
  o.detail = "per-view beta std " + fmt("%.2e", last) + " at the last iteration vs " + fmt("%.2e", early) +
             " at iteration 100";
  o.data = {{"beta_std_iter100", early}, {"beta_std_final", last}};
  return o;
}

Outcome criterion_dehazing(Context& ctx) {
  const EvalReport& ours = ctx.ours_report();
  const EvalReport& naive = ctx.naive_report();
  Outcome o;
  const double gain = ours.psnr_mean - naive.psnr_mean;
  o.pass = gain >= 2.0 && ours.psnr_mean > ours.hazy_psnr_mean;
  o.detail = "ours " + fmt("%.2f", ours.psnr_mean) + " dB, naive " + fmt("%.2f", naive.psnr_mean) + " dB (gain " +
             fmt("%.2f", gain) + ", need >= 2), hazy input " + fmt("%.2f", ours.hazy_psnr_mean) + " dB";
  o.data = {{"ours", ours.to_json()}, {"naive", naive.to_json()}};
  return o;
}

Outcome criterion_sweep(Context& ctx) {
  const std::vector<double> betas{0.04, 0.12, 0.20, 0.28, 0.36};
  SweepSetup setup;
  setup.build.airlight = kFixtureAirlight;
  const SweepResult r = run_beta_sweep(betas, {Baseline::ours, Baseline::naive}, ctx.config, ctx.work / "sweep", setup);
  const double d_ours = r.degradation(0), d_naive = r.degradation(1);
  Outcome o;
  o.pass = d_ours <= 6.0 && d_naive > d_ours;
  std::ostringstream curve;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    curve << (i ? ", " : "") << fmt("%.2f", betas[i]) << ":" << fmt("%.1f", r.reports[0][i].psnr_mean) << "/"
          << fmt("%.1f", r.reports[1][i].psnr_mean);
  }
  o.detail = "ours drops " + fmt("%.2f", d_ours) + " dB (limit 6), naive drops " + fmt("%.2f", d_naive) +
             " dB; beta:ours/naive " + curve.str() + "; curves in " + (ctx.work / "sweep" / "sweep.json").string();
  o.data = r.to_json();
  return o;
}

Outcome criterion_ablation(Context& ctx) {
  const EvalReport& full = ctx.ours_report();
  const auto entries = run_ablation(ctx.fixture(), ctx.config, ablation_terms(), ctx.work / "ablation", &full);
  Outcome o;
  const EvalReport* no_cd = nullptr;
  std::ostringstream others;
  for (const auto& e : entries) {
    if (e.term == "cd") no_cd = &e.report;
    if (e.term != "full") {
      others << " no_" << e.term << " " << fmt("%.2f", e.report.psnr_mean) << " dB";
      if (e.report.beta_hat) others << " beta " << fmt("%.4f", *e.report.beta_hat);
      others << ";";
    }
  }
  const double drop = full.psnr_mean - no_cd->psnr_mean;
  const bool collapsed = *no_cd->beta_hat < 0.05 * kFixtureBeta;
  o.pass = collapsed || drop >= 3.0;
  o.detail = "without cd: beta_hat " + fmt("%.4f", *no_cd->beta_hat) + " (collapse below " +
             fmt("%.4f", 0.05 * kFixtureBeta) + "), PSNR drop " + fmt("%.2f", drop) + " dB (need >= 3); full " +
             fmt("%.2f", full.psnr_mean) + " dB;" + others.str();
  o.data = ablation_to_json(entries);
  return o;
}

Outcome criterion_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  ::testing::GTEST_FLAG(filter) = "Property.*";
  const int rc = RUN_ALL_TESTS();
  const double secs = seconds_since(t0);
  const auto* unit = ::testing::UnitTest::GetInstance();
  Outcome o;
  o.pass = rc == 0 && unit->test_to_run_count() > 0 && secs < 300.0;
  o.detail = std::to_string(unit->successful_test_count()) + "/" + std::to_string(unit->test_to_run_count()) +
             " property suites passed, 1000 cases each, " + fmt("%.1f", secs) + " s (limit 300 s)";
  o.data = {{"passed", unit->successful_test_count()}, {"total", unit->test_to_run_count()}, {"seconds", secs}};
  return o;
}

std::set<int> parse_ids(const std::string& list) {
  std::set<int> ids;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) ids.insert(std::stoi(item));
  }
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  CLI::App app{"hazefield acceptance suite"};
  std::string work = "acceptance_work", only, known;
  int threads = 1;
  app.add_option("--work", work, "Scratch directory for datasets and runs");
  app.add_option("--only", only, "Comma-separated criteria to run (default: all)");
  app.add_option("--known-fail", known,
                 "Comma-separated criteria whose failure is documented; they still print FAIL but do not fail the run");
  app.add_option("--threads", threads, "Worker threads for rendering")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.work = work;
  ctx.config.threads = threads;
  fs::create_directories(ctx.work);
  const std::set<int> selected = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7} : parse_ids(only);
  const std::set<int> allowed = parse_ids(known);

  struct Entry {
    int id;
    std::string name;
    std::function<Outcome()> run;
  };
  const std::vector<Entry> criteria{
      {1, "gradient suite", criterion_gradients},
      {2, "haze model round trip", criterion_asm_round_trip},
      {3, "parameter recovery", [&] { return criterion_recovery(ctx); }},
      {4, "dehazing gain", [&] { return criterion_dehazing(ctx); }},
      {5, "haze-density sweep", [&] { return criterion_sweep(ctx); }},
      {6, "contrast-term ablation", [&] { return criterion_ablation(ctx); }},
      {7, "property suites", criterion_properties},
  };

  json summary = json::object();
  int hard_failures = 0;
  for (const auto& c : criteria) {
    if (!selected.count(c.id)) continue;
    std::fprintf(stderr, "running criterion %d (%s)...\n", c.id, c.name.c_str());
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    const bool excused = !o.pass && allowed.count(c.id);
    std::printf("CRITERION %d %s %s: %s%s\n", c.id, o.pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(),
                excused ? " [known failure, documented in README]" : "");
    std::fflush(stdout);
    if (!o.pass && !excused) ++hard_failures;
    summary[std::to_string(c.id)] = {{"name", c.name}, {"pass", o.pass}, {"detail", o.detail}, {"data", o.data}};
    if (c.id == 3) {
      const Outcome inv = invariant_consistency(ctx);
      std::printf("INVARIANT %s atmospheric consistency: %s\n", inv.pass ? "PASS" : "FAIL", inv.detail.c_str());
      std::fflush(stdout);
      if (!inv.pass) ++hard_failures;
      summary["consistency_invariant"] = {{"pass", inv.pass}, {"detail", inv.detail}, {"data", inv.data}};
    }
  }
  write_text(ctx.work / "acceptance.json", summary.dump(2) + "\n");
  return hard_failures == 0 ? 0 : 1;
}
