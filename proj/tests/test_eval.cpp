#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "hazefield/dcp.hpp"
#include "hazefield/eval.hpp"
#include "hazefield/io.hpp"
#include "hazefield/metrics.hpp"
#include "hazefield/synth.hpp"
#include "oracles.hpp"

using namespace hazefield;
namespace fs = std::filesystem;

namespace {

// Direct 2-D SSIM: full Gaussian window per position, no separable filtering.
double ssim_oracle(const Image<double>& a, const Image<double>& b) {
  const int k = 11;
  double w[11][11], sum = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) sum += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  int count = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y + k <= a.height; ++y)
      for (int x = 0; x + k <= a.width; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            const double ww = w[i][j] / sum, va = a.at(y + i, x + j, c), vb = b.at(y + i, x + j, c);
            ma += ww * va;
            mb += ww * vb;
            saa += ww * va * va;
            sbb += ww * vb * vb;
            sab += ww * va * vb;
          }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  return total / count;
}

Image<double> smooth_image(int h, int w) {
  Image<double> img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.4 + 0.3 * std::sin(0.2 * x + 0.1 * c) * std::cos(0.15 * y);
  return img;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hazefield_test_eval_" + name);
  fs::remove_all(p);
  return p;
}

fs::path tiny_dataset(const std::string& name) {
  const auto dir = scratch(name);
  CameraIntrinsics k;
  k.width = k.height = 16;
  k.focal = 16;
  const auto cams = generate_cameras(4, 4.0, {20.0, 45.0}, k, 1);
  BuildOptions o;
  o.n_train = 3;
  build_dataset(scene_preset("fixture"), cams, o, dir);
  return dir;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.total_iterations = 6;
  c.grid_resolution = 5;
  c.n_samples = 8;
  c.stride = 4;
  c.views_per_step = 2;
  return c;
}

}  // namespace

TEST(Psnr, KnownValues) {
  oracle::Gen gen(1);
  const auto a = gen.image(6, 6, 0.0, 0.8);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  Image<double> b = a;
  b.px += 0.1;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  const auto c = gen.image(6, 6);
  EXPECT_DOUBLE_EQ(psnr(a, c), psnr(c, a));
  EXPECT_THROW(psnr(a, Image<double>(6, 7)), std::invalid_argument);
}

TEST(Ssim, IdenticalIsOne) {
  oracle::Gen gen(2);
  const auto a = gen.image(16, 16);
  EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
}

TEST(Ssim, ConstantImagesReduceToLuminanceTerm) {
  const auto a = Image<double>::constant(12, 12, 0.5);
  const auto b = Image<double>::constant(12, 12, 0.6);
  EXPECT_NEAR(ssim(a, b), (2 * 0.5 * 0.6 + 1e-4) / (0.25 + 0.36 + 1e-4), 1e-12);
}

TEST(Ssim, MatchesDirectWindowedOracle) {
  oracle::Gen gen(3);
  for (int trial = 0; trial < 5; ++trial) {
    const int h = gen.integer(11, 20), w = gen.integer(11, 20);
    const auto a = gen.image(h, w);
    auto b = a;
    for (Eigen::Index i = 0; i < b.px.size(); ++i) b.px.data()[i] += gen.uniform(-0.2, 0.2);
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-10);
  }
}

TEST(Ssim, CheckerboardVersusNegativeIsNegative) {
  Image<double> a(16, 16), b(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) {
        a.at(y, x, c) = (x + y) % 2;
        b.at(y, x, c) = 1.0 - a.at(y, x, c);
      }
  EXPECT_LT(ssim(a, b), 0.0);
}

TEST(Ssim, SmallShiftOnSmoothImageStaysHigh) {
  const auto a = smooth_image(32, 32);
  Image<double> b = a;
  b.px += 0.1;
  EXPECT_GT(ssim(a, b), 0.9);
  EXPECT_LT(ssim(a, b), 1.0);
}

TEST(Ssim, TooSmallThrows) { EXPECT_THROW(ssim(Image<double>(10, 20), Image<double>(10, 20)), std::invalid_argument); }

TEST(ParamErrorTest, HandExample) {
  const auto e = param_error(0.1388, 0.9309, 0.162, 0.8);
  EXPECT_NEAR(e.rel_beta, 0.143, 1e-3);
  EXPECT_NEAR(e.rel_a, 0.164, 1e-3);
  EXPECT_NEAR(e.average, 0.1535, 1e-3);
  EXPECT_THROW(param_error(0.1, 0.5, 0.0, 0.8), std::invalid_argument);
  EXPECT_THROW(param_error(0.1, 0.5, 0.1, 0.0), std::invalid_argument);
}

TEST(Dcp, DarkChannelIsPatchMinimum) {
  oracle::Gen gen(4);
  const auto img = gen.image(9, 7);
  const auto dark = dark_channel(img, 3);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 7; ++x) {
      double m = 1e9;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= 9 || xx < 0 || xx >= 7) continue;
          for (int c = 0; c < 3; ++c) m = std::min(m, img.at(yy, xx, c));
        }
      EXPECT_EQ(dark.at(y, x), m);
    }
}

TEST(Dcp, SaturatedColorPassesThrough) {
  Image<double> red(20, 20);
  red.px.col(0).setConstant(1.0);
  const auto r = dcp_dehaze_full(red);
  EXPECT_LE((r.dehazed.px - red.px).abs().maxCoeff(), 1e-9);
  EXPECT_TRUE((r.transmission.v == 1.0).all());
}

TEST(Dcp, WhiteImageIsAllAirlight) {
  const auto white = Image<double>::constant(20, 20, 1.0);
  const auto r = dcp_dehaze_full(white);
  EXPECT_NEAR(r.airlight.minCoeff(), 1.0, 1e-12);
  EXPECT_LE((r.transmission.v - 0.05).abs().maxCoeff(), 1e-12);
  EXPECT_LE((r.dehazed.px - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Dcp, InvalidInputs) {
  EXPECT_THROW(dcp_dehaze(Image<double>(10, 10)), std::invalid_argument);
  EXPECT_THROW(dcp_dehaze(Image<double>(20, 20), 0.0), std::invalid_argument);
  EXPECT_THROW(dcp_dehaze(Image<double>(20, 20), 0.95, 15, 1.5), std::invalid_argument);
}

TEST(Dcp, RecoversContrastOnHazedScene) {
  // Textured foreground at depth 4 under a haze-opaque sky strip, which is
  // where the airlight estimate comes from.
  Image<double> clean(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      clean.at(y, x, 0) = 0.1 + 0.6 * ((x / 4) % 2);
      clean.at(y, x, 1) = 0.05 + 0.5 * ((y / 4) % 2);
      clean.at(y, x, 2) = 0.02;
    }
  auto depth = ScalarMap<double>::constant(32, 32, 4.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 32; ++x) depth.at(y, x) = 100.0;
  const auto hazy = apply_asm(clean, depth, 0.2, 0.8);
  const auto r = dcp_dehaze_full(hazy);
  EXPECT_NEAR(r.airlight.mean(), 0.8, 0.01);
  // Score the foreground only: the sky carries no recoverable signal.
  Image<double> fg_out(24, 32), fg_clean(24, 32), fg_hazy(24, 32);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) {
        fg_out.at(y, x, c) = r.dehazed.at(y + 8, x, c);
        fg_clean.at(y, x, c) = clean.at(y + 8, x, c);
        fg_hazy.at(y, x, c) = hazy.at(y + 8, x, c);
      }
  EXPECT_GT(psnr(fg_out, fg_clean), psnr(fg_hazy, fg_clean) + 3.0);
}

TEST(Baselines, NamesAndConfigs) {
  EXPECT_EQ(parse_baseline("ours"), Baseline::ours);
  EXPECT_EQ(parse_baseline("naive"), Baseline::naive);
  EXPECT_EQ(parse_baseline("dcp"), Baseline::dcp);
  EXPECT_EQ(parse_baseline("dcp-then-train"), Baseline::dcp);
  EXPECT_THROW(parse_baseline("magic"), std::invalid_argument);
  EXPECT_EQ(to_string(Baseline::naive), "naive");
  EXPECT_EQ(baseline_config(TrainConfig{}, Baseline::dcp).mode, TrainMode::naive);
  EXPECT_EQ(baseline_config(TrainConfig{}, Baseline::ours).mode, TrainMode::ours);
}

TEST(Ablation, EachTermSwitchesOneThing) {
  const TrainConfig base;
  TrainConfig c = base;
  apply_ablation(c, "smrc");
  EXPECT_EQ(c.rec_mode, RecMode::mse);
  c = base;
  apply_ablation(c, "cons");
  EXPECT_EQ(c.weights.lambda1, 0.0);
  c = base;
  apply_ablation(c, "cd");
  EXPECT_EQ(c.weights.lambda2, 0.0);
  EXPECT_EQ(c.weights.lambda1, base.weights.lambda1);
  c = base;
  apply_ablation(c, "tv");
  EXPECT_EQ(c.weights.lambda3, 0.0);
  EXPECT_THROW(apply_ablation(c, "ssim"), std::invalid_argument);
  EXPECT_EQ(ablation_terms().size(), 4u);
}

TEST(RunEval, MissingGroundTruthIsRejected) {
  const auto dir = tiny_dataset("nogt");
  auto m = load_manifest(dir / "manifest.json");
  m.gt.reset();
  save_manifest(dir / "manifest.json", m);
  try {
    run_eval(dir, Baseline::ours, tiny_config());
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "dataset lacks evaluation ground truth");
  }
  fs::remove_all(dir);
}

TEST(RunEval, ReportSchema) {
  const auto dir = tiny_dataset("schema");
  const auto out = scratch("schema_out");
  EvalOptions o;
  o.out_dir = out;
  const auto r = run_eval(dir, Baseline::ours, tiny_config(), o);
  ASSERT_EQ(r.per_view.size(), 1u);
  ASSERT_TRUE(r.beta_hat && r.a_hat && r.error);
  EXPECT_TRUE(std::isfinite(r.psnr_mean));
  const auto j = nlohmann::json::parse(read_text(out / "report.json"));
  for (const char* key : {"mode", "per_view", "psnr_mean", "ssim_mean", "beta_hat", "a_hat", "rel_beta", "rel_a",
                          "avg_rel_err"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(EvalReport::from_json(j).to_json(), j);
  EXPECT_TRUE(fs::exists(out / "train" / "final.hznf"));

  const auto naive = run_eval(dir, Baseline::naive, tiny_config());
  EXPECT_FALSE(naive.beta_hat.has_value());
  EXPECT_TRUE(naive.to_json()["beta_hat"].is_null());
  fs::remove_all(dir);
  fs::remove_all(out);
}

TEST(RunEval, CheckpointSkipsTraining) {
  const auto dir = tiny_dataset("ckpt");
  const auto out = scratch("ckpt_out");
  EvalOptions o;
  o.out_dir = out;
  const auto first = run_eval(dir, Baseline::ours, tiny_config(), o);
  EvalOptions again;
  again.checkpoint = load_checkpoint(out / "train" / "final.hznf");
  const auto second = run_eval(dir, Baseline::ours, tiny_config(), again);
  EXPECT_EQ(second.to_json(), first.to_json());
  fs::remove_all(dir);
  fs::remove_all(out);
}

TEST(Sweep, WritesOneDatasetPerBeta) {
  const auto work = scratch("sweep");
  SweepSetup setup;
  setup.rig.n_train = 3;
  setup.rig.n_test = 1;
  setup.rig.intrinsics.width = setup.rig.intrinsics.height = 16;
  setup.rig.intrinsics.focal = 16;
  const auto r = run_beta_sweep({0.05, 0.2}, {Baseline::ours, Baseline::naive}, tiny_config(), work, setup);
  ASSERT_EQ(r.reports.size(), 2u);
  ASSERT_EQ(r.reports[0].size(), 2u);
  EXPECT_GE(r.degradation(0), 0.0);
  const auto j = nlohmann::json::parse(read_text(work / "sweep.json"));
  EXPECT_EQ(j["beta"].size(), 2u);
  EXPECT_EQ(j["psnr"]["naive"].size(), 2u);
  std::size_t manifests = 0;
  for (const auto& e : fs::directory_iterator(work))
    if (fs::exists(e.path() / "data" / "manifest.json")) ++manifests;
  EXPECT_EQ(manifests, 2u);
  fs::remove_all(work);
}
