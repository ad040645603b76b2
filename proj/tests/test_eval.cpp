#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "glint/eval.hpp"

using namespace glint;
namespace fs = std::filesystem;

namespace {

ImageRGB filled(int w, int h, std::initializer_list<float> values) {
  ImageRGB img(w, h);
  std::copy(values.begin(), values.end(), img.data.begin());
  return img;
}

ChainRow row(std::uint64_t it, std::vector<double> state) { return {it, 0, "small", true, 1.0, std::move(state)}; }

}  // namespace

TEST(Metrics, HandComputed) {
  const auto ref = filled(2, 1, {1, 0, 2, 0.5f, 0.25f, 4});
  const auto pred = filled(2, 1, {1.5f, 0.01f, 2, 0.5f, 0.75f, 3});
  // |diff| = .5 .01 0 0 .5 1; mean 2.01/6
  EXPECT_NEAR(mae(pred, ref), 2.01 / 6, 1e-7);
  const double m = (0.5 / 1.01 + 0.01 / 0.01 + 0 + 0 + 0.5 / 0.26 + 1.0 / 4.01) / 6;
  EXPECT_NEAR(mape(pred, ref), m, 1e-6);
  EXPECT_EQ(mape(ref, ref), 0.0);
  EXPECT_EQ(mae(ref, ref), 0.0);
  EXPECT_THROW(mae(ImageRGB(2, 2), ref), DimensionError);
}

TEST(Metrics, LuminanceRangeClamp) {
  EXPECT_EQ(luminance_range(filled(1, 1, {0.1f, 0.1f, 0.1f})), 1.0);
  EXPECT_NEAR(luminance_range(filled(1, 1, {10, 10, 10})), 10.0, 1e-5);
  EXPECT_NEAR(luminance_range(filled(1, 1, {0, 2, 0})), 1.4304, 1e-5);
}

TEST(Metrics, IdenticalImagesScoreZero) {
  std::mt19937 rng(1);
  ImageRGB img(24, 16);
  for (auto& x : img.data) x = std::uniform_real_distribution<float>(0, 3)(rng);
  const Metrics m = measure(img, img);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_NEAR(m.dssim, 0.0, 1e-12);
  EXPECT_NEAR(m.loss, 0.0, 1e-12);
  ImageRGB other = img;
  for (auto& x : other.data) x *= 0.5f;
  EXPECT_GT(dssim(other, img), 0.0);
}

TEST(Chains, HistogramCountsAndWarmup) {
  std::vector<ChainRow> rows{row(0, {0.1, 0.1}), row(5, {0.1, 0.9}), row(5, {0.99, 0.2}), row(6, {1.0, 1.0})};
  const auto h = chain_histogram(rows, 0, 1, 2, 5);
  EXPECT_EQ(h.total, 3u);
  EXPECT_EQ(h.at(0, 1), 1u);
  EXPECT_EQ(h.at(1, 0), 1u);
  EXPECT_EQ(h.at(1, 1), 1u);
  EXPECT_EQ(h.at(0, 0), 0u);
  const auto img = histogram_image(h);
  EXPECT_EQ(img.at(0, 1, 0), 1.0f);
  EXPECT_THROW(chain_histogram(rows, 0, 2, 2), RangeError);
}

TEST(Chains, ChiSquareAgainstTable) {
  // Counts 30,30,20,20 give chi2 = 4 with 3 dof; the survival function there
  // is 2(1 - Phi(2)) + sqrt(8/pi) e^-2.
  Histogram2D h{2, {30, 30, 20, 20}, 100};
  EXPECT_NEAR(uniformity_p_value(h), 0.2614641, 1e-6);
  // Counts 64,36,50,50 give chi2 = 7.84, just past the tabulated 5% critical
  // value 7.815.
  Histogram2D crit{2, {64, 36, 50, 50}, 200};
  EXPECT_NEAR(uniformity_p_value(crit), 0.0494368, 1e-6);
  EXPECT_LT(uniformity_p_value(crit), 0.05);
  Histogram2D uniform{2, {25, 25, 25, 25}, 100};
  EXPECT_NEAR(uniformity_p_value(uniform), 1.0, 1e-12);
  Histogram2D peaked{2, {100, 0, 0, 0}, 100};
  EXPECT_LT(uniformity_p_value(peaked), 1e-12);
}

TEST(Chains, BandMass) {
  std::vector<ChainRow> rows{row(0, {0.05}), row(10, {0.05}), row(10, {0.3}), row(11, {0.6}), row(12, {0.95})};
  const std::vector<bool> band{false, true, true, false};
  EXPECT_NEAR(band_mass(rows, 0, band, 10), 0.5, 1e-15);
  EXPECT_NEAR(band_mass(rows, 0, band, 0), 0.4, 1e-15);
  EXPECT_EQ(band_fraction(band), 0.5);
}

TEST(Chains, CsvRoundTrip) {
  const auto path = (fs::temp_directory_path() / "glint_chains_test.csv").string();
  {
    ChainLog log(path, 3);
    log.row(7, 2, StepKind::Large, true, 0.125, {0.1, 0.2, 0.3});
    log.row(8, 0, StepKind::Small, false, 2.5, {0.4, 0.5, 0.6});
  }
  const auto rows = read_chain_csv(path);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].iteration, 7u);
  EXPECT_EQ(rows[0].chain, 2u);
  EXPECT_EQ(rows[0].step, "large");
  EXPECT_TRUE(rows[0].accepted);
  EXPECT_FALSE(rows[1].accepted);
  EXPECT_EQ(rows[1].state, (std::vector<double>{0.4, 0.5, 0.6}));
  fs::remove(path);
  EXPECT_THROW(read_chain_csv(path), FormatError);
}

TEST(Mirror, ReflectionPixels) {
  const auto b = builtin("MirrorRoom");
  const auto centered = instantiate(b.space, SceneVector({0.5, 0.5}));
  const auto aside = instantiate(b.space, SceneVector({1.0, 0.5}));
  EXPECT_GT(reflection_pixels(centered, 64), 0);
  EXPECT_EQ(reflection_pixels(aside, 64), 0);
  EXPECT_THROW(reflection_pixels(instantiate(builtin("CausticBox").space, SceneVector(std::vector<double>(9, 0.5))), 8),
               ConfigError);
}

TEST(Mirror, VisibleBandIsInteriorInterval) {
  const auto space = builtin("MirrorRoom").space;
  const auto band = mirror_visible_band(space, 0, 32, 32);
  const double frac = band_fraction(band);
  EXPECT_GT(frac, 0.05);
  EXPECT_LT(frac, 0.6);
  EXPECT_FALSE(band.front());
  EXPECT_FALSE(band.back());
  EXPECT_TRUE(band[16] || band[15]);
}

TEST(Validation, SaveLoadAndCache) {
  const auto dir = fs::temp_directory_path() / "glint_validation_test";
  fs::remove_all(dir);
  const auto space = builtin("MirrorRoom").space;
  const auto vs = cached_validation(dir, "MirrorRoom", space, 3, 16, 4, 5, "auto");
  EXPECT_EQ(vs.selection, "mirror");
  ASSERT_EQ(vs.frames.size(), 3u);
  for (const auto& f : vs.frames)
    EXPECT_GE(reflection_pixels(make_setup(space, f.scene, f.camera).instance, 16), 16 * 16 / 50);
  const auto back = load_validation(dir);
  ASSERT_EQ(back.frames.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(back.frames[k].scene, vs.frames[k].scene);
    EXPECT_EQ(back.frames[k].camera, vs.frames[k].camera);
    EXPECT_EQ(back.frames[k].reference.data, vs.frames[k].reference.data);
  }
  // A matching request is served from disk, a different one rebuilds.
  const auto t0 = fs::last_write_time(dir / "frames.json");
  cached_validation(dir, "MirrorRoom", space, 3, 16, 4, 5, "auto");
  EXPECT_EQ(fs::last_write_time(dir / "frames.json"), t0);
  const auto other = cached_validation(dir, "MirrorRoom", space, 2, 16, 4, 5, "uniform");
  EXPECT_EQ(load_validation(dir).frames.size(), 2u);
  EXPECT_EQ(other.selection, "uniform");
  EXPECT_THROW(resolve_selection("best", space), ConfigError);
  fs::remove_all(dir);
}

TEST(Validation, EvaluateAndLatestCheckpoint) {
  const auto dir = fs::temp_directory_path() / "glint_eval_run";
  fs::remove_all(dir);
  fs::create_directories(dir / "checkpoints");
  const PixelGenerator<float> net({2, 8, 2}, 1);
  const AdamState<float> adam(net.parameter_count());
  save_checkpoint((dir / "checkpoints" / "ckpt_9.bin").string(), net, adam);
  save_checkpoint((dir / "checkpoints" / "ckpt_10.bin").string(), net, adam);
  EXPECT_EQ(latest_checkpoint(dir).filename(), "ckpt_10.bin");
  EXPECT_THROW(latest_checkpoint(dir / "nope"), ConfigError);

  const auto space = builtin("MirrorRoom").space;
  const auto vs = build_validation("MirrorRoom", space, 2, 16, 2, 3, "uniform");
  const auto report = evaluate_net(net, space, vs);
  ASSERT_EQ(report.frames.size(), 2u);
  EXPECT_NEAR(report.mean.mae, 0.5 * (report.frames[0].metrics.mae + report.frames[1].metrics.mae), 1e-12);
  const auto csv = report_csv(report, "r");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "run,frame,mape,mae,dssim,loss");
  EXPECT_NE(csv.find("r,mean,"), std::string::npos);
  fs::remove_all(dir);
}
