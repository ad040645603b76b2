#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "glint/train.hpp"

using namespace glint;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny(std::uint64_t iterations) {
  TrainConfig c;
  c.scene = "MirrorRoom";
  c.iterations = iterations;
  c.chains = 4;
  c.patch = 8;
  c.schedule = {16, 4, 10, 32};
  c.spp = 2;
  c.hidden = 16;
  c.layers = 2;
  c.validation_every = 0;
  c.validation_frames = 0;
  return c;
}

std::vector<std::string> run_log(const TrainConfig& c) {
  Trainer t(c);
  for (std::uint64_t i = 0; i < c.iterations; ++i) t.step();
  return log_signature(t.log());
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Schedule, PaperClosedForm) {
  const auto s = ResolutionSchedule::paper();
  EXPECT_EQ(s.at(0), 128);
  EXPECT_EQ(s.at(1999), 128);
  EXPECT_EQ(s.at(2000), 132);
  EXPECT_EQ(s.at(4000), 136);
  EXPECT_EQ(s.at(235999), 596);
  EXPECT_EQ(s.at(236000), 600);
  EXPECT_EQ(s.at(10'000'000), 600);
}

TEST(Schedule, DeskClosedForm) {
  const auto s = ResolutionSchedule::desk();
  for (std::uint64_t it : {0ull, 199ull, 200ull, 400ull, 2000ull, 3199ull, 3200ull, 50000ull})
    EXPECT_EQ(s.at(it), std::min<int>(64 + 4 * static_cast<int>(it / 200), 128)) << it;
}

TEST(Schedule, FixedModeHoldsR0) {
  TrainConfig c;
  c.resolution_mode = ResolutionMode::Fixed;
  EXPECT_EQ(c.resolution(100000), c.schedule.r0);
  c.resolution_mode = ResolutionMode::Adaptive;
  EXPECT_EQ(c.resolution(100000), c.schedule.r_max);
}

TEST(Config, Validation) {
  auto c = tiny(1);
  c.schedule.r0 = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny(1);
  c.proposal.p_large = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny(1);
  c.chains = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_sampler("random"), ConfigError);
  EXPECT_NO_THROW(tiny(1).validate());
}

TEST(Config, JsonRoundTrip) {
  auto c = tiny(77);
  c.acceptance = Acceptance::Metropolis;
  c.target = TargetMode::LossOnly;
  c.reuse = false;
  c.out_dir = "/tmp/x";
  EXPECT_EQ(to_json(train_config_from_json(to_json(c))), to_json(c));
}

TEST(Config, SceneDefaultSpp) {
  auto c = tiny(1);
  c.spp = 0;
  EXPECT_EQ(Trainer(c).config().spp, 64);
  c.scene = "CausticBox";
  EXPECT_EQ(Trainer(c).config().spp, 512);
  c.scene = "CornellVar";
  EXPECT_EQ(Trainer(c).config().spp, 200);
}

TEST(Trainer, UniformEqualsLargeStepsAlwaysAcceptFixed) {
  auto uniform = tiny(200);
  uniform.sampler = SamplerMode::Uniform;
  auto manual = tiny(200);
  manual.proposal.p_large = 1.0;
  manual.acceptance = Acceptance::Always;
  manual.resolution_mode = ResolutionMode::Fixed;
  const auto a = run_log(uniform), b = run_log(manual);
  ASSERT_EQ(a.size(), 200u);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, run_log(tiny(200)));
}

TEST(Trainer, DeterministicLogsAndWeights) {
  const auto c = tiny(40);
  Trainer a(c), b(c);
  for (int i = 0; i < 40; ++i) {
    a.step();
    b.step();
  }
  EXPECT_EQ(log_signature(a.log()), log_signature(b.log()));
  EXPECT_EQ(encode_checkpoint(a.net(), a.adam()), encode_checkpoint(b.net(), b.adam()));
  auto other = c;
  other.seed = 2;
  EXPECT_NE(run_log(other), log_signature(a.log()));
}

TEST(Trainer, LossDecreasesOnTinyRun) {
  auto c = tiny(300);
  c.lr = 1e-3;
  c.reuse = false;
  Trainer t(c);
  for (int i = 0; i < 300; ++i) t.step();
  double first = 0, last = 0;
  for (int i = 0; i < 30; ++i) {
    first += t.log()[i].total;
    last += t.log()[270 + i].total;
  }
  EXPECT_LT(last, first);
}

TEST(Trainer, ReuseStartsAfterWarmup) {
  auto c = tiny(260);
  Trainer t(c);
  for (int i = 0; i < 260; ++i) t.step();
  int reused = 0;
  for (const auto& r : t.log()) {
    if (r.iteration < kReuseWarmup) {
      ASSERT_EQ(r.decision, ReuseDecision::Generate);
    }
    reused += r.decision == ReuseDecision::Reuse;
  }
  EXPECT_GT(reused, 0);
  EXPECT_TRUE(t.tracker().ema_new().has_value());
  EXPECT_LE(t.store().size(), c.store_capacity);
}

TEST(Trainer, ReuseOffNeverReplays) {
  auto c = tiny(150);
  c.reuse = false;
  Trainer t(c);
  for (int i = 0; i < 150; ++i) t.step();
  for (const auto& r : t.log()) {
    ASSERT_EQ(r.decision, ReuseDecision::Generate);
    ASSERT_EQ(r.p_reuse, 0.0);
  }
}

TEST(Trainer, RunDirectoryLayout) {
  const auto dir = fresh_dir("glint_train_run");
  auto c = tiny(20);
  c.out_dir = dir.string();
  c.validation_every = 10;
  c.validation_frames = 2;
  c.validation_resolution = 16;
  c.validation_spp = 4;
  c.sampler = SamplerMode::Uniform;
  Trainer t(c);
  t.run();
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "ckpt_20.bin"));
  EXPECT_TRUE(fs::exists(dir / "validation" / "frames.json"));
  EXPECT_TRUE(fs::exists(dir / "validation" / "frame_00_pred.pfm"));
  const auto cfg = nlohmann::json::parse(detail::read_file((dir / "config.json").string()));
  EXPECT_EQ(cfg.at("sampler"), "uniform");
  EXPECT_EQ(cfg.at("effective").at("p_large"), 1.0);
  EXPECT_EQ(cfg.at("effective").at("acceptance"), "always");

  std::ifstream log(dir / "log.csv");
  std::string line;
  std::getline(log, line);
  EXPECT_EQ(line, log_header());
  int rows = 0, validated = 0;
  while (std::getline(log, line)) {
    ++rows;
    validated += line.back() != ',';
  }
  EXPECT_EQ(rows, 20);
  EXPECT_EQ(validated, 2);

  std::ifstream chains(dir / "chains.csv");
  int chain_rows = -1;
  while (std::getline(chains, line)) ++chain_rows;
  int generated = 0;
  for (const auto& r : t.log()) generated += r.decision == ReuseDecision::Generate;
  EXPECT_EQ(chain_rows, generated * c.chains);

  const auto ck = load_checkpoint((dir / "checkpoints" / "ckpt_20.bin").string(), 2);
  EXPECT_EQ(ck.adam.t, 20u);
  fs::remove_all(dir);
}

TEST(Trainer, HugeLearningRateDiverges) {
  auto c = tiny(30);
  c.lr = 1e38;
  Trainer t(c);
  EXPECT_THROW(
      {
        for (int i = 0; i < 30; ++i) t.step();
      },
      DivergenceError);
}

TEST(Trainer, UniformModeHistogramIsFlat) {
  auto c = tiny(6250);
  c.sampler = SamplerMode::Uniform;
  c.chains = 16;
  c.spp = 1;
  c.hidden = 8;
  c.reuse = false;
  Trainer t(c);
  std::vector<ChainRow> rows;
  for (std::uint64_t i = 0; i < c.iterations; ++i) {
    t.step();
    for (std::size_t k = 0; k < t.chains().size(); ++k) rows.push_back({i, k, "large", true, 0.0, t.chains()[k].u});
  }
  ASSERT_EQ(rows.size(), 100000u);
  EXPECT_GT(uniformity_p_value(chain_histogram(rows, 0, 1, 16)), 0.01);
}
