#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "glint/eval.hpp"
#include "glint/infer.hpp"

using namespace glint;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

/// Runs the CLI with stderr folded into stdout.
Outcome glint_cli(const std::string& args) {
  const std::string cmd = std::string(GLINT_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {};
  Outcome out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.output.append(buf, n);
  const int status = pclose(pipe);
  out.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

const fs::path& root() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "glint_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

/// A tiny trained run shared by the tests that need a checkpoint.
const fs::path& trained_run() {
  static const fs::path run = [] {
    const auto r = root() / "run";
    const auto res = glint_cli("train --scene MirrorRoom --iters 30 --out " + r.string() +
                               " --chains 4 --patch 8 --r0 16 --increment 4 --period 10 --rmax 32"
                               " --spp 2 --hidden 16 --layers 2 --validation-every 0 --validation-frames 0 --quiet");
    EXPECT_EQ(res.code, 0) << res.output;
    return r;
  }();
  return run;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(glint_cli("--help").code, 0);
  EXPECT_EQ(glint_cli("train --help").code, 0);
  EXPECT_EQ(glint_cli("").code, 2);
  EXPECT_EQ(glint_cli("frobnicate").code, 2);
  EXPECT_EQ(glint_cli("train --scene MirrorRoom").code, 2);
  EXPECT_EQ(glint_cli("train --scene Nope --out " + (root() / "nope").string()).code, 2);
  EXPECT_EQ(glint_cli("train --scene MirrorRoom --mode sideways --out " + (root() / "nope").string()).code, 2);
}

TEST(Cli, InspectSpace) {
  const auto res = glint_cli("inspect-space --scene MirrorRoom");
  ASSERT_EQ(res.code, 0) << res.output;
  EXPECT_NE(res.output.find("dim 2"), std::string::npos);
  EXPECT_NE(res.output.find("camera fixed"), std::string::npos);
  EXPECT_NE(res.output.find("sphere_x"), std::string::npos);
  EXPECT_NE(res.output.find("sphere_z"), std::string::npos);
  EXPECT_NE(glint_cli("inspect-space --scene CornellVar").output.find("dim 12"), std::string::npos);
}

TEST(Cli, RenderVectorLengthIsAnError) {
  const auto res = glint_cli("render --gt --scene MirrorRoom --vector 0.5 --res 8 --out " +
                             (root() / "bad.pfm").string());
  EXPECT_EQ(res.code, 2);
  EXPECT_NE(res.output.find("dim 2"), std::string::npos) << res.output;
  EXPECT_EQ(glint_cli("render --gt --scene MirrorRoom --vector 0.5,x --res 8 --out " + (root() / "bad.pfm").string())
                .code,
            2);
  EXPECT_FALSE(fs::exists(root() / "bad.pfm"));
}

TEST(Cli, GroundTruthRenderMatchesLibrary) {
  const auto out = root() / "gt.pfm";
  const auto res =
      glint_cli("render --gt --scene MirrorRoom --vector 0.4,0.6 --res 12 --spp 3 --seed 8 --out " + out.string());
  ASSERT_EQ(res.code, 0) << res.output;
  const auto space = builtin("MirrorRoom").space;
  const auto setup = make_setup(space, {0.4, 0.6}, space.default_camera());
  EXPECT_EQ(read_pfm(out.string()).data, render_image(setup.instance, 12, 3, 8).radiance.data);
}

TEST(Cli, TrainWritesRun) {
  const auto& run = trained_run();
  EXPECT_TRUE(fs::exists(run / "config.json"));
  EXPECT_TRUE(fs::exists(run / "log.csv"));
  EXPECT_TRUE(fs::exists(run / "chains.csv"));
  EXPECT_TRUE(fs::exists(run / "checkpoints" / "ckpt_30.bin"));
}

TEST(Cli, NetRenderMatchesLibrary) {
  const auto ckpt = trained_run() / "checkpoints" / "ckpt_30.bin";
  const auto out = root() / "net.pfm";
  // The scene comes from the run's config.json.
  const auto res = glint_cli("render --checkpoint " + ckpt.string() + " --vector 0.2,0.7 --res 16 --out " + out.string());
  ASSERT_EQ(res.code, 0) << res.output;
  const auto space = builtin("MirrorRoom").space;
  const auto ck = load_checkpoint(ckpt.string(), 2);
  const auto expected = predict_image(ck.net, make_setup(space, {0.2, 0.7}, space.default_camera()), 16);
  EXPECT_EQ(read_pfm(out.string()).data, expected.data);
  EXPECT_EQ(glint_cli("render --checkpoint " + ckpt.string() + " --scene CausticBox --vector " +
                      "0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5 --res 8 --out " + out.string())
                .code,
            2);
}

TEST(Cli, EvalWritesCsv) {
  const auto& run = trained_run();
  const auto val = root() / "validation";
  save_validation(build_validation("MirrorRoom", builtin("MirrorRoom").space, 2, 16, 2, 4, "uniform"), val);
  const auto csv = root() / "eval.csv";
  const auto res = glint_cli("eval --run " + run.string() + " --validation " + val.string() + " --out " + csv.string());
  ASSERT_EQ(res.code, 0) << res.output;
  std::ifstream in(csv);
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "run,frame,mape,mae,dssim,loss");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(glint_cli("eval --run " + run.string() + " --validation " + root().string()).code, 2);
}

TEST(Cli, DiagMcmcHistogram) {
  const auto& run = trained_run();
  const auto res = glint_cli("diag-mcmc --run " + run.string() + " --dims 0,1 --bins 4");
  ASSERT_EQ(res.code, 0) << res.output;
  EXPECT_NE(res.output.find("uniformity_p "), std::string::npos);
  const auto hist = read_pfm((run / "hist_0_1.pfm").string());
  EXPECT_EQ(hist.width, 4);
  EXPECT_EQ(glint_cli("diag-mcmc --run " + run.string() + " --dims 0,5").code, 2);
}

TEST(Cli, ServeRejectsMissingCheckpoint) {
  EXPECT_EQ(glint_cli("serve --scene MirrorRoom --checkpoint " + (root() / "missing.bin").string()).code, 2);
}
