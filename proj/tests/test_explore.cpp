#include <gtest/gtest.h>

#include <cmath>

#include "glint/explore.hpp"

using namespace glint;

TEST(Explore, InitialStatesAreUniformAndSeeded) {
  Engine a(1), b(2);
  const auto ca = init_chains(5, 16, a);
  const auto cb = init_chains(5, 16, b);
  ASSERT_EQ(ca.size(), 16u);
  for (const auto& c : ca) {
    EXPECT_FALSE(c.evaluated);
    for (double x : c.u) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
  EXPECT_NE(ca[0].u, cb[0].u);
  Engine one(3);
  EXPECT_EQ(init_chains(2, 1, one).size(), 1u);
}

TEST(Explore, ReflectionFoldsIntoUnitInterval) {
  EXPECT_NEAR(reflect_unit(0.99 + 0.05), 0.96, 1e-12);
  EXPECT_NEAR(reflect_unit(-0.03), 0.03, 1e-12);
  EXPECT_NEAR(reflect_unit(2.25), 0.25, 1e-12);
  EXPECT_EQ(reflect_unit(0.4), 0.4);
}

TEST(Explore, LargeStepFrequency) {
  Engine rng(11);
  ChainState c{std::vector<double>(4, 0.5), 1.0, true};
  const ProposalConfig cfg;
  int large = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto p = propose(c, cfg, rng);
    if (p.kind == StepKind::Large) ++large;
    for (double x : p.u) ASSERT_TRUE(x >= 0.0 && x <= 1.0);
  }
  EXPECT_NEAR(double(large) / n, 0.3, 0.01);
}

TEST(Explore, ZeroSigmaSmallStepKeepsState) {
  Engine rng(12);
  ChainState c{{0.1, 0.7, 0.99}, 1.0, true};
  ProposalConfig cfg;
  cfg.sigma = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto p = propose(c, cfg, rng);
    if (p.kind == StepKind::Small) {
      EXPECT_EQ(p.u, c.u);
    }
  }
}

TEST(Explore, StatesStayInCubeUnderManySteps) {
  Engine rng(13);
  ChainState c{std::vector<double>(6, 0.999), 0.0, true};
  ProposalConfig cfg;
  cfg.p_large = 0.01;
  cfg.sigma = 0.7;
  for (int i = 0; i < 20000; ++i) {
    c.u = propose(c, cfg, rng).u;
    for (double x : c.u) ASSERT_TRUE(x >= 0.0 && x <= 1.0);
  }
}

TEST(Explore, GreedyAcceptance) {
  Engine rng(0);
  EXPECT_TRUE(accept(1.0, 2.0, Acceptance::Greedy, rng));
  EXPECT_FALSE(accept(1.0, 1.0, Acceptance::Greedy, rng));
  EXPECT_FALSE(accept(2.0, 1.0, Acceptance::Greedy, rng));
  EXPECT_TRUE(accept(5.0, 0.0, Acceptance::Always, rng));
}

TEST(Explore, MetropolisAcceptanceRate) {
  Engine rng(14);
  int ok = 0;
  for (int i = 0; i < 10000; ++i) ok += accept(1.0, 0.5, Acceptance::Metropolis, rng);
  EXPECT_NEAR(ok / 10000.0, 0.5, 0.02);
  EXPECT_TRUE(accept(0.0, 0.0, Acceptance::Metropolis, rng));
  EXPECT_TRUE(accept(1.0, 3.0, Acceptance::Metropolis, rng));
}

TEST(Explore, GreedyNeverDecreasesTarget) {
  Engine rng(15);
  auto f = [](const std::vector<double>& u) {
    return std::exp(-30 * ((u[0] - 0.3) * (u[0] - 0.3) + (u[1] - 0.8) * (u[1] - 0.8)));
  };
  ChainState c{{0.9, 0.1}, 0, false};
  double prev = -1;
  for (int i = 0; i < 2000; ++i) {
    chain_step(c, ProposalConfig{}, Acceptance::Greedy, rng, f);
    ASSERT_GE(c.f, prev);
    ASSERT_EQ(c.f, f(c.u));
    prev = c.f;
  }
  EXPECT_GT(c.f, 0.99);
}

TEST(Explore, FirstStepOnlyEvaluates) {
  Engine rng(16);
  ChainState c{{0.2, 0.4}, 0, false};
  int calls = 0;
  const auto r = chain_step(c, ProposalConfig{}, Acceptance::Greedy, rng, [&](const std::vector<double>&) {
    ++calls;
    return 0.5;
  });
  EXPECT_EQ(r.kind, StepKind::Initial);
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(c.u, (std::vector<double>{0.2, 0.4}));
  EXPECT_EQ(c.f, 0.5);
}

TEST(Explore, MetropolisMatchesAnalyticTarget) {
  // Two bumps on the unit square; the oracle is the target normalized on a
  // 64 x 64 grid of cell centers.
  auto f = [](const std::vector<double>& u) {
    const double a = std::exp(-((u[0] - 0.25) * (u[0] - 0.25) + (u[1] - 0.3) * (u[1] - 0.3)) / 0.02);
    const double b = 0.6 * std::exp(-((u[0] - 0.7) * (u[0] - 0.7) + (u[1] - 0.75) * (u[1] - 0.75)) / 0.04);
    return a + b + 0.05;
  };
  const int bins = 64;
  std::vector<double> oracle(bins * bins);
  double z = 0;
  for (int j = 0; j < bins; ++j)
    for (int i = 0; i < bins; ++i) z += oracle[j * bins + i] = f({(i + 0.5) / bins, (j + 0.5) / bins});
  for (auto& p : oracle) p /= z;

  Engine rng(17);
  std::vector<ChainState> chains = init_chains(2, 16, rng);
  std::vector<double> hist(bins * bins, 0);
  const int burn = 2000, steps = 1000000 / 16;
  for (int s = 0; s < burn + steps; ++s)
    for (auto& c : chains) {
      chain_step(c, ProposalConfig{}, Acceptance::Metropolis, rng, f);
      if (s >= burn) {
        const int i = std::min(bins - 1, int(c.u[0] * bins)), j = std::min(bins - 1, int(c.u[1] * bins));
        hist[j * bins + i] += 1;
      }
    }
  double tv = 0;
  for (int k = 0; k < bins * bins; ++k) tv += std::abs(hist[k] / (16.0 * steps) - oracle[k]);
  EXPECT_LT(0.5 * tv, 0.05);
}

TEST(Explore, PatchRequestMapsState) {
  SceneSpace space;
  space.base_scene = "mirror_room";
  space.camera.position = {0, 1, 0};
  space.camera.lookat = {0, 1, -1};
  space.params.push_back({"sphere_x", ParamKind::TranslationX, -1, 1, "sphere"});
  const auto r = request_for(space, {0.25, 0.0, 1.0}, 64, 8);
  EXPECT_EQ(r.scene, std::vector<double>{0.25});
  EXPECT_EQ(r.window.x0, 0);
  EXPECT_EQ(r.window.y0, 56);
  EXPECT_EQ(r.window.width, 8);
  EXPECT_EQ(r.camera[4], 1.0);
  EXPECT_EQ(patch_origin(0.5, 128, 32), 48);
  EXPECT_THROW(request_for(space, {0.5, 0.5}, 64, 8), DimensionError);
}
