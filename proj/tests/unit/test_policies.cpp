// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "isac/config.hpp"
#include "isac/env.hpp"
#include "isac/phy.hpp"
#include "isac/policies.hpp"
#include "isac/world.hpp"

namespace isac {
namespace {

SystemConfig short_config(int ttis = 10) {
  SystemConfig c = default_config();
  c.experiment.ttis_per_episode = ttis;
  return c;
}

TEST(PolicyHelpers, ThreeAroundClampsAtEdges) {
  EXPECT_EQ(three_around(1, 16), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(three_around(16, 16), (std::vector<int>{14, 15, 16}));
  EXPECT_EQ(three_around(9, 16), (std::vector<int>{8, 9, 10}));
}

TEST(PolicyHelpers, StrongestBinTiesToSmaller) {
  std::vector<double> p(16, 0.0);
  p[3] = p[5] = 2.0;
  EXPECT_EQ(strongest_bin({4, 5, 6}, p), 4);
  p[4] = 3.0;
  EXPECT_EQ(strongest_bin({4, 5, 6}, p), 5);
}

TEST(Genie, PointsAtNearestCodewordOfTrueAod) {
  const SystemConfig c = short_config();
  GeniePolicy g;
  IsacEnv env(c, 2, g.env_options());
  env.reset(1, 0);
  g.begin_episode(env);
  SeededRng rng(1, 0);
  while (!env.done()) {
    const auto req = g.decide(env, rng);
    for (int u = 0; u < 2; ++u)
      EXPECT_EQ(req[u], (std::vector<int>{nearest_codeword(user_geometry(env.world(), u).aod, 16)}));
    env.step_requests(req);
  }
  EXPECT_EQ(nearest_codeword(codeword_angle(9, 16), 16), 9);
}

TEST(XTdma, PeriodAndBeamCounts) {
  const SystemConfig c = short_config(12);
  XTdmaPolicy p(3);
  EXPECT_EQ(p.name(), "x_tdma:3");
  IsacEnv env(c, 3);
  env.reset(0, 0);
  p.begin_episode(env);
  SeededRng rng(1, 0);
  std::vector<int> sizes;
  while (!env.done()) {
    const auto req = p.decide(env, rng);
    sizes.push_back(static_cast<int>(req[0].size()));
    EXPECT_EQ(req[0].size(), req[1].size());
    env.step_requests(req);
  }
  EXPECT_EQ(sizes, (std::vector<int>{3, 1, 1, 1, 3, 1, 1, 1, 3, 1, 1, 1}));
}

TEST(XTdma, SingleBeamSlotsUseBestOfLastSweep) {
  const SystemConfig c = short_config(4);
  XTdmaPolicy p(1);
  IsacEnv env(c, 3);
  env.reset(5, 0);
  p.begin_episode(env);
  SeededRng rng(1, 0);
  env.step_requests(p.decide(env, rng));
  const auto single = p.decide(env, rng);
  for (int u = 0; u < 2; ++u)
    EXPECT_EQ(single[u][0], strongest_bin(env.allocation().beams[u], env.bin_power()));
}

TEST(RandomPolicy, DisjointAndUniform) {
  const SystemConfig c = short_config();
  IsacEnv env(c, 1);
  env.reset(0, 0);
  RandomPolicy p;
  SeededRng rng(77, 0);
  std::vector<int> count(17, 0);
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    const auto req = p.decide(env, rng);
    ASSERT_EQ(req[0].size(), 1u);
    ASSERT_NE(req[0][0], req[1][0]);
    for (const auto& r : req) ++count.at(r[0]);
  }
  double chi2 = 0.0;
  const double expect = 2.0 * draws / 16.0;
  for (int n = 1; n <= 16; ++n) chi2 += std::pow(count[n] - expect, 2) / expect;
  EXPECT_LT(chi2, 37.7);  // 0.1% tail of chi^2 with 15 dof
}

TEST(AodBased, PrecisionFormula) {
  const SystemConfig c = default_config();
  const double n = 144.0 * 280.0;
  EXPECT_NEAR(AodBasedPolicy::angle_precision(2.0, c), std::sqrt(6.0 / (n * 2.0 * 255.0)), 1e-15);
  EXPECT_NEAR(AodBasedPolicy::angle_precision(8.0, c), 0.5 * AodBasedPolicy::angle_precision(2.0, c),
              1e-15);
}

TEST(AodBased, RequestsOneOrThreeBeamsAroundEstimates) {
  const SystemConfig c = short_config(6);
  AodBasedPolicy p;
  EXPECT_TRUE(p.env_options().run_music);
  IsacEnv env(c, 4, p.env_options());
  env.reset(3, 0);
  p.begin_episode(env);
  SeededRng rng(1, 0);
  while (!env.done()) {
    const auto req = p.decide(env, rng);
    for (const auto& r : req) EXPECT_TRUE(r.size() == 1 || r.size() == 3);
    const auto s = env.step_requests(req);
    EXPECT_TRUE(s.allocation.valid(16));
  }
}

TEST(StaticBeam, KeepsInitialAnchorAllEpisode) {
  const SystemConfig c = short_config(8);
  for (auto [w, off] : {std::pair{1, 0}, {1, 1}, {1, -1}, {3, 0}}) {
    StaticBeamPolicy p(w, off);
    IsacEnv env(c, 9);
    env.reset(2, 0);
    p.begin_episode(env);
    SeededRng rng(1, 0);
    const auto first = p.decide(env, rng);
    for (int u = 0; u < 2; ++u) {
      const int anchor = nearest_codeword(user_geometry(env.world(), u).aod, 16);
      if (w == 1)
        EXPECT_EQ(first[u], (std::vector<int>{std::clamp(anchor + off, 1, 16)}));
      else
        EXPECT_EQ(first[u], three_around(anchor, 16));
    }
    while (!env.done()) {
      EXPECT_EQ(p.decide(env, rng), first);
      env.step_requests(first);
    }
  }
}

TEST(Sweep, StartsAtAnchorThenRecentresOnStrongestBin) {
  const SystemConfig c = short_config(3);
  SweepPolicy p;
  IsacEnv env(c, 9);
  env.reset(4, 0);
  p.begin_episode(env);
  SeededRng rng(1, 0);
  const auto first = p.decide(env, rng);
  for (int u = 0; u < 2; ++u)
    EXPECT_EQ(first[u], three_around(nearest_codeword(user_geometry(env.world(), u).aod, 16), 16));
  env.step_requests(first);
  while (!env.done()) {
    const auto req = p.decide(env, rng);
    for (int u = 0; u < 2; ++u)
      EXPECT_EQ(req[u], three_around(strongest_bin(env.allocation().beams[u], env.bin_power()), 16));
    env.step_requests(req);
  }
}

TEST(Factory, TagsAndErrors) {
  const SystemConfig c = default_config();
  EXPECT_EQ(make_baseline("genie", c)->name(), "genie");
  EXPECT_EQ(make_baseline("aod_based", c)->name(), "aod_based");
  EXPECT_EQ(make_baseline("x_tdma", c)->name(), "x_tdma:1");
  EXPECT_EQ(make_baseline("x_tdma:4", c)->name(), "x_tdma:4");
  EXPECT_EQ(make_baseline("random", c)->name(), "random");
  EXPECT_NO_THROW(make_baseline("static1:-1", c));
  EXPECT_NO_THROW(make_baseline("static3", c));
  EXPECT_NO_THROW(make_baseline("sweep", c));
  EXPECT_THROW(make_baseline("oracle", c), std::invalid_argument);
  EXPECT_THROW(make_baseline("x_tdma:-1", c), std::invalid_argument);
}

}  // namespace
}  // namespace isac
