// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "isac/config.hpp"
#include "isac/phy.hpp"
#include "isac/world.hpp"

using namespace isac;

namespace {

constexpr double kPi = std::numbers::pi;

SystemConfig tiny_config() {
  SystemConfig c = default_config();
  c.n_subcarriers = 4;
  c.n_symbols = 3;
  return c;
}

ChannelRealization manual_channel(int nt, int nc, int ns, std::vector<CVec> dirs) {
  // Pure-LoS realization whose response is exactly dirs[u] (zero range and speed).
  ChannelRealization ch;
  ch.n_antennas = nt;
  ch.n_subcarriers = nc;
  ch.n_symbols = ns;
  ch.pure_los = true;
  ch.rician_k = std::numeric_limits<double>::infinity();
  ch.subcarrier_spacing_hz = 60e3;
  ch.symbol_duration_s = 18.9e-6;
  ch.carrier_freq_hz = 28e9;
  for (auto& d : dirs) {
    ChannelRealization::UserLink l;
    l.alpha = 1.0;
    l.los_gain = 1.0;
    l.aod = std::arg(d[1] / d[0]);
    ch.users.push_back(l);
  }
  return ch;
}

}  // namespace

TEST(Phy, SteeringBasics) {
  const CVec a = steering(0.0, 4);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(std::abs(a[k] - cd(0.5, 0)), 0.0, 1e-15);
  EXPECT_NEAR(steering(1.3, 16).norm(), 1.0, 1e-12);
  EXPECT_LT((steering(0.7, 16) - steering(0.7 + 2 * kPi, 16)).norm(), 1e-12);
}

TEST(Phy, CodewordAngles) {
  EXPECT_NEAR(codeword_angle(1, 16), -15.0 * kPi / 16.0, 1e-15);
  const CMat f2 = build_codebook(2);
  EXPECT_NEAR(std::abs(f2(0, 0) - 1.0 / std::sqrt(2.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(f2(1, 0) - std::exp(cd(0, -kPi / 2)) / std::sqrt(2.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(f2(1, 1) - std::exp(cd(0, kPi / 2)) / std::sqrt(2.0)), 0.0, 1e-15);
}

TEST(Phy, CodebookUnitary) {
  for (int n : {2, 4, 8, 16, 64}) {
    const CMat f = build_codebook(n);
    EXPECT_LT((f.adjoint() * f - CMat::Identity(n, n)).norm(), 1e-10) << n;
  }
}

TEST(Phy, AlignedSteeringHasUnitGain) {
  const CMat f = build_codebook(16);
  EXPECT_NEAR(std::abs(steering(codeword_angle(9, 16), 16).dot(f.col(8))), 1.0, 1e-12);
  EXPECT_NEAR(beam_gain(codeword_angle(9, 16), 9, 16), 1.0, 1e-12);
}

TEST(Phy, BeamGainMatchesInnerProduct) {
  const CMat f = build_codebook(16);
  SeededRng r(1, 1);
  for (int t = 0; t < 200; ++t) {
    const double th = r.uniform(-kPi, kPi);
    const int n = r.uniform_int(1, 16);
    EXPECT_NEAR(beam_gain(th, n, 16), std::norm(steering(th, 16).dot(f.col(n - 1))), 1e-12);
  }
}

TEST(Phy, NearestCodewordMaximizesGain) {
  for (int g = 0; g < 2000; ++g) {
    const double th = -kPi + 2 * kPi * (g + 0.5) / 2000.0;
    int best = 1;
    for (int n = 2; n <= 16; ++n)
      if (beam_gain(th, n, 16) > beam_gain(th, best, 16)) best = n;
    EXPECT_EQ(nearest_codeword(th, 16), best) << th;
  }
}

TEST(Phy, PrecoderNormAndWeights) {
  const CMat f = build_codebook(16);
  for (const std::vector<int>& s : {std::vector<int>{3}, {3, 4}, {7, 8, 9}})
    EXPECT_NEAR(user_precoder(f, s).norm(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(selection_weight(4, 1), 1.0);
  EXPECT_DOUBLE_EQ(selection_weight(5, 1), -1.0);
  EXPECT_DOUBLE_EQ(selection_weight(6, 3), 1.0 / std::sqrt(3.0));
}

TEST(Phy, AllocationValidity) {
  BeamAllocation a{{{4, 5, 6}, {12}}};
  EXPECT_TRUE(a.valid(16));
  EXPECT_EQ(a.owner_map(16)[3], 1);
  EXPECT_EQ(a.owner_map(16)[11], 2);
  EXPECT_EQ(a.owner_map(16)[0], 0);
  EXPECT_FALSE((BeamAllocation{{{4, 5}, {5}}}).valid(16));
  EXPECT_FALSE((BeamAllocation{{{1, 2, 3, 4}, {9}}}).valid(16));
  EXPECT_FALSE((BeamAllocation{{{0}, {9}}}).valid(16));
  EXPECT_FALSE((BeamAllocation{{{}, {9}}}).valid(16));
}

TEST(Phy, PureLosResponseIsLosTerm) {
  SystemConfig cfg = tiny_config();
  SeededRng rng(1, 1);
  WorldState w = init_world(cfg, Scenario::clean, rng, 0);
  SeededRng cr(2, 2);
  const ChannelRealization ch = draw_channel(w, cfg, true, cr);
  const auto& l = ch.users[0];
  for (int i = 0; i < cfg.n_subcarriers; ++i)
    for (int s = 0; s < cfg.n_symbols; ++s) {
      const CVec expect = l.alpha * ch.los_phase(0, i, s) * steering(l.aod, 16);
      EXPECT_LT((ch.response(0, i, s) - expect).norm(), 1e-15);
    }
  EXPECT_NEAR(std::abs(l.alpha), cfg.wavelength_m() / (4 * kPi * l.distance), 1e-15);
}

TEST(Phy, StaticUserResponseIndependentOfSymbol) {
  SystemConfig cfg = tiny_config();
  SeededRng rng(1, 1);
  WorldState w = init_world(cfg, Scenario::cluttered, rng, 0);
  for (auto& u : w.users) u.speed = 0.0;
  SeededRng cr(3, 3);
  const ChannelRealization ch = draw_channel(w, cfg, false, cr);
  for (int i = 0; i < cfg.n_subcarriers; ++i)
    EXPECT_LT((ch.response(1, i, 0) - ch.response(1, i, 2)).norm(), 1e-14);
}

TEST(Phy, RicianMeanPowerMatchesPathLoss) {
  SystemConfig cfg = tiny_config();
  cfg.n_subcarriers = 1;
  cfg.n_symbols = 1;
  SeededRng rng(1, 1);
  WorldState w = init_world(cfg, Scenario::cluttered, rng, 1);
  double acc = 0, alpha2 = 0;
  const int n = 100000;
  for (int t = 0; t < n; ++t) {
    SeededRng cr(4, t);
    const ChannelRealization ch = draw_channel(w, cfg, false, cr);
    acc += ch.response(0, 0, 0).squaredNorm();
    alpha2 = std::norm(ch.users[0].alpha);
  }
  EXPECT_NEAR(acc / n / alpha2, 1.0, 0.02);
}

TEST(Phy, SingleUserSinrClosedForm) {
  const CMat f = build_codebook(16);
  const double g = 0.3;
  std::vector<CVec> dirs{f.col(4) * g};
  ChannelRealization ch = manual_channel(16, 1, 1, dirs);
  ch.users[0].los_gain = g;
  ch.users[0].alpha = g;
  ch.users[0].aod = codeword_angle(5, 16);
  PowerAllocation p{{{2.0}}, {true}, {{false}}};
  const std::vector<CVec> w{user_precoder(f, {5})};
  EXPECT_NEAR(user_sinr(ch, w, p, 0.1, 0, 0, 0), 2.0 * g * g / 0.1, 1e-12);
}

TEST(Phy, OrthogonalUsersDoNotInterfere) {
  const CMat f = build_codebook(16);
  ChannelRealization ch = manual_channel(16, 1, 1, {f.col(2), f.col(10)});
  ch.users[0].aod = codeword_angle(3, 16);
  ch.users[1].aod = codeword_angle(11, 16);
  const std::vector<CVec> w{user_precoder(f, {3}), user_precoder(f, {11})};
  PowerAllocation p{{{1.0}, {5.0}}, {true}, {{false}, {false}}};
  PowerAllocation p0{{{1.0}, {0.0}}, {true}, {{false}, {false}}};
  const double s = user_sinr(ch, w, p, 0.01, 0, 0, 0);
  EXPECT_NEAR(s, 1.0 / 0.01, 1e-9);
  EXPECT_NEAR(user_sinr(ch, w, p0, 0.01, 0, 0, 0), s, 1e-9);
}

TEST(Phy, SinrMonotoneInPowers) {
  SystemConfig cfg = tiny_config();
  SeededRng rng(1, 1);
  WorldState w = init_world(cfg, Scenario::cluttered, rng, 2);
  SeededRng cr(5, 5);
  const ChannelRealization ch = draw_channel(w, cfg, false, cr);
  const CMat f = build_codebook(16);
  const std::vector<CVec> pre{user_precoder(f, {6, 7}), user_precoder(f, {7 + 2})};
  auto sinr = [&](double p0, double p1) {
    PowerAllocation p{{std::vector<double>(4, p0), std::vector<double>(4, p1)},
                      std::vector<bool>(4, true),
                      {std::vector<bool>(4, false), std::vector<bool>(4, false)}};
    return user_sinr(ch, pre, p, cfg.noise_power_w(), 1, 1, 0);
  };
  EXPECT_LT(sinr(1e-3, 1e-3), sinr(2e-3, 1e-3));
  EXPECT_GT(sinr(1e-3, 1e-3), sinr(1e-3, 2e-3));
}

TEST(Phy, RateSumsLogTerms) {
  const CMat f = build_codebook(4);
  ChannelRealization ch = manual_channel(4, 2, 2, {f.col(0)});
  ch.users[0].aod = codeword_angle(1, 4);
  const std::vector<CVec> w{user_precoder(f, {1})};
  // SINR 1 everywhere: unit gain, power equal to noise.
  PowerAllocation p{{{0.5, 0.5}}, {true, true}, {{false, false}}};
  EXPECT_NEAR(rates(ch, w, p, 0.5)[0], 4.0, 1e-12);
  PowerAllocation z{{{0.0, 0.0}}, {true, true}, {{false, false}}};
  EXPECT_EQ(rates(ch, w, z, 0.5)[0], 0.0);
}

TEST(Phy, RateDoublesWithSymbols) {
  const CMat f = build_codebook(4);
  ChannelRealization a = manual_channel(4, 2, 2, {f.col(1)});
  ChannelRealization b = manual_channel(4, 2, 4, {f.col(1)});
  a.users[0].aod = b.users[0].aod = codeword_angle(2, 4);
  const std::vector<CVec> w{user_precoder(f, {2})};
  PowerAllocation p{{{0.3, 0.7}}, {true, true}, {{false, false}}};
  EXPECT_NEAR(rates(b, w, p, 0.1)[0], 2.0 * rates(a, w, p, 0.1)[0], 1e-9);
}

TEST(Phy, OffCentreUserHasLowerRate) {
  const CMat f = build_codebook(16);
  const std::vector<CVec> w{user_precoder(f, {5})};
  ChannelRealization a = manual_channel(16, 1, 1, {f.col(4)});
  a.users[0].aod = codeword_angle(5, 16);
  ChannelRealization b = a;
  b.users[0].aod = codeword_angle(5, 16) + 0.1;
  PowerAllocation p{{{1.0}}, {true}, {{false}}};
  EXPECT_LT(rates(b, w, p, 0.1)[0], rates(a, w, p, 0.1)[0]);
}

TEST(Phy, RicianRatePathMatchesPerElementSinr) {
  SystemConfig cfg = tiny_config();
  SeededRng rng(1, 1);
  WorldState w = init_world(cfg, Scenario::cluttered, rng, 3);
  SeededRng cr(6, 6);
  const ChannelRealization ch = draw_channel(w, cfg, false, cr);
  const CMat f = build_codebook(16);
  const std::vector<CVec> pre{user_precoder(f, {4, 5, 6}), user_precoder(f, {12})};
  PowerAllocation p{{{1e-3, 2e-3, 3e-3, 4e-3}, {4e-3, 3e-3, 2e-3, 1e-3}},
                    std::vector<bool>(4, true),
                    {std::vector<bool>(4, false), std::vector<bool>(4, false)}};
  const double n0 = cfg.noise_power_w();
  const auto r = rates(ch, pre, p, n0);
  for (int u = 0; u < 2; ++u) {
    double expect = 0;
    for (int i = 0; i < cfg.n_subcarriers; ++i)
      for (int l = 0; l < cfg.n_symbols; ++l) {
        const CVec h = ch.response(u, i, l);
        double sig = 0, intf = 0;
        for (int q = 0; q < 2; ++q) {
          const double gq = std::norm(h.dot(pre[q])) * p.power[q][i];
          (q == u ? sig : intf) += gq;
        }
        expect += std::log2(1.0 + sig / (intf + n0));
      }
    EXPECT_NEAR(r[u], expect, 1e-9 * expect) << u;
  }
}

TEST(Phy, SuccessBoundaryInclusive) {
  const double r = 1234.5;
  EXPECT_TRUE(transmission_success({r, r, r}, 3 * r));
  EXPECT_FALSE(transmission_success({0, 0, 0}, 1.0));
  EXPECT_FALSE(transmission_success({r, r, r}, 3 * r + 1e-9));
}
