// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "isac/config.hpp"
#include "isac/phy.hpp"
#include "isac/power.hpp"
#include "isac/rng.hpp"
#include "isac/sensing.hpp"

namespace isac {
namespace {

constexpr double kPi = std::numbers::pi;

SystemConfig small_config() {
  SystemConfig cfg = default_config();
  cfg.n_tx_antennas = 8;
  cfg.n_rx_antennas = 8;
  cfg.n_subcarriers = 16;
  cfg.n_symbols = 32;
  return cfg;
}

PowerAllocation flat_power(int n_users, int n_c, double p) {
  PowerAllocation pa;
  pa.power.assign(n_users, std::vector<double>(n_c, p));
  pa.feasible.assign(n_c, true);
  pa.below_target.assign(n_users, std::vector<bool>(n_c, false));
  return pa;
}

Scatterer point(double aod, double d, double v, cd beta, int user) {
  Scatterer s;
  s.aod = aod;
  s.distance = d;
  s.radial_speed = v;
  s.beta = beta;
  s.user = user;
  return s;
}

struct Bench {
  SystemConfig cfg;
  CMat codebook;
  TxFrame tx;
};

Bench one_user(const std::vector<int>& beams, double p = 1.0) {
  Bench s{small_config(), {}, {}};
  s.codebook = build_codebook(s.cfg.n_tx_antennas);
  BeamAllocation alloc{{beams}};
  SeededRng rng(11, 0);
  s.tx = make_tx_frame(s.codebook, alloc, flat_power(1, s.cfg.n_subcarriers, p),
                       s.cfg.n_symbols, rng);
  return s;
}

TEST(Echo, NoScatterersNoNoiseIsZero) {
  Bench s = one_user({3});
  EchoFrame e(s.cfg, s.codebook, {}, s.tx, 0.0, SeededRng(1, 0));
  for (int n = 1; n <= e.n_bins(); ++n) EXPECT_EQ(e.bin_samples(n).norm(), 0.0);
  EXPECT_EQ(e.antenna_samples().norm(), 0.0);
}

TEST(Echo, BinSamplesMatchAntennaDomainModel) {
  Bench s = one_user({2, 3});
  std::vector<Scatterer> sc{point(codeword_angle(3, 8) + 0.1, 40.0, 3.0, {0.3, -0.2}, 0),
                            point(-1.1, 25.0, 0.0, {0.05, 0.01}, -1)};
  EchoFrame e(s.cfg, s.codebook, sc, s.tx, 0.0, SeededRng(1, 0));
  const Eigen::MatrixXcd y = direct_echo(s.cfg, sc, s.tx);
  for (int n = 1; n <= 8; ++n) {
    const Eigen::RowVectorXcd want = s.codebook.col(n - 1).transpose() * y;
    const Eigen::MatrixXcd got = e.bin_samples(n);
    const Eigen::Map<const Eigen::RowVectorXcd> flat(got.data(), got.size());
    EXPECT_LT((flat - want).norm(), 1e-12 * (1.0 + want.norm())) << n;
  }
  EXPECT_LT((e.antenna_samples() - y).norm(), 1e-12 * (1.0 + y.norm()));
}

TEST(Echo, TwoScatterersAddLinearly) {
  Bench s = one_user({4});
  Scatterer a = point(0.3, 30.0, 2.0, {0.2, 0.1}, 0);
  Scatterer b = point(-0.7, 50.0, -4.0, {-0.1, 0.3}, -1);
  const auto both = direct_echo(s.cfg, {a, b}, s.tx);
  const auto sum = direct_echo(s.cfg, {a}, s.tx) + direct_echo(s.cfg, {b}, s.tx);
  EXPECT_LT((both - sum).norm(), 1e-10);
}

TEST(Echo, StaticUserSamplesIndependentOfSymbolIndexAfterSymbolRemoval) {
  Bench s = one_user({5});
  EchoFrame e(s.cfg, s.codebook, {point(codeword_angle(5, 8), 30.0, 0.0, {0.4, 0.0}, 0)}, s.tx,
              0.0, SeededRng(1, 0));
  const auto series = extract_bin(e, s.tx, 5, 0).values;
  for (int l = 1; l < s.cfg.n_symbols; ++l)
    EXPECT_LT((series.col(l) - series.col(0)).norm(), 1e-12);
}

TEST(Echo, PowerScalesWithBetaSquaredAndGainSquared) {
  Bench s = one_user({5});
  const double aod = codeword_angle(5, 8) + 0.15;
  auto energy = [&](double beta) {
    EchoFrame e(s.cfg, s.codebook, {point(aod, 30.0, 1.0, {beta, 0.0}, 0)}, s.tx, 0.0,
                SeededRng(1, 0));
    return e.bin_samples(5).squaredNorm();
  };
  EXPECT_NEAR(energy(0.2) / energy(0.1), 4.0, 1e-10);
  // Single beam: bin output magnitude is |beta| |a^H f|^2 sqrt(P).
  const double g = beam_gain(aod, 5, 8);
  const double n = s.cfg.n_subcarriers * s.cfg.n_symbols;
  EXPECT_NEAR(energy(0.1), n * 0.01 * g * g, 1e-12 * n);
}

TEST(Extract, OnBinSeriesHasClosedForm) {
  Bench s = one_user({3}, 0.25);
  const double d = 2.5 * derived_resolutions(s.cfg).range_m;
  const double v = 1.5 * derived_resolutions(s.cfg).speed_mps;
  const cd beta(0.1, 0.2);
  EchoFrame e(s.cfg, s.codebook, {point(codeword_angle(3, 8), d, v, beta, 0)}, s.tx, 0.0,
              SeededRng(1, 0));
  const auto series = extract_bin(e, s.tx, 3, 0).values;
  // After symbol removal, beta * G * e^{j i phi_r} e^{j l psi} with G = 1
  // times the single-beam selection weight.
  const double sign = selection_weight(3, 1);
  const cd c = steering(codeword_angle(3, 8), 8).dot(s.codebook.col(2));
  for (int l = 0; l < s.cfg.n_symbols; l += 7)
    for (int i = 0; i < s.cfg.n_subcarriers; i += 3) {
      const cd want = sign * c * c * beta *
                      std::polar(1.0, i * 4 * kPi * s.cfg.subcarrier_spacing_hz * d /
                                              kSpeedOfLight +
                                          l * 4 * kPi * s.cfg.symbol_duration_s * v *
                                              s.cfg.carrier_freq_hz / kSpeedOfLight);
      EXPECT_LT(std::abs(series(i, l) - want), 1e-12);
      EXPECT_NEAR(std::abs(series(i, l)), std::abs(beta), 1e-12);
    }
}

TEST(Extract, ZeroSymbolPassesRawValueThrough) {
  Bench s = one_user({3});
  s.tx.amplitude[0][2] = 0.0;
  Eigen::MatrixXcd raw = Eigen::MatrixXcd::Constant(16, 32, cd(2.0, -1.0));
  const auto out = remove_symbols(raw, s.tx, 3, 0).values;
  for (int l = 0; l < 32; ++l) EXPECT_EQ(out(2, l), cd(2.0, -1.0));
  EXPECT_NE(out(1, 0), cd(2.0, -1.0));
}

TEST(Extract, OrthogonalBinResidualBoundedBySidelobe) {
  Bench s = one_user({2});
  const double aod = codeword_angle(2, 8);
  EchoFrame e(s.cfg, s.codebook, {point(aod, 30.0, 1.0, {0.1, 0.0}, 0)}, s.tx, 0.0,
              SeededRng(1, 0));
  double side = 0.0;
  for (int n = 1; n <= 8; ++n)
    if (n != 2) side = std::max(side, std::sqrt(beam_gain(aod, n, 8)));
  for (int n = 1; n <= 8; ++n) {
    if (n == 2) continue;
    const double peak = e.bin_samples(n).cwiseAbs().maxCoeff();
    EXPECT_LE(peak, 0.1 * side + 1e-12) << n;
  }
}

TEST(RangeDoppler, ConstantSeriesIsAllDc) {
  AngularBinSeries s{1, Eigen::MatrixXcd::Ones(16, 32)};
  const auto m = range_doppler_map(s);
  EXPECT_NEAR(m.magnitude(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(m.magnitude.sum(), 1.0, 1e-12);
}

TEST(RangeDoppler, OnGridPhasesPeakAtTheirCell) {
  for (auto [nr, nv] : {std::pair{3, 5}, {0, 31}, {15, 0}, {7, 16}}) {
    AngularBinSeries s{1, Eigen::MatrixXcd(16, 32)};
    for (int l = 0; l < 32; ++l)
      for (int i = 0; i < 16; ++i)
        s.values(i, l) = std::polar(1.0, 2 * kPi * nr * i / 16 + 2 * kPi * nv * l / 32);
    const auto p = find_peak({range_doppler_map(s)});
    EXPECT_TRUE(p.valid);
    EXPECT_EQ(p.n_r, nr);
    EXPECT_EQ(p.n_v, nv);
    EXPECT_NEAR(p.magnitude, 1.0, 1e-12);
  }
}

TEST(RangeDoppler, OffGridPeakWithinOneBinOfBruteForce) {
  SeededRng rng(5, 0);
  for (int t = 0; t < 20; ++t) {
    const double fr = rng.uniform(0.0, 15.0), fv = rng.uniform(-15.0, 15.0);
    AngularBinSeries s{1, Eigen::MatrixXcd(16, 32)};
    for (int l = 0; l < 32; ++l)
      for (int i = 0; i < 16; ++i)
        s.values(i, l) = std::polar(1.0, 2 * kPi * fr * i / 16 + 2 * kPi * fv * l / 32);
    // Fine-grid maximiser of the periodogram as the reference location.
    double best = -1, br = 0, bv = 0;
    for (double r = 0; r < 16; r += 0.05)
      for (double v = -16; v < 16; v += 0.05) {
        cd x = 0;
        for (int l = 0; l < 32; ++l)
          for (int i = 0; i < 16; ++i)
            x += s.values(i, l) * std::polar(1.0, -2 * kPi * (r * i / 16 + v * l / 32));
        if (std::norm(x) > best) best = std::norm(x), br = r, bv = v;
      }
    const auto p = find_peak({range_doppler_map(s)});
    const int sv = p.n_v > 16 ? p.n_v - 32 : p.n_v;
    EXPECT_LE(std::abs(p.n_r - br), 1.0);
    EXPECT_LE(std::abs(sv - bv), 1.0);
    if (t == 3) break;  // the brute-force grid is slow; a few trials suffice
  }
}

TEST(RangeDoppler, TiesGoToSmallestCellThenEarliestMap) {
  RangeDopplerMap a{2, Eigen::MatrixXd::Zero(4, 4)};
  a.magnitude(2, 1) = 1.0;
  a.magnitude(1, 3) = 1.0;
  RangeDopplerMap b{5, Eigen::MatrixXd::Zero(4, 4)};
  b.magnitude(1, 3) = 1.0;
  auto p = find_peak({b, a});
  EXPECT_EQ(p.n_r, 1);
  EXPECT_EQ(p.n_v, 3);
  EXPECT_EQ(p.n_a, 5);
  b.magnitude(0, 0) = 1.0;
  p = find_peak({a, b});
  EXPECT_EQ(p.n_r, 0);
  EXPECT_EQ(p.n_a, 5);
}

TEST(RangeDoppler, DegenerateMapIsInvalidAndMapsToGridEdge) {
  const SystemConfig cfg = default_config();
  const auto p = find_peak({RangeDopplerMap{1, Eigen::MatrixXd::Zero(4, 4)}});
  EXPECT_FALSE(p.valid);
  const auto e = estimate_range_velocity(p, cfg);
  EXPECT_FALSE(e.valid);
  const Resolutions r = derived_resolutions(cfg);
  EXPECT_NEAR(e.range_m, (cfg.n_subcarriers - 1) * r.range_m, 1e-9);
  EXPECT_NEAR(e.speed_mps, cfg.n_symbols / 2 * r.speed_mps, 1e-9);
}

TEST(Estimate, PeakCellsToRangeAndSpeed) {
  const SystemConfig cfg = default_config();
  auto at = [&](int nr, int nv) {
    PeakSearch p;
    p.n_r = nr;
    p.n_v = nv;
    p.valid = true;
    p.magnitude = 1;
    return estimate_range_velocity(p, cfg);
  };
  EXPECT_EQ(at(0, 0).range_m, 0.0);
  EXPECT_EQ(at(0, 0).speed_mps, 0.0);
  EXPECT_NEAR(at(1, 0).range_m, 17.36, 0.001 * 17.36);
  EXPECT_NEAR(at(0, 1).speed_mps, 1.012, 0.001 * 1.012);
  EXPECT_NEAR(at(0, cfg.n_symbols - 1).speed_mps, -at(0, 1).speed_mps, 1e-12);
  EXPECT_GT(at(0, cfg.n_symbols / 2).speed_mps, 0.0);
}

TEST(Estimate, NormalizedErrors) {
  const SystemConfig cfg = default_config();
  const Resolutions r = derived_resolutions(cfg);
  auto e = normalized_errors(30, 5, 30, 5, cfg);
  EXPECT_EQ(e.range, 0.0);
  EXPECT_EQ(e.speed, 0.0);
  e = normalized_errors(30, 5, 30 + r.range_m, 5 - 2 * r.speed_mps, cfg);
  EXPECT_NEAR(e.range, 1.0, 1e-12);
  EXPECT_NEAR(e.speed, 2.0, 1e-12);
}

TEST(Estimate, OffGridNoiselessQuantizationBound) {
  SystemConfig cfg = small_config();
  const Resolutions r = derived_resolutions(cfg);
  Bench s = one_user({4});
  s.cfg = cfg;
  SeededRng rng(9, 0);
  for (int t = 0; t < 30; ++t) {
    const double d = rng.uniform(1.0, 14.0) * r.range_m;
    const double v = rng.uniform(-10.0, 10.0) * r.speed_mps;
    EchoFrame e(cfg, s.codebook, {point(codeword_angle(4, 8), d, v, {0.1, 0.0}, 0)}, s.tx, 0.0,
                SeededRng(1, 0));
    const auto est =
        estimate_range_velocity(find_peak({range_doppler_map(extract_bin(e, s.tx, 4, 0))}), cfg);
    const auto err = normalized_errors(d, v, est.range_m, est.speed_mps, cfg);
    EXPECT_LE(err.range, 0.5 + 1e-9);
    EXPECT_LE(err.speed, 0.5 + 1e-9);
  }
}

TEST(Estimate, RefinementRecoversOffGridNoiseless) {
  SystemConfig cfg = small_config();
  const Resolutions r = derived_resolutions(cfg);
  Bench s = one_user({4});
  const double d = 6.37 * r.range_m, v = -3.21 * r.speed_mps;
  EchoFrame e(cfg, s.codebook, {point(codeword_angle(4, 8), d, v, {0.1, 0.0}, 0)}, s.tx, 0.0,
              SeededRng(1, 0));
  const auto series = extract_bin(e, s.tx, 4, 0);
  const auto fine = refine_range_velocity(series, find_peak({range_doppler_map(series)}), cfg);
  EXPECT_NEAR(fine.range_m, d, 1e-6 * r.range_m);
  EXPECT_NEAR(fine.speed_mps, v, 1e-6 * r.speed_mps);
}

TEST(Music, TwoNoiselessSourcesAtBinCentres) {
  const int nr = 16;
  const double t1 = codeword_angle(4, nr), t2 = codeword_angle(12, nr);
  SeededRng rng(3, 0);
  Eigen::MatrixXcd snaps(nr, 400);
  const CVec a1 = steering(t1, nr).conjugate(), a2 = steering(t2, nr).conjugate();
  for (int k = 0; k < snaps.cols(); ++k)
    snaps.col(k) = a1 * rng.complex_normal(1.0) + a2 * rng.complex_normal(1.0);
  const auto m = music_aod(snaps, 2);
  ASSERT_EQ(m.aods.size(), 2u);
  EXPECT_FALSE(m.low_confidence);
  EXPECT_NEAR(m.aods[0], std::min(t1, t2), 0.01);
  EXPECT_NEAR(m.aods[1], std::max(t1, t2), 0.01);
}

TEST(Music, ZeroSourcesGivesEmpty) {
  Eigen::MatrixXcd snaps = Eigen::MatrixXcd::Random(8, 50);
  EXPECT_TRUE(music_aod(snaps, 0).aods.empty());
  EXPECT_THROW(music_aod(snaps, 8), std::invalid_argument);
}

TEST(Music, FewSnapshotsFlagLowConfidence) {
  Eigen::MatrixXcd snaps = Eigen::MatrixXcd::Random(8, 1);
  EXPECT_TRUE(music_aod(snaps, 2).low_confidence);
}

TEST(Music, SingleSourceHighSnrWithinThreeCrlbStd) {
  const SystemConfig cfg = default_config();
  const int nr = cfg.n_rx_antennas;
  const double theta = 0.4;
  const double gamma = 10.0;
  SeededRng rng(21, 0);
  const CVec a = steering(theta, nr).conjugate();
  const int n = 2000;
  Eigen::MatrixXcd snaps(nr, n);
  for (int k = 0; k < n; ++k) {
    snaps.col(k) = a * std::polar(1.0, rng.uniform(0, 2 * kPi));
    for (int r = 0; r < nr; ++r) snaps(r, k) += rng.complex_normal(1.0 / gamma);
  }
  const auto m = music_aod(snaps, 1);
  ASSERT_EQ(m.aods.size(), 1u);
  // Physical-angle bound, with the normalized angle theta = pi sin(phys).
  SystemConfig c = cfg;
  c.n_subcarriers = n;
  c.n_symbols = 1;
  const double phys = std::asin(theta / kPi);
  const double sd_phys = std::sqrt(crlb(gamma, c, phys).angle_var);
  const double sd = sd_phys * kPi * std::cos(phys);
  EXPECT_LT(std::abs(m.aods[0] - theta), 3.0 * sd + 1e-4);
}

TEST(EchoSinr, AlignedSingleBeamIsPBetaOverNoise) {
  const CMat cb = build_codebook(16);
  const CVec w = user_precoder(cb, {7});
  const double th = codeword_angle(7, 16);
  EXPECT_NEAR(echo_sinr(2.0, 0.3, th, 7, w, 0.0, 0.5, 16), 2.0 * 0.3 / 0.5, 1e-12);
  EXPECT_NEAR(echo_sinr(4.0, 0.3, th, 7, w, 0.0, 0.5, 16),
              2.0 * echo_sinr(2.0, 0.3, th, 7, w, 0.0, 0.5, 16), 1e-12);
  EXPECT_LT(echo_sinr(2.0, 0.3, th + kPi / 16, 7, w, 0.0, 0.5, 16), 1.2 - 1e-6);
  const double edge = beam_gain(th + kPi / 16, 7, 16);
  EXPECT_NEAR(echo_sinr(2.0, 0.3, th + kPi / 16, 7, w, 0.0, 0.5, 16), 1.2 * edge * edge, 1e-12);
}

// Inverse Fisher information of a complex tone with unknown phase. The
// samples are A e^{j(theta0 + i phi + l psi)} + CN(0, 1/gamma), i < n1,
// l < n2 (n2 = 1 drops psi); entry (1,1) of the inverse is var(phi).
double tone_frequency_bound(int n1, int n2, double gamma) {
  const int dim = n2 > 1 ? 3 : 2;
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(dim, dim);
  for (int l = 0; l < n2; ++l)
    for (int i = 0; i < n1; ++i) {
      Eigen::VectorXd g(dim);
      g[0] = 1.0;
      g[1] = i;
      if (dim == 3) g[2] = l;
      j += 2.0 * gamma * g * g.transpose();
    }
  return j.inverse()(1, 1);
}

TEST(Crlb, MatchesFisherInformationOracle) {
  const SystemConfig cfg = default_config();
  const double gamma = 3.7;
  const Crlb b = crlb(gamma, cfg, 0.3);
  const double k_r = kSpeedOfLight / (4 * kPi * cfg.subcarrier_spacing_hz);
  EXPECT_NEAR(b.range_var / (tone_frequency_bound(cfg.n_subcarriers, cfg.n_symbols, gamma) * k_r * k_r),
              1.0, 1e-9);
  const double k_v = cfg.wavelength_m() / (4 * kPi * cfg.symbol_duration_s);
  EXPECT_NEAR(b.speed_var / (tone_frequency_bound(cfg.n_symbols, cfg.n_subcarriers, gamma) * k_v * k_v),
              1.0, 1e-9);
  // Angle: N = N_c N_s snapshots over N_R antennas sharing SNR gamma/N_R
  // each, spatial frequency pi cos(theta) per radian.
  const double n = static_cast<double>(cfg.n_subcarriers) * cfg.n_symbols;
  const double per_snapshot =
      tone_frequency_bound(cfg.n_rx_antennas, 1, gamma / cfg.n_rx_antennas) / n;
  const double k_a = 1.0 / (kPi * std::cos(0.3));
  EXPECT_NEAR(b.angle_var / (per_snapshot * k_a * k_a), 1.0, 1e-6);
}

TEST(Crlb, ScalingAndStructure) {
  SystemConfig cfg = default_config();
  const Crlb a = crlb(2.0, cfg, 0.2), b = crlb(4.0, cfg, 0.2);
  EXPECT_NEAR(a.range_var / b.range_var, 2.0, 1e-12);
  EXPECT_NEAR(a.speed_var / b.speed_var, 2.0, 1e-12);
  EXPECT_NEAR(a.angle_var / b.angle_var, 2.0, 1e-12);
  SystemConfig c = cfg;
  c.n_rx_antennas = 32;
  EXPECT_EQ(crlb(2.0, c, 0.2).range_var, a.range_var);
  c = cfg;
  c.subcarrier_spacing_hz *= 2;
  EXPECT_EQ(crlb(2.0, c, 0.2).angle_var, a.angle_var);
  EXPECT_TRUE(std::isinf(crlb(2.0, cfg, kPi / 2).angle_var));
  EXPECT_GT(a.range_var, 0.0);
}

TEST(Crlb, TableOneAtTenDbRegression) {
  const Crlb b = crlb(10.0, default_config(), 0.0);
  EXPECT_NEAR(b.range_var, 0.00011346080597929071, 1e-9 * 0.00011346080597929071);
  EXPECT_NEAR(b.speed_var, 3.8574669210865626e-07, 1e-9 * 3.8574669210865626e-07);
  EXPECT_NEAR(b.angle_var, 5.912767486130823e-09, 1e-9 * 5.912767486130823e-09);
}

TEST(BinPower, SampledDistributionMatchesMaterialized) {
  Bench s = one_user({3, 4});
  const double noise = 0.02;
  std::vector<Scatterer> sc{point(codeword_angle(3, 8) + 0.2, 30.0, 2.0, {0.05, 0.0}, 0)};
  const int trials = 400;
  for (int bin : {3, 6}) {
    double m1 = 0, m2 = 0, s1 = 0, s2 = 0;
    for (int t = 0; t < trials; ++t) {
      EchoFrame e(s.cfg, s.codebook, sc, s.tx, noise, SeededRng(100, t));
      const double mat = e.bin_samples(bin).squaredNorm() / (16.0 * 32.0);
      SeededRng r(200, t);
      const double smp = e.sample_bin_power(bin, r);
      m1 += mat, s1 += mat * mat, m2 += smp, s2 += smp * smp;
    }
    m1 /= trials, m2 /= trials;
    const double v1 = s1 / trials - m1 * m1, v2 = s2 / trials - m2 * m2;
    const double se = std::sqrt((v1 + v2) / trials);
    EXPECT_LT(std::abs(m1 - m2), 4.0 * se + 1e-12) << bin;
    EXPECT_NEAR(v2 / v1, 1.0, 0.35) << bin;
  }
}

// Fixed-sign multi-beam weights cannot be coherent for every user angle, so
// midway between bin centres the 3-beam peak sits a few percent below the
// nearest single beam, and it always beats a single beam one bin further off.
TEST(FieldOfView, MultiBeamUnionCoversMidwayUser) {
  const CMat cb = build_codebook(16);
  const double mid = 0.5 * (codeword_angle(8, 16) + codeword_angle(9, 16));
  auto peak = [&](const std::vector<int>& beams) {
    BeamAllocation alloc{{beams}};
    SeededRng rng(4, 0);
    SystemConfig c = default_config();
    c.n_subcarriers = 16;
    c.n_symbols = 16;
    TxFrame tx = make_tx_frame(cb, alloc, flat_power(1, 16, 1.0), 16, rng);
    EchoFrame e(c, cb, {point(mid, 30.0, 1.0, {0.1, 0.0}, 0)}, tx, 0.0, SeededRng(1, 0));
    std::vector<RangeDopplerMap> maps;
    for (int b : beams) maps.push_back(range_doppler_map(extract_bin(e, tx, b, 0)));
    return find_peak(maps).magnitude;
  };
  const double single = peak({8});
  EXPECT_GE(peak({7, 8, 9}), 0.95 * single);
  EXPECT_GE(peak({8, 9, 10}), 0.95 * single);
  EXPECT_GT(peak({7, 8, 9}), 2.0 * peak({7}));
  EXPECT_GT(peak({8, 9, 10}), 2.0 * peak({10}));
}

TEST(RdMap, CsvDumpHasHeaderAndAllCells) {
  RangeDopplerMap m{3, Eigen::MatrixXd::Constant(2, 3, 0.5)};
  const auto path = std::filesystem::temp_directory_path() / "isac_rd_test.csv";
  write_rd_map_csv(m, path.string(), "bin=3");
  std::ifstream in(path);
  std::string line;
  int rows = 0;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) == 0) continue;
    if (!header) {
      EXPECT_EQ(line, "n_r,n_v,magnitude");
      header = true;
      continue;
    }
    ++rows;
  }
  EXPECT_EQ(rows, 6);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace isac
