// SPDX-License-Identifier: Apache-2.0

#include "isac/sensing.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace isac {

namespace {

constexpr double kPi = std::numbers::pi;

// FFTW planning is not thread-safe; execution on new arrays is.
fftw_plan forward_plan(int n_c, int n_s) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, fftw_plan> plans;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(n_c, n_s);
  auto it = plans.find(key);
  if (it != plans.end()) return it->second;
  std::vector<std::complex<double>> in(static_cast<std::size_t>(n_c) * n_s);
  std::vector<std::complex<double>> out(in.size());
  // Row-major n_s x n_c equals column-major n_c x n_s.
  fftw_plan p = fftw_plan_dft_2d(n_s, n_c, reinterpret_cast<fftw_complex*>(in.data()),
                                 reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans.emplace(key, p);
  return p;
}

double range_phase_step(const SystemConfig& cfg, double d) {
  return 4.0 * kPi * cfg.subcarrier_spacing_hz * d / kSpeedOfLight;
}

double doppler_phase_step(const SystemConfig& cfg, double v) {
  return 4.0 * kPi * cfg.symbol_duration_s * v * cfg.carrier_freq_hz / kSpeedOfLight;
}

}  // namespace

TxFrame make_tx_frame(const CMat& codebook, const BeamAllocation& alloc,
                      const PowerAllocation& powers, int n_symbols, SeededRng& rng) {
  TxFrame tx;
  const int n_c = powers.power.empty() ? 0 : static_cast<int>(powers.power[0].size());
  tx.n_subcarriers = n_c;
  tx.n_symbols = n_symbols;
  static const cd kQpsk[4] = {std::polar(1.0, kPi / 4), std::polar(1.0, 3 * kPi / 4),
                              std::polar(1.0, 5 * kPi / 4), std::polar(1.0, 7 * kPi / 4)};
  for (int u = 0; u < alloc.n_users(); ++u) {
    tx.precoders.push_back(user_precoder(codebook, alloc.beams[u]));
    Eigen::VectorXd amp(n_c);
    for (int i = 0; i < n_c; ++i) amp[i] = std::sqrt(std::max(0.0, powers.power[u][i]));
    tx.amplitude.push_back(amp);
    Eigen::MatrixXcd q(n_c, n_symbols);
    std::uint64_t bits = 0;
    int left = 0;
    for (int l = 0; l < n_symbols; ++l)
      for (int i = 0; i < n_c; ++i) {
        if (left == 0) {
          bits = rng.next_u64();
          left = 32;
        }
        q(i, l) = kQpsk[bits & 3u];
        bits >>= 2;
        --left;
      }
    tx.qpsk.push_back(std::move(q));
  }
  return tx;
}

EchoFrame::EchoFrame(const SystemConfig& cfg, const CMat& codebook,
                     std::vector<Scatterer> scatterers, const TxFrame& tx, double noise_var,
                     SeededRng noise_rng)
    : n_c_(cfg.n_subcarriers),
      n_s_(cfg.n_symbols),
      codebook_(codebook),
      scatterers_(std::move(scatterers)),
      noise_var_(noise_var),
      noise_rng_(noise_rng) {
  const int n_t = static_cast<int>(codebook.rows());
  const int k_count = static_cast<int>(scatterers_.size());
  const int n_users = static_cast<int>(tx.precoders.size());
  const Eigen::Index n = static_cast<Eigen::Index>(n_c_) * n_s_;

  proj_.resize(k_count, codebook.cols());
  z_.resize(n, k_count);
  Eigen::VectorXcd pr(n_c_), pd(n_s_);
  for (int k = 0; k < k_count; ++k) {
    const Scatterer& s = scatterers_[k];
    const CVec a = steering(s.aod, n_t);
    for (int c = 0; c < codebook.cols(); ++c) proj_(k, c) = a.dot(codebook.col(c));
    std::vector<cd> coupling(n_users);
    for (int u = 0; u < n_users; ++u) coupling[u] = a.dot(tx.precoders[u]);

    const double dphi = range_phase_step(cfg, s.distance);
    const double dpsi = doppler_phase_step(cfg, s.radial_speed);
    for (int i = 0; i < n_c_; ++i) pr[i] = s.beta * std::polar(1.0, i * dphi);
    for (int l = 0; l < n_s_; ++l) pd[l] = std::polar(1.0, l * dpsi);

    std::vector<Eigen::VectorXcd> weight(n_users);
    for (int u = 0; u < n_users; ++u)
      weight[u] = (coupling[u] * tx.amplitude[u].cast<cd>()).cwiseProduct(pr);
    for (int l = 0; l < n_s_; ++l) {
      auto col = z_.col(k).segment(static_cast<Eigen::Index>(l) * n_c_, n_c_);
      col.setZero();
      for (int u = 0; u < n_users; ++u)
        col += weight[u].cwiseProduct(tx.qpsk[u].col(l));
      col *= pd[l];
    }
  }
  gram_ = z_.adjoint() * z_;
}

Eigen::MatrixXcd EchoFrame::bin_signal(int n_a, int exclude) const {
  if (n_a < 1 || n_a > n_bins()) throw std::out_of_range("bin index out of range");
  Eigen::VectorXcd e = proj_.col(n_a - 1);
  if (exclude >= 0 && exclude < e.size()) e[exclude] = 0.0;
  Eigen::VectorXcd flat = z_ * e;
  return Eigen::Map<Eigen::MatrixXcd>(flat.data(), n_c_, n_s_);
}

Eigen::MatrixXcd EchoFrame::scatterer_term(int k, int n_a) const {
  Eigen::VectorXcd flat = z_.col(k) * proj_(k, n_a - 1);
  return Eigen::Map<Eigen::MatrixXcd>(flat.data(), n_c_, n_s_);
}

Eigen::MatrixXcd EchoFrame::bin_samples(int n_a) const {
  Eigen::MatrixXcd y = bin_signal(n_a);
  if (noise_var_ > 0.0) {
    SeededRng r = noise_rng_.child(static_cast<std::uint64_t>(n_a));
    for (int l = 0; l < n_s_; ++l)
      for (int i = 0; i < n_c_; ++i) y(i, l) += r.complex_normal(noise_var_);
  }
  return y;
}

Eigen::MatrixXcd EchoFrame::antenna_samples() const {
  const Eigen::Index n = static_cast<Eigen::Index>(n_c_) * n_s_;
  Eigen::MatrixXcd beam(n_bins(), n);
  for (int b = 1; b <= n_bins(); ++b) {
    Eigen::MatrixXcd y = bin_samples(b);
    beam.row(b - 1) = Eigen::Map<Eigen::RowVectorXcd>(y.data(), n);
  }
  return codebook_.conjugate() * beam;
}

double EchoFrame::bin_signal_energy(int n_a, int exclude) const {
  Eigen::VectorXcd e = proj_.col(n_a - 1);
  if (exclude >= 0 && exclude < e.size()) e[exclude] = 0.0;
  return std::max(0.0, (e.adjoint() * gram_ * e)(0, 0).real());
}

double EchoFrame::sample_bin_power(int n_a, SeededRng& rng) const {
  const double n = static_cast<double>(n_c_) * n_s_;
  const double energy = bin_signal_energy(n_a);
  if (noise_var_ <= 0.0) return energy / n;
  // Split the noise into its component along the signal and the rest.
  const cd g = rng.complex_normal(noise_var_);
  const double rest = noise_var_ * rng.gamma(n - 1.0);
  return (std::norm(std::sqrt(energy) + g) + rest) / n;
}

std::vector<Scatterer> scene_scatterers(const WorldState& world, const SystemConfig& cfg,
                                        const std::vector<double>& user_phases) {
  std::vector<Scatterer> out;
  for (int u = 0; u < static_cast<int>(world.users.size()); ++u) {
    const Geometry g = user_geometry(world, u);
    Scatterer s;
    s.aod = g.aod;
    s.distance = g.distance;
    s.radial_speed = g.radial_speed;
    s.beta = std::polar(radar_amplitude(cfg.wavelength_m(), cfg.rcs_m2, g.distance),
                        user_phases.at(u));
    s.user = u;
    out.push_back(s);
  }
  for (const auto& c : world.clutters) {
    const Geometry g = point_geometry(world, c.pos);
    Scatterer s;
    s.aod = g.aod;
    s.distance = g.distance;
    s.beta = c.beta;
    out.push_back(s);
  }
  return out;
}

Eigen::MatrixXcd direct_echo(const SystemConfig& cfg, const std::vector<Scatterer>& sc,
                             const TxFrame& tx) {
  const int n_r = cfg.n_rx_antennas;
  const int n_c = cfg.n_subcarriers, n_s = cfg.n_symbols;
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n_r, static_cast<Eigen::Index>(n_c) * n_s);
  for (int l = 0; l < n_s; ++l)
    for (int i = 0; i < n_c; ++i) {
      CVec x = CVec::Zero(cfg.n_tx_antennas);
      for (std::size_t u = 0; u < tx.precoders.size(); ++u)
        x += tx.precoders[u] * tx.symbol(static_cast<int>(u), i, l);
      CVec acc = CVec::Zero(n_r);
      for (const auto& s : sc) {
        const CVec a = steering(s.aod, n_r);
        const cd ph = std::polar(1.0, i * range_phase_step(cfg, s.distance) +
                                          l * doppler_phase_step(cfg, s.radial_speed));
        acc += s.beta * ph * a.conjugate() * a.dot(x);
      }
      y.col(i + static_cast<Eigen::Index>(l) * n_c) = acc;
    }
  return y;
}

AngularBinSeries remove_symbols(Eigen::MatrixXcd raw, const TxFrame& tx, int n_a, int user) {
  for (int l = 0; l < raw.cols(); ++l)
    for (int i = 0; i < raw.rows(); ++i) {
      const cd s = tx.symbol(user, i, l);
      if (s != cd(0.0, 0.0)) raw(i, l) /= s;
    }
  return {n_a, std::move(raw)};
}

AngularBinSeries extract_bin(const EchoFrame& echo, const TxFrame& tx, int n_a, int user) {
  return remove_symbols(echo.bin_samples(n_a), tx, n_a, user);
}

RangeDopplerMap range_doppler_map(const AngularBinSeries& series) {
  const int n_c = static_cast<int>(series.values.rows());
  const int n_s = static_cast<int>(series.values.cols());
  if (n_c == 0 || n_s == 0) throw std::invalid_argument("range_doppler_map: empty series");
  Eigen::MatrixXcd in = series.values;
  Eigen::MatrixXcd out(n_c, n_s);
  fftw_execute_dft(forward_plan(n_c, n_s), reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  RangeDopplerMap m;
  m.n_a = series.n_a;
  m.magnitude = out.cwiseAbs() / (static_cast<double>(n_c) * n_s);
  return m;
}

PeakSearch find_peak(const std::vector<RangeDopplerMap>& maps) {
  PeakSearch best;
  best.magnitude = -1.0;
  for (const auto& m : maps) {
    for (int v = 0; v < m.magnitude.cols(); ++v)
      for (int r = 0; r < m.magnitude.rows(); ++r) {
        const double x = m.magnitude(r, v);
        if (!std::isfinite(x)) continue;
        const bool better =
            x > best.magnitude ||
            (x == best.magnitude && std::tie(r, v) < std::tie(best.n_r, best.n_v));
        if (better) {
          best.magnitude = x;
          best.n_r = r;
          best.n_v = v;
          best.n_a = m.n_a;
        }
      }
  }
  best.valid = best.magnitude > 0.0;
  if (!best.valid) best = PeakSearch{};
  return best;
}

RangeVelocity estimate_range_velocity(const PeakSearch& peak, const SystemConfig& cfg) {
  const Resolutions res = derived_resolutions(cfg);
  int n_r = peak.n_r;
  int n_v = peak.n_v;
  if (!peak.valid) {
    n_r = cfg.n_subcarriers - 1;
    n_v = cfg.n_symbols / 2;
  }
  const int signed_v = n_v > cfg.n_symbols / 2 ? n_v - cfg.n_symbols : n_v;
  return {n_r * res.range_m, signed_v * res.speed_mps, peak.valid};
}

namespace {

struct Periodogram {
  const Eigen::MatrixXcd& y;
  // Value, gradient and Hessian of |X(phi, psi)|^2.
  struct Eval {
    double f, gp, gq, hpp, hpq, hqq;
  };

  static Eigen::VectorXcd phasors(Eigen::Index n, double w) {
    Eigen::VectorXcd e(n);
    for (Eigen::Index k = 0; k < n; ++k) e[k] = std::polar(1.0, -static_cast<double>(k) * w);
    return e;
  }

  double value(double phi, double psi) const {
    const Eigen::VectorXcd r = y * phasors(y.cols(), psi);
    return std::norm(phasors(y.rows(), phi).cwiseProduct(r).sum());
  }

  Eval eval(double phi, double psi) const {
    const Eigen::Index n_s = y.cols(), n_c = y.rows();
    const Eigen::VectorXcd el = phasors(n_s, psi);
    const Eigen::VectorXd l = Eigen::VectorXd::LinSpaced(n_s, 0.0, static_cast<double>(n_s - 1));
    const Eigen::VectorXd i = Eigen::VectorXd::LinSpaced(n_c, 0.0, static_cast<double>(n_c - 1));
    const Eigen::VectorXcd r0 = y * el;
    const Eigen::VectorXcd r1 = y * el.cwiseProduct(l.cast<cd>());
    const Eigen::VectorXcd r2 = y * el.cwiseProduct(l.cwiseProduct(l).cast<cd>());
    const Eigen::VectorXcd e = phasors(n_c, phi);
    const Eigen::VectorXcd ei = e.cwiseProduct(i.cast<cd>());
    const Eigen::VectorXcd eii = ei.cwiseProduct(i.cast<cd>());
    const cd mj(0.0, -1.0);
    const cd x = e.cwiseProduct(r0).sum();
    const cd xp = mj * ei.cwiseProduct(r0).sum();
    const cd xq = mj * e.cwiseProduct(r1).sum();
    const cd xpp = -eii.cwiseProduct(r0).sum();
    const cd xpq = -ei.cwiseProduct(r1).sum();
    const cd xqq = -e.cwiseProduct(r2).sum();
    Eval v;
    v.f = std::norm(x);
    v.gp = 2.0 * (std::conj(x) * xp).real();
    v.gq = 2.0 * (std::conj(x) * xq).real();
    v.hpp = 2.0 * (std::norm(xp) + (std::conj(x) * xpp).real());
    v.hqq = 2.0 * (std::norm(xq) + (std::conj(x) * xqq).real());
    v.hpq = 2.0 * ((std::conj(xq) * xp).real() + (std::conj(x) * xpq).real());
    return v;
  }
};

}  // namespace

RangeVelocity refine_range_velocity(const AngularBinSeries& series, const PeakSearch& coarse,
                                    const SystemConfig& cfg) {
  const Eigen::MatrixXcd& y = series.values;
  const int n_c = static_cast<int>(y.rows());
  const int n_s = static_cast<int>(y.cols());
  Periodogram pg{y};
  double phi = 2.0 * kPi * coarse.n_r / n_c;
  double psi = 2.0 * kPi * coarse.n_v / n_s;

  // Fine scan over +-half a bin in each axis brings the start inside the
  // concave part of the main lobe.
  constexpr int kScan = 16;
  for (int pass = 0; pass < 2; ++pass) {
    double best = -1.0, arg = phi;
    for (int k = -kScan; k <= kScan; ++k) {
      const double p = phi + (0.5 * k / kScan) * 2.0 * kPi / n_c;
      const double f = pg.value(p, psi);
      if (f > best) best = f, arg = p;
    }
    phi = arg;
    best = -1.0, arg = psi;
    for (int k = -kScan; k <= kScan; ++k) {
      const double q = psi + (0.5 * k / kScan) * 2.0 * kPi / n_s;
      const double f = pg.value(phi, q);
      if (f > best) best = f, arg = q;
    }
    psi = arg;
  }

  for (int it = 0; it < 50; ++it) {
    const auto e = pg.eval(phi, psi);
    const double det = e.hpp * e.hqq - e.hpq * e.hpq;
    if (!(e.hpp < 0 && det > 0)) break;
    double sp = -(e.hqq * e.gp - e.hpq * e.gq) / det;
    double sq = -(-e.hpq * e.gp + e.hpp * e.gq) / det;
    double t = 1.0;
    while (t > 1e-6 && pg.value(phi + t * sp, psi + t * sq) < e.f) t *= 0.5;
    if (t <= 1e-6) break;
    phi += t * sp;
    psi += t * sq;
    if (std::abs(t * sp) < 1e-13 && std::abs(t * sq) < 1e-13) break;
  }
  psi = std::remainder(psi, 2.0 * kPi);
  RangeVelocity rv;
  rv.range_m = phi * kSpeedOfLight / (4.0 * kPi * cfg.subcarrier_spacing_hz);
  rv.speed_mps =
      psi * kSpeedOfLight / (4.0 * kPi * cfg.symbol_duration_s * cfg.carrier_freq_hz);
  rv.valid = coarse.valid;
  return rv;
}

double music_pseudospectrum(const Eigen::MatrixXcd& en, double theta) {
  const CVec sig = steering(theta, static_cast<int>(en.rows())).conjugate();
  const double d = (en.adjoint() * sig).squaredNorm();
  return 1.0 / std::max(d, 1e-300);
}

MusicResult music_aod(const Eigen::MatrixXcd& snapshots, int n_sources) {
  const int n_r = static_cast<int>(snapshots.rows());
  if (n_sources < 0 || n_sources >= n_r)
    throw std::invalid_argument("music_aod: n_sources must lie in [0, N_R)");
  MusicResult res;
  if (n_sources == 0) return res;
  res.low_confidence = snapshots.cols() < n_r;
  const Eigen::MatrixXcd r = snapshots * snapshots.adjoint() / static_cast<double>(std::max<Eigen::Index>(1, snapshots.cols()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(r);
  const Eigen::MatrixXcd en = es.eigenvectors().leftCols(n_r - n_sources);

  constexpr int kGrid = 4096;
  const double step = 2.0 * kPi / kGrid;
  std::vector<double> p(kGrid);
  for (int g = 0; g < kGrid; ++g) p[g] = music_pseudospectrum(en, -kPi + g * step);
  std::vector<std::pair<double, double>> peaks;  // (value, theta)
  for (int g = 0; g < kGrid; ++g) {
    const double left = p[(g + kGrid - 1) % kGrid], right = p[(g + 1) % kGrid];
    if (p[g] > left && p[g] >= right) {
      // Golden-section refinement inside the neighbouring cells.
      double a = -kPi + (g - 1) * step, b = -kPi + (g + 1) * step;
      const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
      double c = b - gr * (b - a), d = a + gr * (b - a);
      double fc = music_pseudospectrum(en, c), fd = music_pseudospectrum(en, d);
      for (int it = 0; it < 60; ++it) {
        if (fc > fd) {
          b = d, d = c, fd = fc;
          c = b - gr * (b - a);
          fc = music_pseudospectrum(en, c);
        } else {
          a = c, c = d, fc = fd;
          d = a + gr * (b - a);
          fd = music_pseudospectrum(en, d);
        }
      }
      const double t = 0.5 * (a + b);
      peaks.emplace_back(music_pseudospectrum(en, t), std::remainder(t, 2.0 * kPi));
    }
  }
  std::sort(peaks.begin(), peaks.end(), [](auto& x, auto& y) { return x.first > y.first; });
  if (static_cast<int>(peaks.size()) < n_sources) res.low_confidence = true;
  for (int s = 0; s < n_sources; ++s) {
    if (peaks.empty()) {
      res.aods.push_back(0.0);
      continue;
    }
    res.aods.push_back(peaks[std::min<std::size_t>(s, peaks.size() - 1)].second);
  }
  std::sort(res.aods.begin(), res.aods.end());
  return res;
}

double echo_sinr(double power, double beta_abs2, double aod, int n_a, const CVec& precoder,
                 double interference, double noise, int n_antennas) {
  const double g_bin = beam_gain(aod, n_a, n_antennas);
  const double g_tx = std::norm(steering(aod, n_antennas).dot(precoder));
  return power * beta_abs2 * g_bin * g_tx / (interference + noise);
}

Crlb crlb(double gamma, const SystemConfig& cfg, double physical_aod) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (!(gamma > 0)) return {inf, inf, inf};
  const double n = static_cast<double>(cfg.n_symbols) * cfg.n_subcarriers;
  const double nc = cfg.n_subcarriers, ns = cfg.n_symbols, nr = cfg.n_rx_antennas;
  const double pi2 = kPi * kPi;
  const double lambda = cfg.wavelength_m();
  Crlb b;
  b.range_var = 3.0 * kSpeedOfLight * kSpeedOfLight /
                (8.0 * n * gamma * pi2 * cfg.subcarrier_spacing_hz * cfg.subcarrier_spacing_hz *
                 (nc * nc - 1.0));
  b.speed_var = 3.0 * lambda * lambda /
                (8.0 * n * gamma * pi2 * cfg.symbol_duration_s * cfg.symbol_duration_s *
                 (ns * ns - 1.0));
  const double c = std::cos(physical_aod);
  b.angle_var = std::abs(c) < 1e-15 ? inf : 6.0 / (n * gamma * pi2 * c * c * (nr * nr - 1.0));
  return b;
}

NormalizedErrors normalized_errors(double d, double v, double d_hat, double v_hat,
                                   const SystemConfig& cfg) {
  const Resolutions r = derived_resolutions(cfg);
  return {std::abs(d_hat - d) / r.range_m, std::abs(v_hat - v) / r.speed_mps};
}

TtiSensing sense_frame(const SystemConfig& cfg, const EchoFrame& echo, const TxFrame& tx,
                       const BeamAllocation& alloc, SeededRng power_rng, bool run_music,
                       bool keep_maps) {
  const int nt = echo.n_bins();
  const double n = static_cast<double>(echo.n_subcarriers()) * echo.n_symbols();
  TtiSensing out;
  out.bin_power.assign(nt, 0.0);

  std::vector<Eigen::MatrixXcd> samples(nt + 1);
  std::vector<bool> have(nt + 1, false);
  for (const auto& set : alloc.beams)
    for (int b : set) have[b] = true;
  if (run_music) std::fill(have.begin(), have.end(), true);

  for (int b = 1; b <= nt; ++b) {
    if (have[b]) {
      samples[b] = echo.bin_samples(b);
      out.bin_power[b - 1] = samples[b].squaredNorm() / n;
    } else {
      SeededRng r = power_rng.child(static_cast<std::uint64_t>(b));
      out.bin_power[b - 1] = echo.sample_bin_power(b, r);
    }
  }

  for (int u = 0; u < alloc.n_users(); ++u) {
    UserSensing us;
    std::vector<RangeDopplerMap> maps;
    for (int b : alloc.beams[u]) {
      maps.push_back(range_doppler_map(remove_symbols(samples[b], tx, b, u)));
      if (out.bin_power[b - 1] > us.report_power || us.report_bin == 0) {
        us.report_power = out.bin_power[b - 1];
        us.report_bin = b;
      }
    }
    us.peak = find_peak(maps);
    us.estimate = estimate_range_velocity(us.peak, cfg);
    if (keep_maps)
      for (auto& m : maps)
        if (m.n_a == us.peak.n_a) us.peak_map = m;

    // Scatterers are ordered users first, so index u is this user.
    const auto& sc = echo.scatterers();
    if (u < static_cast<int>(sc.size()) && sc[u].user == u) {
      double p_mean = tx.amplitude[u].squaredNorm() / std::max<Eigen::Index>(1, tx.amplitude[u].size());
      const double intf = echo.bin_signal_energy(us.report_bin, u) / n;
      us.echo_sinr = echo_sinr(p_mean, std::norm(sc[u].beta), sc[u].aod, us.report_bin,
                               tx.precoders[u], intf, echo.noise_var(), nt);
    }
    out.users.push_back(std::move(us));
  }

  if (run_music) {
    const Eigen::Index cols = static_cast<Eigen::Index>(n);
    Eigen::MatrixXcd beam(nt, cols);
    for (int b = 1; b <= nt; ++b)
      beam.row(b - 1) = Eigen::Map<const Eigen::RowVectorXcd>(samples[b].data(), cols);
    const CMat f = build_codebook(nt);
    out.music = music_aod(f.conjugate() * beam, alloc.n_users());
    out.has_music = true;
  }
  return out;
}

void write_rd_map_csv(const RangeDopplerMap& map, const std::string& path,
                      const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "n_r,n_v,magnitude\n";
  char buf[96];
  for (int r = 0; r < map.magnitude.rows(); ++r)
    for (int v = 0; v < map.magnitude.cols(); ++v) {
      std::snprintf(buf, sizeof buf, "%d,%d,%.17g\n", r, v, map.magnitude(r, v));
      out << buf;
    }
}

}  // namespace isac
