// SPDX-License-Identifier: Apache-2.0

#include "isac/phy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace isac {

namespace {
constexpr double kPi = std::numbers::pi;
}

CVec steering(double theta, int n) {
  if (n < 1) throw std::invalid_argument("steering: n_antennas must be >= 1");
  CVec a(n);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (int k = 0; k < n; ++k) a[k] = std::polar(s, k * theta);
  return a;
}

double codeword_angle(int n_a, int n) { return kPi * (2.0 * n_a - 1.0 - n) / n; }

CMat build_codebook(int n) {
  if (n < 1) throw std::invalid_argument("build_codebook: n_antennas must be >= 1");
  CMat f(n, n);
  for (int c = 0; c < n; ++c) f.col(c) = steering(codeword_angle(c + 1, n), n);
  return f;
}

int nearest_codeword(double theta, int n) {
  double t = std::remainder(theta, 2.0 * kPi);
  // omega(n_a) = -pi + (2 n_a - 1) pi / n
  int best = static_cast<int>(std::floor((t + kPi) * n / (2.0 * kPi))) + 1;
  return std::clamp(best, 1, n);
}

double beam_gain(double theta, int n_a, int n) {
  const double delta = codeword_angle(n_a, n) - theta;
  const double half = 0.5 * delta;
  const double den = std::sin(half);
  if (std::abs(den) < 1e-12) return 1.0;
  const double num = std::sin(n * half);
  return (num * num) / (static_cast<double>(n) * n * den * den);
}

bool BeamAllocation::valid(int n_antennas) const {
  std::vector<bool> used(n_antennas + 1, false);
  for (const auto& set : beams) {
    if (set.empty() || set.size() > 3) return false;
    for (std::size_t k = 0; k < set.size(); ++k) {
      const int b = set[k];
      if (b < 1 || b > n_antennas) return false;
      if (k > 0 && set[k - 1] >= b) return false;
      if (used[b]) return false;
      used[b] = true;
    }
  }
  return true;
}

std::vector<int> BeamAllocation::owner_map(int n_antennas) const {
  std::vector<int> owner(n_antennas, 0);
  for (int u = 0; u < n_users(); ++u)
    for (int b : beams[u]) owner.at(b - 1) = u + 1;
  return owner;
}

double selection_weight(int n_a, int set_size) {
  const double s = 1.0 / std::sqrt(static_cast<double>(set_size));
  return (n_a % 2 == 0) ? s : -s;
}

CVec user_precoder(const CMat& codebook, const std::vector<int>& beams) {
  CVec w = CVec::Zero(codebook.rows());
  const int k = static_cast<int>(beams.size());
  for (int b : beams) w += selection_weight(b, k) * codebook.col(b - 1);
  return w;
}

cd ChannelRealization::los_phase(int user, int i, int l) const {
  const UserLink& u = users.at(user);
  const double phase =
      2.0 * kPi * i * subcarrier_spacing_hz * u.distance / kSpeedOfLight +
      2.0 * kPi * l * symbol_duration_s * u.radial_speed * carrier_freq_hz / kSpeedOfLight;
  return std::polar(1.0, phase);
}

CVec ChannelRealization::response(int user, int i, int l) const {
  const UserLink& u = users.at(user);
  CVec h = u.los_gain * los_phase(user, i, l) * steering(u.aod, n_antennas);
  if (u.nlos.size() > 0) h += u.nlos.col(i);
  return h;
}

ChannelRealization draw_channel(const WorldState& world, const SystemConfig& cfg,
                                bool pure_los, SeededRng& rng) {
  ChannelRealization ch;
  ch.pure_los = pure_los;
  ch.rician_k = pure_los ? std::numeric_limits<double>::infinity() : cfg.rician_k_linear();
  ch.n_antennas = cfg.n_tx_antennas;
  ch.n_subcarriers = cfg.n_subcarriers;
  ch.n_symbols = cfg.n_symbols;
  ch.subcarrier_spacing_hz = cfg.subcarrier_spacing_hz;
  ch.symbol_duration_s = cfg.symbol_duration_s;
  ch.carrier_freq_hz = cfg.carrier_freq_hz;
  const double lambda = cfg.wavelength_m();
  for (int u = 0; u < static_cast<int>(world.users.size()); ++u) {
    const Geometry g = user_geometry(world, u);
    ChannelRealization::UserLink link;
    link.distance = g.distance;
    link.radial_speed = g.radial_speed;
    link.aod = g.aod;
    const double amp = lambda / (4.0 * kPi * g.distance);
    link.alpha = std::polar(amp, rng.uniform(0.0, 2.0 * kPi));
    if (pure_los) {
      link.los_gain = link.alpha;
    } else {
      const double k = ch.rician_k;
      link.los_gain = std::sqrt(k / (1.0 + k)) * link.alpha;
      const double var = amp * amp / cfg.n_tx_antennas / (1.0 + k);
      link.nlos.resize(cfg.n_tx_antennas, cfg.n_subcarriers);
      for (int i = 0; i < cfg.n_subcarriers; ++i)
        for (int m = 0; m < cfg.n_tx_antennas; ++m) link.nlos(m, i) = rng.complex_normal(var);
    }
    ch.users.push_back(std::move(link));
  }
  return ch;
}

double PowerAllocation::total() const {
  double t = 0.0;
  for (const auto& row : power)
    for (double p : row) t += p;
  return t;
}

Eigen::MatrixXcd effective_gains(const ChannelRealization& ch,
                                 const std::vector<CVec>& precoders, int i, int l) {
  const int nu = static_cast<int>(ch.users.size());
  const int nq = static_cast<int>(precoders.size());
  Eigen::MatrixXcd g(nu, nq);
  for (int u = 0; u < nu; ++u) {
    const CVec h = ch.response(u, i, l);
    for (int q = 0; q < nq; ++q) g(u, q) = h.dot(precoders[q]);  // h^H w
  }
  return g;
}

double user_sinr(const ChannelRealization& ch, const std::vector<CVec>& precoders,
                 const PowerAllocation& powers, double noise_power, int i, int l, int user) {
  const Eigen::MatrixXcd g = effective_gains(ch, precoders, i, l);
  double signal = 0.0;
  double interference = 0.0;
  for (int q = 0; q < static_cast<int>(precoders.size()); ++q) {
    const double p = powers.power[q][i] * std::norm(g(user, q));
    (q == user ? signal : interference) += p;
  }
  return signal / (interference + noise_power);
}

std::vector<double> rates(const ChannelRealization& ch, const std::vector<CVec>& precoders,
                          const PowerAllocation& powers, double noise_power) {
  const int nu = static_cast<int>(ch.users.size());
  const int nc = ch.n_subcarriers;
  const int ns = ch.n_symbols;
  std::vector<double> r(nu, 0.0);

  // LoS part of h^H w without the (i, l) phase, and NLoS part per subcarrier.
  Eigen::MatrixXcd los(nu, nu);
  for (int u = 0; u < nu; ++u) {
    const CVec a = steering(ch.users[u].aod, ch.n_antennas);
    for (int q = 0; q < nu; ++q) los(u, q) = std::conj(ch.users[u].los_gain) * a.dot(precoders[q]);
  }

  if (ch.pure_los) {
    for (int u = 0; u < nu; ++u) {
      double acc = 0.0;
      for (int i = 0; i < nc; ++i) {
        double sig = 0.0, intf = 0.0;
        for (int q = 0; q < nu; ++q) {
          const double p = powers.power[q][i] * std::norm(los(u, q));
          (q == u ? sig : intf) += p;
        }
        acc += std::log2(1.0 + sig / (intf + noise_power));
      }
      r[u] = acc * ns;
    }
    return r;
  }

  for (int u = 0; u < nu; ++u) {
    const auto& link = ch.users[u];
    const double dphi = 2.0 * kPi * ch.subcarrier_spacing_hz * link.distance / kSpeedOfLight;
    const double dpsi = 2.0 * kPi * ch.symbol_duration_s * link.radial_speed *
                        ch.carrier_freq_hz / kSpeedOfLight;
    std::vector<cd> nl(nu);
    double acc = 0.0;
    for (int i = 0; i < nc; ++i) {
      for (int q = 0; q < nu; ++q) nl[q] = link.nlos.col(i).dot(precoders[q]);
      for (int l = 0; l < ns; ++l) {
        // conj of the LoS phase multiplies the LoS part of h^H w
        const cd ph = std::polar(1.0, -(i * dphi + l * dpsi));
        double sig = 0.0, intf = 0.0;
        for (int q = 0; q < nu; ++q) {
          const double p = powers.power[q][i] * std::norm(ph * los(u, q) + nl[q]);
          (q == u ? sig : intf) += p;
        }
        acc += std::log2(1.0 + sig / (intf + noise_power));
      }
    }
    r[u] = acc;
  }
  return r;
}

bool transmission_success(const std::vector<double>& rates_over_frames, double r_th) {
  double sum = 0.0;
  for (double r : rates_over_frames) sum += r;
  return sum >= r_th;
}

}  // namespace isac
