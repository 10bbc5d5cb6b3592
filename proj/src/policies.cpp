// SPDX-License-Identifier: Apache-2.0

#include "isac/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace isac {

std::vector<int> three_around(int centre, int nt) {
  const int lo = std::clamp(centre - 1, 1, std::max(1, nt - 2));
  std::vector<int> s;
  for (int b = lo; b < lo + 3 && b <= nt; ++b) s.push_back(b);
  return s;
}

int strongest_bin(const std::vector<int>& set, const std::vector<double>& bin_power) {
  if (set.empty()) throw std::invalid_argument("strongest_bin: empty set");
  int best = set.front();
  for (int b : set) {
    const double p = bin_power.at(b - 1), q = bin_power.at(best - 1);
    if (p > q || (p == q && b < best)) best = b;
  }
  return best;
}

EnvOptions GeniePolicy::env_options() const {
  EnvOptions o;
  o.belief = BeliefSource::genie;
  return o;
}

BeamRequests GeniePolicy::decide(const IsacEnv& env, SeededRng&) {
  const int nt = env.config().n_tx_antennas;
  BeamRequests req(env.config().n_users);
  for (int u = 0; u < env.config().n_users; ++u)
    req[u] = {nearest_codeword(user_geometry(env.world(), u).aod, nt)};
  return req;
}

EnvOptions AodBasedPolicy::env_options() const {
  EnvOptions o;
  o.run_music = true;
  o.belief = BeliefSource::music;
  return o;
}

double AodBasedPolicy::angle_precision(double gamma, const SystemConfig& cfg) {
  if (!(gamma > 0)) return std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(cfg.n_symbols) * cfg.n_subcarriers;
  const double nr = cfg.n_rx_antennas;
  return std::sqrt(6.0 / (n * gamma * (nr * nr - 1.0)));
}

double AodBasedPolicy::estimated_sinr(const IsacEnv& env, int u, double aod_hat) {
  const SystemConfig& cfg = env.config();
  const UserSensing& s = env.last_sensing().users.at(u);
  const auto& p = env.last_powers().power.at(u);
  double p_mean = 0.0;
  for (double x : p) p_mean += x;
  p_mean /= std::max<std::size_t>(1, p.size());
  const double d_hat = std::max(s.estimate.range_m, 0.5 * derived_resolutions(cfg).range_m);
  const double beta = radar_amplitude(cfg.wavelength_m(), cfg.rcs_m2, d_hat);
  const CVec w = user_precoder(env.codebook(), env.allocation().beams.at(u));
  const double noise = cfg.noise_power_w();
  const double signal = echo_sinr(p_mean, beta * beta, aod_hat, s.report_bin, w, 0.0, 1.0,
                                  cfg.n_tx_antennas);
  const double measured = env.bin_power().at(s.report_bin - 1);
  const double interference = std::max(measured - signal - noise, 0.0);
  return signal / (interference + noise);
}

BeamRequests AodBasedPolicy::decide(const IsacEnv& env, SeededRng&) {
  const SystemConfig& cfg = env.config();
  const int nt = cfg.n_tx_antennas;
  BeamRequests req = env.allocation().beams;
  const auto& est = env.music_estimates();
  if (est.empty() || env.last_sensing().music.low_confidence) return req;
  const double threshold = cfg.aod_precision_threshold;
  for (int u = 0; u < cfg.n_users; ++u) {
    const int bin = nearest_codeword(est[u], nt);
    const double sigma = angle_precision(estimated_sinr(env, u, est[u]), cfg);
    if (sigma >= threshold) {
      req[u] = three_around(bin, nt);
    } else if (std::find(req[u].begin(), req[u].end(), bin) == req[u].end()) {
      req[u] = {bin};
    }
  }
  return req;
}

XTdmaPolicy::XTdmaPolicy(int x) : x_(x) {
  if (x < 0) throw std::invalid_argument("x_tdma: X must be non-negative");
}

std::string XTdmaPolicy::name() const { return "x_tdma:" + std::to_string(x_); }

void XTdmaPolicy::begin_episode(const IsacEnv& env) {
  phase_ = 0;
  last_was_multi_ = true;
  best_.clear();
  for (const auto& set : env.allocation().beams) best_.push_back(strongest_bin(set, env.bin_power()));
}

BeamRequests XTdmaPolicy::decide(const IsacEnv& env, SeededRng&) {
  const int nu = env.config().n_users, nt = env.config().n_tx_antennas;
  if (last_was_multi_)
    for (int u = 0; u < nu; ++u)
      best_[u] = strongest_bin(env.allocation().beams[u], env.bin_power());
  BeamRequests req(nu);
  for (int u = 0; u < nu; ++u) req[u] = phase_ == 0 ? three_around(best_[u], nt) : std::vector<int>{best_[u]};
  last_was_multi_ = phase_ == 0;
  phase_ = (phase_ + 1) % (x_ + 1);
  return req;
}

BeamRequests RandomPolicy::decide(const IsacEnv& env, SeededRng& rng) {
  const int nu = env.config().n_users, nt = env.config().n_tx_antennas;
  std::vector<int> free(nt);
  for (int b = 0; b < nt; ++b) free[b] = b + 1;
  BeamRequests req(nu);
  for (int u = 0; u < nu; ++u) {
    const int k = rng.uniform_int(0, static_cast<int>(free.size()) - 1);
    req[u] = {free[k]};
    free.erase(free.begin() + k);
  }
  return req;
}

StaticBeamPolicy::StaticBeamPolicy(int width, int offset) : width_(width), offset_(offset) {
  if (width != 1 && width != 3) throw std::invalid_argument("static: width must be 1 or 3");
}

std::string StaticBeamPolicy::name() const {
  std::string s = "static" + std::to_string(width_);
  if (offset_ != 0) s += (offset_ > 0 ? ":+" : ":") + std::to_string(offset_);
  return s;
}

void StaticBeamPolicy::begin_episode(const IsacEnv& env) {
  const int nt = env.config().n_tx_antennas;
  sets_.assign(env.config().n_users, {});
  for (int u = 0; u < env.config().n_users; ++u) {
    const int anchor = nearest_codeword(user_geometry(env.world(), u).aod, nt);
    sets_[u] = width_ == 3 ? three_around(anchor, nt)
                           : std::vector<int>{std::clamp(anchor + offset_, 1, nt)};
  }
}

BeamRequests StaticBeamPolicy::decide(const IsacEnv&, SeededRng&) { return sets_; }

void SweepPolicy::begin_episode(const IsacEnv& env) {
  const int nt = env.config().n_tx_antennas;
  start_.clear();
  for (int u = 0; u < env.config().n_users; ++u)
    start_.push_back(three_around(nearest_codeword(user_geometry(env.world(), u).aod, nt), nt));
}

BeamRequests SweepPolicy::decide(const IsacEnv& env, SeededRng&) {
  if (!start_.empty()) return std::exchange(start_, {});
  const int nt = env.config().n_tx_antennas;
  BeamRequests req;
  for (const auto& set : env.allocation().beams)
    req.push_back(three_around(strongest_bin(set, env.bin_power()), nt));
  return req;
}

std::unique_ptr<Policy> make_baseline(const std::string& tag, const SystemConfig& cfg) {
  const auto colon = tag.find(':');
  const std::string head = tag.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : tag.substr(colon + 1);
  auto int_arg = [&](int fallback) {
    if (arg.empty()) return fallback;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != arg.size()) throw std::invalid_argument("bad policy argument: " + tag);
    return v;
  };
  if (head == "genie" && arg.empty()) return std::make_unique<GeniePolicy>();
  if (head == "aod_based" && arg.empty()) return std::make_unique<AodBasedPolicy>();
  if (head == "x_tdma") return std::make_unique<XTdmaPolicy>(int_arg(cfg.experiment.tdma_x));
  if (head == "random" && arg.empty()) return std::make_unique<RandomPolicy>();
  if (head == "static1") return std::make_unique<StaticBeamPolicy>(1, int_arg(0));
  if (head == "static3" && arg.empty()) return std::make_unique<StaticBeamPolicy>(3);
  if (head == "sweep" && arg.empty()) return std::make_unique<SweepPolicy>();
  throw std::invalid_argument("unknown policy: " + tag);
}

}  // namespace isac
