// SPDX-License-Identifier: Apache-2.0

#include "isac/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace isac {

namespace {

enum StreamTag : std::uint64_t {
  kInit = 1,
  kMove,
  kChannel,
  kPhase,
  kSymbols,
  kNoise,
  kBinPower,
  kTraffic,
};

std::vector<int> normalized_set(std::vector<int> v, int n_antennas) {
  for (int& b : v) b = std::clamp(b, 1, n_antennas);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Matches estimated angles to users by minimum total wrapped distance.
std::vector<double> associate(const std::vector<double>& est, const std::vector<double>& truth) {
  const int n = static_cast<int>(truth.size());
  if (static_cast<int>(est.size()) < n || n == 0) return {};
  std::vector<int> perm(est.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> arg;
  do {
    double cost = 0.0;
    for (int u = 0; u < n; ++u)
      cost += std::abs(std::remainder(est[perm[u]] - truth[u], 2.0 * std::numbers::pi));
    if (cost < best) best = cost, arg.assign(perm.begin(), perm.begin() + n);
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<double> out(n);
  for (int u = 0; u < n; ++u) out[u] = est[arg[u]];
  return out;
}

}  // namespace

int action_count(int n_users) {
  int n = 1;
  for (int u = 0; u < n_users; ++u) n *= kActionsPerUser;
  return n;
}

std::vector<int> action_digits(int action, int n_users) {
  if (action < 0 || action >= action_count(n_users))
    throw std::out_of_range("action out of range");
  std::vector<int> d(n_users);
  for (int u = 0; u < n_users; ++u) {
    d[u] = action % kActionsPerUser + 1;
    action /= kActionsPerUser;
  }
  return d;
}

int action_from_digits(const std::vector<int>& digits) {
  int a = 0;
  for (int u = static_cast<int>(digits.size()) - 1; u >= 0; --u) {
    if (digits[u] < 1 || digits[u] > kActionsPerUser) throw std::out_of_range("action digit");
    a = a * kActionsPerUser + (digits[u] - 1);
  }
  return a;
}

std::vector<int> apply_action_digit(int digit, const std::vector<int>& c,
                                    const std::vector<double>& bin_power, int nt) {
  if (c.empty()) throw std::invalid_argument("apply_action_digit: empty beam set");
  const int lo = *std::min_element(c.begin(), c.end());
  const int hi = *std::max_element(c.begin(), c.end());
  switch (digit) {
    case 1: return normalized_set(c, nt);
    case 2: {
      int best = c.front();
      for (int b : c)
        if (bin_power.at(b - 1) > bin_power.at(best - 1) ||
            (bin_power.at(b - 1) == bin_power.at(best - 1) && b < best))
          best = b;
      return {best};
    }
    case 3: return normalized_set({lo - 2, lo - 1, lo}, nt);
    case 4: return normalized_set({lo - 1}, nt);
    case 5: return normalized_set({hi, hi + 1, hi + 2}, nt);
    case 6: return normalized_set({hi + 1}, nt);
    default: throw std::out_of_range("action digit must be in 1..6");
  }
}

std::vector<std::vector<int>> decode_action(int action, const BeamAllocation& prev,
                                            const std::vector<double>& bin_power, int nt) {
  const auto digits = action_digits(action, prev.n_users());
  std::vector<std::vector<int>> req(prev.n_users());
  for (int u = 0; u < prev.n_users(); ++u)
    req[u] = apply_action_digit(digits[u], prev.beams[u], bin_power, nt);
  return req;
}

BeamAllocation resolve_collisions(const std::vector<std::vector<int>>& requests,
                                  const BufferState& buffers, int nt) {
  const int nu = static_cast<int>(requests.size());
  std::vector<int> order(nu);
  std::iota(order.begin(), order.end(), 0);
  auto q = [&](int u) { return u < buffers.n_users() ? buffers.users[u].occupancy() : 0; };
  auto d = [&](int u) { return u < buffers.n_users() ? buffers.users[u].head_wait() : 0; };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (q(a) != q(b)) return q(a) > q(b);
    if (d(a) != d(b)) return d(a) > d(b);
    return a < b;
  });

  std::vector<bool> taken(nt + 1, false);
  BeamAllocation out;
  out.beams.resize(nu);
  for (int u : order) {
    const std::vector<int> want = normalized_set(requests[u], nt);
    if (want.empty()) throw std::invalid_argument("resolve_collisions: empty request");
    std::vector<bool> own(nt + 1, false);
    for (int b : want) own[b] = true;
    std::vector<int> got;
    for (int b : want) {
      if (!taken[b]) {
        got.push_back(b);
        taken[b] = true;
        continue;
      }
      int pick = 0;
      for (int dist = 1; dist < nt && pick == 0; ++dist) {
        for (int cand : {b - dist, b + dist}) {
          if (cand >= 1 && cand <= nt && !taken[cand] && !own[cand]) {
            pick = cand;
            break;
          }
        }
      }
      if (pick == 0) throw std::runtime_error("resolve_collisions: codebook exhausted");
      got.push_back(pick);
      taken[pick] = true;
    }
    std::sort(got.begin(), got.end());
    out.beams[u] = got;
  }
  return out;
}

double log_error_term(double eps, const RlConfig& rl) {
  return std::log(std::max(eps, rl.epsilon_floor)) / std::log(rl.reward_log_base);
}

IsacEnv::IsacEnv(SystemConfig cfg, std::uint64_t seed, EnvOptions opts)
    : cfg_(std::move(cfg)), seed_(seed), opts_(opts), codebook_(build_codebook(cfg_.n_tx_antennas)) {
  validate(cfg_);
}

SeededRng IsacEnv::stream(std::uint64_t tag, std::uint64_t a, std::uint64_t b) const {
  return SeededRng(seed_, stream_id({episode_, tag, a, b}));
}

std::vector<double> IsacEnv::reset(int position_set, std::uint64_t episode) {
  episode_ = episode;
  tti_ = 0;
  SeededRng init = stream(kInit);
  world_ = init_world(cfg_, cfg_.experiment.scenario, init, position_set);
  buffers_ = BufferState::from_config(cfg_);

  const int nu = cfg_.n_users, nt = cfg_.n_tx_antennas;
  const bool single = cfg_.rl.action_set == "1b";
  alloc_.beams.assign(nu, {});
  for (int u = 0; u < nu; ++u) {
    const int centre = (2 * u + 1) * nt / (2 * nu) + 1;
    alloc_.beams[u] = single ? std::vector<int>{centre}
                             : normalized_set({centre - 1, centre, centre + 1}, nt);
  }
  powers_ = even_split(nu, cfg_.n_subcarriers, subcarrier_budget(cfg_));
  have_estimates_ = false;
  beliefs_.assign(nu, LinkBelief{});
  sensing_ = run_sensing(alloc_, powers_);
  have_estimates_ = true;
  return observation();
}

std::vector<LinkBelief> IsacEnv::next_beliefs() const {
  const int nu = cfg_.n_users, nt = cfg_.n_tx_antennas;
  const double half_bin = std::numbers::pi / nt;
  const double dd = derived_resolutions(cfg_).range_m;
  std::vector<LinkBelief> out(nu);
  for (int u = 0; u < nu; ++u) {
    LinkBelief& b = out[u];
    const UserSensing& s = sensing_.users.at(u);
    b.known = true;
    b.distance = std::max(0.0, s.estimate.range_m) + 0.5 * dd;
    switch (opts_.belief) {
      case BeliefSource::genie:
        b.aod_center = user_geometry(world_, u).aod;
        b.aod_half_width = 0.0;
        break;
      case BeliefSource::music:
        if (u < static_cast<int>(music_by_user_.size())) {
          b.aod_center = music_by_user_[u];
          b.aod_half_width = 0.0;
          break;
        }
        [[fallthrough]];
      case BeliefSource::echo:
        b.aod_center = codeword_angle(s.report_bin, nt);
        b.aod_half_width = half_bin;
        break;
    }
  }
  return out;
}

PowerAllocation IsacEnv::plan_power(const BeamAllocation& alloc,
                                    const std::vector<CVec>& precoders) const {
  const double budget = subcarrier_budget(cfg_);
  if (!have_estimates_) return even_split(alloc.n_users(), cfg_.n_subcarriers, budget);
  PowerProblem pr;
  pr.gain = predict_gains(beliefs_, precoders, cfg_, scenario() == Scenario::cluttered);
  pr.target.assign(alloc.n_users(), sinr_target(cfg_));
  pr.noise = cfg_.noise_power_w();
  pr.budget = budget;
  return allocate(std::vector<PowerProblem>(cfg_.n_subcarriers, pr));
}

TtiSensing IsacEnv::run_sensing(const BeamAllocation& alloc, const PowerAllocation& powers) {
  SeededRng ph = stream(kPhase, tti_);
  std::vector<double> phases(cfg_.n_users);
  for (double& p : phases) p = ph.uniform(0.0, 2.0 * std::numbers::pi);
  SeededRng sym = stream(kSymbols, tti_);
  const TxFrame tx = make_tx_frame(codebook_, alloc, powers, cfg_.n_symbols, sym);
  const EchoFrame echo(cfg_, codebook_, scene_scatterers(world_, cfg_, phases), tx,
                       cfg_.noise_power_w(), stream(kNoise, tti_));
  TtiSensing out =
      sense_frame(cfg_, echo, tx, alloc, stream(kBinPower, tti_), opts_.run_music, opts_.keep_maps);
  music_by_user_.clear();
  if (out.has_music) {
    std::vector<double> truth(cfg_.n_users);
    for (int u = 0; u < cfg_.n_users; ++u) truth[u] = user_geometry(world_, u).aod;
    music_by_user_ = associate(out.music.aods, truth);
  }
  return out;
}

std::vector<double> IsacEnv::observation() const {
  const int nt = cfg_.n_tx_antennas, nu = cfg_.n_users;
  std::vector<double> obs;
  obs.reserve(observation_size());
  for (int n = 0; n < nt; ++n) obs.push_back(sensing_.bin_power.at(n));
  for (int owner : alloc_.owner_map(nt)) obs.push_back(owner);
  for (int u = 0; u < nu; ++u) obs.push_back(buffers_.users[u].head_wait());
  for (int u = 0; u < nu; ++u) obs.push_back(buffers_.users[u].occupancy());
  return obs;
}

MdpSnapshot IsacEnv::step(int action) {
  auto req = decode_action(action, alloc_, sensing_.bin_power, cfg_.n_tx_antennas);
  MdpSnapshot s = step_requests(req);
  s.action = action;
  return s;
}

MdpSnapshot IsacEnv::step_requests(const std::vector<std::vector<int>>& requests) {
  if (done()) throw std::logic_error("step called on a finished episode");
  if (static_cast<int>(requests.size()) != cfg_.n_users)
    throw std::invalid_argument("step_requests: one request per user required");
  ++tti_;
  const int nu = cfg_.n_users;
  MdpSnapshot snap;
  snap.tti = tti_;
  snap.requested = requests;
  snap.allocation = resolve_collisions(requests, buffers_, cfg_.n_tx_antennas);
  const BeamAllocation& alloc = snap.allocation;

  std::vector<CVec> precoders;
  for (const auto& set : alloc.beams) precoders.push_back(user_precoder(codebook_, set));
  beliefs_ = next_beliefs();
  const PowerAllocation powers = plan_power(alloc, precoders);
  snap.power_feasible = std::all_of(powers.feasible.begin(), powers.feasible.end(),
                                    [](bool f) { return f; });

  const bool pure_los = scenario() == Scenario::clean;
  std::vector<std::vector<double>> frame_rates(nu);
  for (int m = 0; m < cfg_.frames_per_tti; ++m) {
    SeededRng cr = stream(kChannel, tti_, m);
    const ChannelRealization ch = draw_channel(world_, cfg_, pure_los, cr);
    const auto r = rates(ch, precoders, powers, cfg_.noise_power_w());
    for (int u = 0; u < nu; ++u) frame_rates[u].push_back(r[u]);
  }
  std::vector<bool> success(nu);
  snap.users.resize(nu);
  for (int u = 0; u < nu; ++u) {
    success[u] = transmission_success(frame_rates[u], cfg_.rate_threshold);
    snap.users[u].success = success[u];
    for (double r : frame_rates[u]) snap.users[u].rate += r;
  }

  TtiSensing sensing = run_sensing(alloc, powers);

  SeededRng tr = stream(kTraffic, tti_);
  const auto events = step_tti(buffers_, success, tr);

  snap.reward = 0.0;
  for (int u = 0; u < nu; ++u) {
    UserStep& us = snap.users[u];
    const Geometry g = user_geometry(world_, u);
    us.x = world_.users[u].pos.x;
    us.y = world_.users[u].pos.y;
    us.distance = g.distance;
    us.radial_speed = g.radial_speed;
    us.aod = g.aod;
    us.traffic = events[u];
    us.delta = buffers_.users[u].head_wait();
    us.occupancy = buffers_.users[u].occupancy();
    us.estimate = sensing.users[u].estimate;
    us.errors = normalized_errors(g.distance, g.radial_speed, us.estimate.range_m,
                                  us.estimate.speed_mps, cfg_);
    us.echo_sinr = sensing.users[u].echo_sinr;
    us.report_bin = sensing.users[u].report_bin;
    if (u < static_cast<int>(music_by_user_.size())) {
      us.has_music = true;
      us.music_aod = music_by_user_[u];
    }
    RewardTerms& rt = us.reward;
    rt.latency = cfg_.deadlines[u] - us.delta;
    rt.overflow = events[u].overflow ? 1.0 : 0.0;
    rt.expiry = events[u].expired > 0 ? 1.0 : 0.0;
    rt.log_range = log_error_term(us.errors.range, cfg_.rl);
    rt.log_speed = log_error_term(us.errors.speed, cfg_.rl);
    snap.reward += rt.total();
  }

  SeededRng mv = stream(kMove, tti_);
  advance(world_, cfg_, mv, cfg_.tti_duration_s);

  alloc_ = alloc;
  powers_ = powers;
  sensing_ = std::move(sensing);
  snap.observation = observation();
  snap.done = done();
  return snap;
}

}  // namespace isac
