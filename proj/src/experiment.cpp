// SPDX-License-Identifier: Apache-2.0

#include "isac/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <istream>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace isac {

namespace {

constexpr std::uint64_t kPolicyStream = 0x706f6c;

std::string join_beams(const std::vector<int>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ";" : "") + std::to_string(s[i]);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double aod_estimate(const UserStep& s, int nt) {
  return s.has_music ? s.music_aod : codeword_angle(s.report_bin, nt);
}

EpisodeRecord run_episode(IsacEnv& env, Policy& policy, int position_set, std::uint64_t episode,
                          std::uint64_t seed, std::vector<MdpSnapshot>* trace) {
  const SystemConfig& cfg = env.config();
  const int nu = cfg.n_users, nt = cfg.n_tx_antennas;
  env.reset(position_set, episode);
  policy.begin_episode(env);
  SeededRng prng(seed, stream_id({episode, kPolicyStream}));

  EpisodeRecord rec;
  rec.episode = static_cast<int>(episode);
  rec.position_set = position_set;
  rec.users.resize(nu);
  for (int u = 0; u < nu; ++u) rec.users[u].delay_hist.assign(cfg.deadlines[u], 0);
  std::vector<long long> ok_success(nu), ok_range(nu), ok_speed(nu), ok_aod(nu);
  std::vector<double> aod_err(nu);
  const double bin_width = 2.0 * std::numbers::pi / nt;
  int steps = 0;

  while (!env.done()) {
    BeamRequests req = policy.decide(env, prng);
    MdpSnapshot snap = env.step_requests(req);
    snap.action = policy.last_action();
    ++steps;
    rec.reward += snap.reward;
    for (int u = 0; u < nu; ++u) {
      const UserStep& s = snap.users[u];
      ok_success[u] += s.success;
      ok_range[u] += s.errors.range < kAccuracyThreshold;
      ok_speed[u] += s.errors.speed < kAccuracyThreshold;
      const double e =
          std::abs(std::remainder(aod_estimate(s, nt) - s.aod, 2.0 * std::numbers::pi)) / bin_width;
      aod_err[u] += e;
      ok_aod[u] += e < kAccuracyThreshold;
      if (s.traffic.delivered_wait) {
        auto& h = rec.users[u].delay_hist;
        const int w = *s.traffic.delivered_wait;
        if (w >= static_cast<int>(h.size())) h.resize(w + 1, 0);
        ++h[w];
      }
    }
    if (trace) trace->push_back(std::move(snap));
  }

  for (int u = 0; u < nu; ++u) {
    const UserBuffer& b = env.buffers().users[u];
    UserEpisodeMetrics& m = rec.users[u];
    m.delivered = b.delivered;
    m.arrived = b.arrived;
    m.overflow_drops = b.overflow_drops;
    m.expiry_drops = b.expiry_drops;
    m.throughput = b.arrived > 0 ? static_cast<double>(b.delivered) / b.arrived : 1.0;
    m.mean_latency = b.delivered > 0 ? static_cast<double>(b.delivered_wait_sum) / b.delivered : 0.0;
    m.instant_fraction =
        b.delivered > 0 ? static_cast<double>(m.delay_hist.at(0)) / b.delivered : 0.0;
    const double n = std::max(1, steps);
    m.success_rate = ok_success[u] / n;
    m.p_range = ok_range[u] / n;
    m.p_speed = ok_speed[u] / n;
    m.p_aod = ok_aod[u] / n;
    m.mean_aod_error = aod_err[u] / n;
    m.conserved = conserved(b);
  }
  return rec;
}

EvalResult run_eval(const SystemConfig& cfg, const PolicyFactory& factory, const EvalOptions& opt) {
  if (opt.position_sets.empty()) throw std::invalid_argument("run_eval: no position sets");
  EvalResult res;
  res.policy = factory()->name();
  res.episodes.resize(opt.episodes);
  if (opt.keep_trace) res.traces.resize(opt.episodes);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&] {
    try {
      auto policy = factory();
      IsacEnv env(cfg, opt.seed, policy->env_options());
      for (int e = next++; e < opt.episodes; e = next++) {
        const int set = opt.position_sets[e % opt.position_sets.size()];
        res.episodes[e] = run_episode(env, *policy, set, static_cast<std::uint64_t>(e), opt.seed,
                                      opt.keep_trace ? &res.traces[e] : nullptr);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = opt.episodes;
    }
  };
  const int workers = std::clamp(opt.workers, 1, std::max(1, opt.episodes));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return res;
}

MeanCi mean_ci(const std::vector<double>& xs) {
  MeanCi r;
  r.n = static_cast<long long>(xs.size());
  if (xs.empty()) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / xs.size();
  if (xs.size() > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - r.mean) * (x - r.mean);
    v /= (xs.size() - 1);
    r.stderr_ = std::sqrt(v / xs.size());
    r.half_width = 1.96 * r.stderr_;
  }
  return r;
}

std::vector<double> episode_rewards(const EvalResult& r) {
  std::vector<double> out;
  for (const auto& e : r.episodes) out.push_back(e.reward);
  return out;
}

std::vector<double> user_mean(const EvalResult& r,
                              const std::function<double(const UserEpisodeMetrics&)>& f) {
  std::vector<double> out;
  for (const auto& e : r.episodes) {
    double s = 0.0;
    for (const auto& u : e.users) s += f(u);
    out.push_back(s / std::max<std::size_t>(1, e.users.size()));
  }
  return out;
}

double instant_fraction(const EvalResult& r) {
  long long zero = 0, total = 0;
  for (const auto& e : r.episodes)
    for (const auto& u : e.users) {
      zero += u.delay_hist.empty() ? 0 : u.delay_hist[0];
      total += u.delivered;
    }
  return total > 0 ? static_cast<double>(zero) / total : 0.0;
}

double success_rate(const EvalResult& r) {
  const auto v = user_mean(r, [](const UserEpisodeMetrics& m) { return m.success_rate; });
  return mean_ci(v).mean;
}

void write_csv_header(std::ostream& os, const std::string& schema, const SystemConfig& cfg,
                      std::uint64_t seed, const std::vector<std::string>& extra) {
  os << "# schema=" << schema << '\n';
  os << "# config_hash=" << config_hash(cfg) << '\n';
  os << "# seed=" << seed << '\n';
  for (const auto& e : extra) os << "# " << e << '\n';
}

void write_episodes_csv(std::ostream& os, const EvalResult& r, const SystemConfig& cfg,
                        std::uint64_t seed) {
  write_csv_header(os, kEpisodeSchema, cfg, seed,
                   {"scenario=" + to_string(cfg.experiment.scenario),
                    "mean_speed_mps=" + format_double(cfg.mean_speed_mps)});
  os << "policy,episode,position_set,user,reward,throughput,mean_latency,delivered,arrived,"
        "overflow_drops,expiry_drops,instant_fraction,success_rate,p_range,p_speed,p_aod,"
        "mean_aod_error,conserved,delay_hist\n";
  for (const auto& e : r.episodes)
    for (std::size_t u = 0; u < e.users.size(); ++u) {
      const auto& m = e.users[u];
      std::string hist;
      for (std::size_t k = 0; k < m.delay_hist.size(); ++k)
        hist += (k ? ";" : "") + std::to_string(m.delay_hist[k]);
      os << r.policy << ',' << e.episode << ',' << e.position_set << ',' << u << ','
         << format_double(e.reward) << ',' << format_double(m.throughput) << ','
         << format_double(m.mean_latency) << ',' << m.delivered << ',' << m.arrived << ','
         << m.overflow_drops << ',' << m.expiry_drops << ',' << format_double(m.instant_fraction)
         << ',' << format_double(m.success_rate) << ',' << format_double(m.p_range) << ','
         << format_double(m.p_speed) << ',' << format_double(m.p_aod) << ','
         << format_double(m.mean_aod_error) << ',' << (m.conserved ? 1 : 0) << ',' << hist
         << '\n';
    }
}

void write_trace_csv(std::ostream& os, const EvalResult& r, const SystemConfig& cfg,
                     std::uint64_t seed) {
  write_csv_header(os, kTraceSchema, cfg, seed);
  os << "policy,episode,tti,user,action,beams,success,delta,occupancy,x,y,distance,aod,"
        "radial_speed,d_hat,v_hat,eps_d,eps_v,aod_hat,reward\n";
  const int nt = cfg.n_tx_antennas;
  for (std::size_t e = 0; e < r.traces.size(); ++e)
    for (const auto& s : r.traces[e])
      for (std::size_t u = 0; u < s.users.size(); ++u) {
        const UserStep& us = s.users[u];
        os << r.policy << ',' << r.episodes[e].episode << ',' << s.tti << ',' << u << ','
           << s.action << ',' << join_beams(s.allocation.beams[u]) << ',' << us.success << ','
           << us.delta << ',' << us.occupancy << ',' << format_double(us.x) << ','
           << format_double(us.y) << ',' << format_double(us.distance) << ','
           << format_double(us.aod) << ',' << format_double(us.radial_speed) << ','
           << format_double(us.estimate.range_m) << ',' << format_double(us.estimate.speed_mps)
           << ',' << format_double(us.errors.range) << ',' << format_double(us.errors.speed)
           << ',' << format_double(aod_estimate(us, nt)) << ','
           << format_double(us.reward.total()) << '\n';
      }
}

std::vector<std::pair<std::string, MeanCi>> summarize(const EvalResult& r) {
  std::vector<std::pair<std::string, MeanCi>> out;
  out.emplace_back("reward", mean_ci(episode_rewards(r)));
  out.emplace_back("throughput", mean_ci(user_mean(r, [](const auto& m) { return m.throughput; })));
  out.emplace_back("mean_latency",
                   mean_ci(user_mean(r, [](const auto& m) { return m.mean_latency; })));
  out.emplace_back("success_rate",
                   mean_ci(user_mean(r, [](const auto& m) { return m.success_rate; })));
  out.emplace_back("p_range", mean_ci(user_mean(r, [](const auto& m) { return m.p_range; })));
  out.emplace_back("p_speed", mean_ci(user_mean(r, [](const auto& m) { return m.p_speed; })));
  out.emplace_back("p_aod", mean_ci(user_mean(r, [](const auto& m) { return m.p_aod; })));
  out.emplace_back("drops", mean_ci(user_mean(r, [](const auto& m) {
                     return static_cast<double>(m.overflow_drops + m.expiry_drops);
                   })));
  MeanCi inst;
  inst.mean = instant_fraction(r);
  inst.n = static_cast<long long>(r.episodes.size());
  out.emplace_back("instant_fraction", inst);
  return out;
}

void write_summary_csv(std::ostream& os, const std::vector<EvalResult>& results,
                       const SystemConfig& cfg, std::uint64_t seed) {
  write_csv_header(os, kSummarySchema, cfg, seed,
                   {"scenario=" + to_string(cfg.experiment.scenario),
                    "mean_speed_mps=" + format_double(cfg.mean_speed_mps)});
  os << "policy,metric,mean,ci95,n\n";
  for (const auto& r : results)
    for (const auto& [metric, m] : summarize(r))
      os << r.policy << ',' << metric << ',' << format_double(m.mean) << ','
         << format_double(m.half_width) << ',' << m.n << '\n';
}

std::vector<EpisodeRow> read_episodes_csv(std::istream& is) {
  std::string line;
  std::vector<std::string> cols;
  std::map<std::string, int> idx;
  bool schema_ok = false;
  std::vector<EpisodeRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line == std::string("# schema=") + kEpisodeSchema) schema_ok = true;
      continue;
    }
    if (cols.empty()) {
      if (!schema_ok) throw std::runtime_error("episodes csv: schema mismatch");
      cols = split(line, ',');
      for (std::size_t i = 0; i < cols.size(); ++i) idx[cols[i]] = static_cast<int>(i);
      for (const char* need : {"policy", "episode", "user", "reward", "throughput",
                               "mean_latency", "delay_hist"})
        if (!idx.count(need)) throw std::runtime_error(std::string("episodes csv: missing ") + need);
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != cols.size()) throw std::runtime_error("episodes csv: ragged row");
    EpisodeRow r;
    r.policy = f[idx["policy"]];
    r.episode = std::stoi(f[idx["episode"]]);
    r.user = std::stoi(f[idx["user"]]);
    r.reward = std::stod(f[idx["reward"]]);
    r.throughput = std::stod(f[idx["throughput"]]);
    r.mean_latency = std::stod(f[idx["mean_latency"]]);
    for (const auto& h : split(f[idx["delay_hist"]], ';'))
      if (!h.empty()) r.delay_hist.push_back(std::stoll(h));
    rows.push_back(std::move(r));
  }
  if (!schema_ok) throw std::runtime_error("episodes csv: schema mismatch");
  return rows;
}

std::vector<double> cdf_on_grid(std::vector<double> values, int points) {
  std::sort(values.begin(), values.end());
  std::vector<double> out(points);
  for (int k = 0; k < points; ++k) {
    const double x = points == 1 ? 1.0 : static_cast<double>(k) / (points - 1);
    const auto it = std::upper_bound(values.begin(), values.end(), x);
    out[k] = values.empty() ? 1.0 : static_cast<double>(it - values.begin()) / values.size();
  }
  return out;
}

CalibrationResult calibrate_rate_threshold(SystemConfig cfg, std::uint64_t seed, int episodes,
                                           int workers, double lo_target, double hi_target) {
  cfg.experiment.scenario = Scenario::clean;
  cfg.mean_speed_mps = 6.0;
  CalibrationResult res;
  auto probe = [&](double r_th) {
    cfg.rate_threshold = r_th;
    EvalOptions opt;
    opt.episodes = episodes;
    opt.seed = seed;
    opt.workers = workers;
    opt.position_sets = cfg.experiment.train_sets;
    const double s =
        success_rate(run_eval(cfg, [] { return std::make_unique<GeniePolicy>(); }, opt));
    res.probes.emplace_back(r_th, s);
    return s;
  };
  // Bracket in log space: success decreases with the threshold.
  double lo = 1e3, hi = 1e9;
  double s_lo = probe(lo), s_hi = probe(hi);
  if (s_lo < lo_target || s_hi > hi_target) return res;
  for (int it = 0; it < 60; ++it) {
    const double mid = std::sqrt(lo * hi);
    const double s = probe(mid);
    res.iterations = it + 1;
    if (s >= lo_target && s <= hi_target) {
      res.ok = true;
      res.rate_threshold = mid;
      res.success = s;
      return res;
    }
    if (s > hi_target) lo = mid, s_lo = s;
    else hi = mid, s_hi = s;
  }
  return res;
}

}  // namespace isac
