// SPDX-License-Identifier: Apache-2.0
//
// isac_cli: calibrate, train, eval, sweep, figdata.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "isac/config.hpp"
#include "isac/experiment.hpp"
#include "isac/policies.hpp"
#include "isac/ppo.hpp"

namespace fs = std::filesystem;
using namespace isac;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCalibration = 3;
constexpr int kExitMissing = 4;

struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string scenario;
  std::optional<double> speed;
  std::optional<int> episodes;
  std::optional<int> workers;
  std::string out = "out";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "config file");
  app->add_option("--seed", c.seed, "root seed");
  app->add_option("--scenario", c.scenario, "clean or cluttered");
  app->add_option("--speed", c.speed, "mean user speed in m/s");
  app->add_option("--episodes", c.episodes, "episodes");
  app->add_option("--workers", c.workers, "parallel environment instances");
  app->add_option("--out", c.out, "output directory");
}

SystemConfig load(const Common& c) {
  SystemConfig cfg = default_config();
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw MissingArtifact("config not found: " + c.config);
    cfg = load_config(c.config);
  }
  if (!c.scenario.empty()) cfg.experiment.scenario = parse_scenario(c.scenario);
  if (c.speed) cfg.mean_speed_mps = *c.speed;
  if (c.episodes) cfg.experiment.episodes = *c.episodes;
  if (c.workers) cfg.experiment.workers = *c.workers;
  validate(cfg);
  return cfg;
}

std::ofstream open_out(const Common& c, const std::string& name) {
  fs::create_directories(c.out);
  const fs::path p = fs::path(c.out) / name;
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

PolicyFactory policy_factory(const std::string& tag, const std::string& checkpoint,
                             const SystemConfig& cfg) {
  if (tag == "ppo" || tag == "ppo-mb" || tag == "ppo-1b") {
    if (checkpoint.empty() || !fs::exists(checkpoint))
      throw MissingArtifact("checkpoint not found: " + (checkpoint.empty() ? "(none)" : checkpoint));
    auto agent = std::make_shared<const PpoAgent>(PpoAgent::load_file(checkpoint, cfg));
    return [agent, tag] { return std::make_unique<AgentPolicy>(agent, true, tag); };
  }
  make_baseline(tag, cfg);  // validates the tag
  return [tag, cfg] { return make_baseline(tag, cfg); };
}

EvalOptions eval_options(const SystemConfig& cfg, std::uint64_t seed) {
  EvalOptions o;
  o.episodes = cfg.experiment.episodes;
  o.seed = seed;
  o.workers = cfg.experiment.workers;
  o.position_sets = cfg.experiment.test_sets;
  return o;
}

int cmd_calibrate(const Common& c, const std::string& write_config) {
  SystemConfig cfg = load(c);
  const int episodes = c.episodes.value_or(100);
  const CalibrationResult r =
      calibrate_rate_threshold(cfg, c.seed, episodes, cfg.experiment.workers);
  auto os = open_out(c, "calibration.csv");
  write_csv_header(os, "isac-calibration/1", cfg, c.seed,
                   {"episodes=" + std::to_string(episodes)});
  os << "probe,rate_threshold,success\n";
  for (std::size_t i = 0; i < r.probes.size(); ++i)
    os << i << ',' << format_double(r.probes[i].first) << ',' << format_double(r.probes[i].second)
       << '\n';
  if (!r.ok) {
    std::cerr << "calibration failed to bracket the target success rate\n";
    return kExitCalibration;
  }
  std::cout << "rate_threshold " << format_double(r.rate_threshold) << " success "
            << format_double(r.success) << '\n';
  if (!write_config.empty()) {
    cfg.rate_threshold = r.rate_threshold;
    std::ofstream cf(write_config);
    if (!cf) throw std::runtime_error("cannot write " + write_config);
    cf << emit_config(cfg);
  }
  return kExitOk;
}

int cmd_train(const Common& c, std::optional<std::int64_t> steps, const std::string& action_set,
              const std::string& resume, bool paper_scale) {
  SystemConfig cfg = load(c);
  if (!action_set.empty()) cfg.rl.action_set = action_set;
  if (paper_scale) cfg.rl.total_steps = 1200000;
  if (steps) cfg.rl.total_steps = *steps;
  validate(cfg);
  PpoAgent agent(cfg, c.seed);
  if (!resume.empty()) {
    if (!fs::exists(resume)) throw MissingArtifact("checkpoint not found: " + resume);
    agent = PpoAgent::load_file(resume, cfg);
    cfg.rl.action_set = action_mask("1b", cfg.n_users) == agent.mask() ? "1b" : "mb";
  }
  fs::create_directories(c.out);
  TrainOptions opt;
  opt.seed = c.seed;
  opt.workers = cfg.experiment.workers;
  opt.checkpoint_path = (fs::path(c.out) / "checkpoint.txt").string();
  opt.curve_path = (fs::path(c.out) / "curve.csv").string();
  opt.progress = [](const CurveRow& r) {
    std::fprintf(stderr, "step %lld  episodes %lld  mean_reward %.3f  lr %.2e\n",
                 static_cast<long long>(r.step), static_cast<long long>(r.episodes),
                 r.mean_reward, r.lr);
  };
  train(agent, cfg, opt);
  return kExitOk;
}

int cmd_eval(const Common& c, const std::vector<std::string>& policies, const std::string& ckpt,
             bool trace, const std::string& rd_dump) {
  const SystemConfig cfg = load(c);
  std::vector<EvalResult> results;
  EvalOptions opt = eval_options(cfg, c.seed);
  opt.keep_trace = trace;
  for (const auto& tag : policies) results.push_back(run_eval(cfg, policy_factory(tag, ckpt, cfg), opt));
  {
    auto os = open_out(c, "episodes.csv");
    bool first = true;
    for (const auto& r : results) {
      std::ostringstream buf;
      write_episodes_csv(buf, r, cfg, c.seed);
      std::string s = buf.str();
      if (!first) {
        // Header once, then rows of all policies.
        std::size_t pos = 0;
        while (s.compare(pos, 1, "#") == 0) pos = s.find('\n', pos) + 1;
        pos = s.find('\n', pos) + 1;
        s = s.substr(pos);
      }
      os << s;
      first = false;
    }
  }
  {
    auto os = open_out(c, "summary.csv");
    write_summary_csv(os, results, cfg, c.seed);
  }
  if (trace) {
    auto os = open_out(c, "trace.csv");
    bool first = true;
    for (const auto& r : results) {
      std::ostringstream buf;
      write_trace_csv(buf, r, cfg, c.seed);
      std::string s = buf.str();
      if (!first) {
        std::size_t pos = 0;
        while (s.compare(pos, 1, "#") == 0) pos = s.find('\n', pos) + 1;
        s = s.substr(s.find('\n', pos) + 1);
      }
      os << s;
      first = false;
    }
  }
  if (!rd_dump.empty()) {
    auto policy = policy_factory(policies.front(), ckpt, cfg)();
    EnvOptions eo = policy->env_options();
    eo.keep_maps = true;
    IsacEnv env(cfg, c.seed, eo);
    env.reset(cfg.experiment.test_sets.front(), 0);
    policy->begin_episode(env);
    SeededRng rng(c.seed, 0);
    env.step_requests(policy->decide(env, rng));
    for (int u = 0; u < cfg.n_users; ++u) {
      const UserSensing& s = env.last_sensing().users[u];
      fs::create_directories(c.out);
      const std::string path = (fs::path(c.out) / (rd_dump + "_user" + std::to_string(u) + ".csv")).string();
      write_rd_map_csv(s.peak_map, path,
                       "schema=isac-rdmap/1 config_hash=" + config_hash(cfg) + " seed=" +
                           std::to_string(c.seed) + " user=" + std::to_string(u) + " bin=" +
                           std::to_string(s.peak.n_a) + " peak_n_r=" + std::to_string(s.peak.n_r) +
                           " peak_n_v=" + std::to_string(s.peak.n_v));
    }
  }
  for (const auto& r : results) {
    std::cout << r.policy;
    for (const auto& [metric, m] : summarize(r))
      std::cout << ' ' << metric << '=' << format_double(m.mean);
    std::cout << '\n';
  }
  return kExitOk;
}

int cmd_sweep(const Common& c, const std::vector<std::string>& policies, const std::string& ckpt,
              const std::string& param, std::vector<double> values) {
  const SystemConfig base = load(c);
  if (values.empty()) {
    if (param == "speed") values = {6, 8, 10, 12, 14};
    else if (param == "arrival") values = {0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1};
    else if (param == "tdma_x") values = {1, 2, 3, 4};
  }
  if (param != "speed" && param != "arrival" && param != "tdma_x")
    throw ConfigError("sweep.param: must be speed, arrival or tdma_x");
  auto os = open_out(c, "sweep_" + param + ".csv");
  write_csv_header(os, kSweepSchema, base, c.seed,
                   {"param=" + param, "scenario=" + to_string(base.experiment.scenario)});
  os << "policy,param,value,metric,mean,ci95,n\n";
  for (double v : values) {
    SystemConfig cfg = base;
    if (param == "speed") cfg.mean_speed_mps = v;
    if (param == "arrival")
      for (std::size_t u = 0; u < cfg.arrival_probs.size(); ++u)
        cfg.arrival_probs[u] = std::min(1.0, base.arrival_probs[u] * v);
    if (param == "tdma_x") cfg.experiment.tdma_x = static_cast<int>(v);
    validate(cfg);
    for (const auto& tag : policies) {
      const EvalResult r = run_eval(cfg, policy_factory(tag, ckpt, cfg), eval_options(cfg, c.seed));
      for (const auto& [metric, m] : summarize(r))
        os << r.policy << ',' << param << ',' << format_double(v) << ',' << metric << ','
           << format_double(m.mean) << ',' << format_double(m.half_width) << ',' << m.n << '\n';
    }
  }
  return kExitOk;
}

int cmd_figdata(const Common& c, const std::vector<std::string>& inputs,
                const std::vector<std::string>& sweeps) {
  const SystemConfig cfg = load(c);
  std::map<std::string, std::vector<EpisodeRow>> by_policy;
  for (const auto& path : inputs) {
    std::ifstream is(path);
    if (!is) throw MissingArtifact("input not found: " + path);
    for (auto& r : read_episodes_csv(is)) by_policy[r.policy].push_back(std::move(r));
  }
  constexpr int kGrid = 101;
  {
    auto os = open_out(c, "throughput_cdf.csv");
    write_csv_header(os, kCdfSchema, cfg, c.seed);
    os << "policy,throughput,cdf\n";
    for (const auto& [policy, rows] : by_policy) {
      std::vector<double> t;
      for (const auto& r : rows) t.push_back(r.throughput);
      const auto cdf = cdf_on_grid(t, kGrid);
      for (int k = 0; k < kGrid; ++k)
        os << policy << ',' << format_double(static_cast<double>(k) / (kGrid - 1)) << ','
           << format_double(cdf[k]) << '\n';
    }
  }
  {
    const int max_d = *std::max_element(cfg.deadlines.begin(), cfg.deadlines.end());
    auto os = open_out(c, "latency_hist.csv");
    write_csv_header(os, kHistSchema, cfg, c.seed);
    os << "policy,user,latency_tti,count,fraction\n";
    for (const auto& [policy, rows] : by_policy) {
      std::map<int, std::vector<long long>> hist;
      for (const auto& r : rows) {
        auto& h = hist[r.user];
        h.resize(max_d + 1, 0);
        for (std::size_t k = 0; k < r.delay_hist.size() && k <= static_cast<std::size_t>(max_d); ++k)
          h[k] += r.delay_hist[k];
      }
      for (const auto& [user, h] : hist) {
        long long total = 0;
        for (long long x : h) total += x;
        for (int k = 0; k <= max_d; ++k)
          os << policy << ',' << user << ',' << k << ',' << h[k] << ','
             << format_double(total > 0 ? static_cast<double>(h[k]) / total : 0.0) << '\n';
      }
    }
  }
  for (const auto& path : sweeps) {
    std::ifstream is(path);
    if (!is) throw MissingArtifact("input not found: " + path);
    std::string line, param;
    std::vector<std::string> rows;
    bool schema_ok = false;
    while (std::getline(is, line)) {
      if (line == std::string("# schema=") + kSweepSchema) schema_ok = true;
      if (line.rfind("# param=", 0) == 0) param = line.substr(8);
      if (!line.empty() && line[0] != '#') rows.push_back(line);
    }
    if (!schema_ok || rows.empty()) throw std::runtime_error("sweep csv: schema mismatch in " + path);
    const std::string name = param == "speed"     ? "estimation_vs_speed.csv"
                             : param == "arrival" ? "latency_vs_arrival.csv"
                                                  : "sweep_" + param + ".csv";
    const std::set<std::string> keep = param == "speed"
                                           ? std::set<std::string>{"p_range", "p_speed", "p_aod"}
                                           : std::set<std::string>{"mean_latency", "throughput"};
    auto os = open_out(c, name);
    write_csv_header(os, kSweepSchema, cfg, c.seed, {"param=" + param});
    os << rows.front() << '\n';
    for (std::size_t i = 1; i < rows.size(); ++i) {
      std::vector<std::string> f;
      std::stringstream ss(rows[i]);
      std::string x;
      while (std::getline(ss, x, ',')) f.push_back(x);
      if (f.size() > 3 && keep.count(f[3])) os << rows[i] << '\n';
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ISAC beam-management simulator"};
  app.require_subcommand(1);
  Common common;

  auto* cal = app.add_subcommand("calibrate", "calibrate the rate threshold");
  add_common(cal, common);
  std::string write_config;
  cal->add_option("--write-config", write_config, "write the config with the calibrated value");

  auto* tr = app.add_subcommand("train", "train the PPO agent");
  add_common(tr, common);
  std::optional<std::int64_t> steps;
  std::string action_set, resume;
  bool paper_scale = false;
  tr->add_option("--steps", steps, "total training steps");
  tr->add_option("--action-set", action_set, "mb or 1b")->check(CLI::IsMember({"mb", "1b"}));
  tr->add_option("--resume", resume, "checkpoint to continue from");
  tr->add_flag("--paper-scale", paper_scale, "1.2e6 training steps");

  auto* ev = app.add_subcommand("eval", "evaluate policies on the test positions");
  add_common(ev, common);
  std::vector<std::string> policies;
  std::string checkpoint, rd_dump;
  bool trace = false;
  ev->add_option("--policy", policies, "policy tags")->required();
  ev->add_option("--checkpoint", checkpoint, "PPO checkpoint");
  ev->add_flag("--trace", trace, "write per-TTI trace.csv");
  ev->add_option("--rd-dump", rd_dump, "write range-Doppler maps of the first TTI");

  auto* sw = app.add_subcommand("sweep", "evaluate over a parameter grid");
  add_common(sw, common);
  std::string param = "speed";
  std::vector<double> values;
  sw->add_option("--policy", policies, "policy tags")->required();
  sw->add_option("--checkpoint", checkpoint, "PPO checkpoint");
  sw->add_option("--param", param, "speed, arrival or tdma_x");
  sw->add_option("--values", values, "grid values");

  auto* fd = app.add_subcommand("figdata", "figure CSV bundle from eval and sweep output");
  add_common(fd, common);
  std::vector<std::string> inputs, sweeps;
  fd->add_option("--in", inputs, "episodes.csv files")->required();
  fd->add_option("--sweep", sweeps, "sweep csv files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*cal) return cmd_calibrate(common, write_config);
    if (*tr) return cmd_train(common, steps, action_set, resume, paper_scale);
    if (*ev) return cmd_eval(common, policies, checkpoint, trace, rd_dump);
    if (*sw) return cmd_sweep(common, policies, checkpoint, param, values);
    if (*fd) return cmd_figdata(common, inputs, sweeps);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MissingArtifact& e) {
    std::cerr << e.what() << '\n';
    return kExitMissing;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
