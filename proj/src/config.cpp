// SPDX-License-Identifier: Apache-2.0

#include "isac/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace isac {

namespace pt = boost::property_tree;

std::string to_string(Scenario s) { return s == Scenario::clean ? "clean" : "cluttered"; }

Scenario parse_scenario(const std::string& s) {
  if (s == "clean") return Scenario::clean;
  if (s == "cluttered") return Scenario::cluttered;
  throw ConfigError("scenario: expected 'clean' or 'cluttered', got '" + s + "'");
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double dbm_to_watt(double dbm) { return 1e-3 * db_to_linear(dbm); }

double SystemConfig::tx_power_w() const { return dbm_to_watt(tx_power_dbm); }
double SystemConfig::noise_power_w() const { return dbm_to_watt(noise_power_dbm); }
double SystemConfig::tti_power_budget_w() const {
  return static_cast<double>(n_symbols) * n_subcarriers * frames_per_tti * tx_power_w();
}
double SystemConfig::rician_k_linear() const { return db_to_linear(rician_k_db); }

Resolutions derived_resolutions(const SystemConfig& cfg) {
  return {kSpeedOfLight / (2.0 * cfg.n_subcarriers * cfg.subcarrier_spacing_hz),
          kSpeedOfLight /
              (2.0 * cfg.carrier_freq_hz * cfg.n_symbols * cfg.symbol_duration_s)};
}

int derive_frames_per_tti(const SystemConfig& cfg) {
  const double frame_s = cfg.n_symbols * cfg.symbol_duration_s;
  return std::max(1, static_cast<int>(std::floor(cfg.tti_duration_s / frame_s + 1e-12)));
}

SystemConfig default_config() {
  SystemConfig cfg;
  cfg.frames_per_tti = derive_frames_per_tti(cfg);
  cfg.aod_precision_threshold = std::numbers::pi / cfg.n_tx_antennas;
  return cfg;
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError(field + ": " + what);
}

template <typename T>
void require_size(const std::vector<T>& v, int n, const std::string& field) {
  if (static_cast<int>(v.size()) != n)
    fail(field, "expected " + std::to_string(n) + " entries (one per user), got " +
                    std::to_string(v.size()));
}

}  // namespace

void validate(const SystemConfig& c) {
  if (c.n_tx_antennas < 1) fail("n_tx_antennas", "must be >= 1");
  if (c.n_rx_antennas < 1) fail("n_rx_antennas", "must be >= 1");
  if (c.n_rx_antennas != c.n_tx_antennas)
    fail("n_rx_antennas", "must equal n_tx_antennas (transmit codewords are reused on receive)");
  if (c.n_users < 1) fail("n_users", "must be >= 1");
  if (c.n_users > c.n_tx_antennas) fail("n_users", "U exceeds N_T");
  if (3 * c.n_users > c.n_tx_antennas)
    fail("n_users", "3*U exceeds N_T; collision resolution could exhaust the codebook");
  if (c.n_subcarriers < 2) fail("n_subcarriers", "must be >= 2");
  if (c.n_symbols < 2) fail("n_symbols", "must be >= 2");
  if (!(c.carrier_freq_hz > 0)) fail("carrier_freq_hz", "must be > 0");
  if (!(c.subcarrier_spacing_hz > 0)) fail("subcarrier_spacing_hz", "must be > 0");
  if (!(c.symbol_duration_s > 1.0 / c.subcarrier_spacing_hz))
    fail("symbol_duration_s", "must exceed 1/subcarrier_spacing_hz (CP length positive)");
  if (!(c.tti_duration_s > 0)) fail("tti_duration_s", "must be > 0");
  if (c.frames_per_tti < 1) fail("frames_per_tti", "must be >= 1");
  if (!(c.rcs_m2 > 0)) fail("rcs_m2", "must be > 0");
  if (!(c.clutter_rcs_m2 >= 0)) fail("clutter_rcs_m2", "must be >= 0");
  if (!(c.rate_threshold > 0)) fail("rate_threshold", "must be > 0");
  require_size(c.arrival_probs, c.n_users, "arrival_probs");
  require_size(c.buffer_sizes, c.n_users, "buffer_sizes");
  require_size(c.deadlines, c.n_users, "deadlines");
  for (double p : c.arrival_probs)
    if (!(p > 0.0 && p <= 1.0)) fail("arrival_probs", "each entry must lie in (0,1]");
  for (int b : c.buffer_sizes)
    if (b < 1) fail("buffer_sizes", "each entry must be >= 1");
  for (int d : c.deadlines)
    if (d < 1) fail("deadlines", "each entry must be >= 1");
  if (!(c.mean_speed_mps >= 0)) fail("mean_speed_mps", "must be >= 0");
  if (!(c.speed_variance >= 0)) fail("speed_variance", "must be >= 0");
  if (!(c.area_m.first > 0 && c.area_m.second > 0)) fail("area_m", "must be positive");
  if (c.bs_position_m.first < 0 || c.bs_position_m.first > c.area_m.first ||
      c.bs_position_m.second < 0 || c.bs_position_m.second > c.area_m.second)
    fail("bs_position_m", "must lie inside area_m");
  if (!(c.aod_precision_threshold > 0)) fail("aod_precision_threshold", "must be > 0");

  const RlConfig& r = c.rl;
  if (!(r.reward_log_base > 0 && r.reward_log_base != 1.0))
    fail("reward_log_base", "must be positive and != 1");
  if (!(r.epsilon_floor > 0)) fail("epsilon_floor", "must be > 0");
  if (!(r.clip_epsilon > 0 && r.clip_epsilon < 1)) fail("clip_epsilon", "must lie in (0,1)");
  if (!(r.gamma >= 0 && r.gamma <= 1)) fail("gamma", "must lie in [0,1]");
  if (r.rollout_steps < 1) fail("rollout_steps", "must be >= 1");
  if (r.epochs < 1) fail("epochs", "must be >= 1");
  if (r.minibatch_size < 1) fail("minibatch_size", "must be >= 1");
  if (!(r.learning_rate > 0)) fail("learning_rate", "must be > 0");
  if (r.total_steps < 0) fail("total_steps", "must be >= 0");
  if (r.hidden_units < 1) fail("hidden_units", "must be >= 1");
  if (r.moving_average_window < 1) fail("moving_average_window", "must be >= 1");
  if (r.action_set != "mb" && r.action_set != "1b") fail("action_set", "must be 'mb' or '1b'");

  const ExperimentConfig& e = c.experiment;
  if (e.ttis_per_episode < 1) fail("ttis_per_episode", "must be >= 1");
  if (e.episodes < 1) fail("episodes", "must be >= 1");
  if (e.tdma_x < 0) fail("tdma_x", "must be >= 0");
  if (e.workers < 1) fail("workers", "must be >= 1");
  if (e.train_sets.empty()) fail("train_sets", "must not be empty");
  if (e.test_sets.empty()) fail("test_sets", "must not be empty");
  for (int a : e.train_sets)
    for (int b : e.test_sets)
      if (a == b) fail("test_sets", "must be disjoint from train_sets");
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    if constexpr (std::is_floating_point_v<T>)
      os << fmt_double(v[i]);
    else
      os << v[i];
  }
  return os.str();
}

double parse_double(const std::string& field, const std::string& s) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) fail(field, "trailing characters in '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    fail(field, "not a number: '" + s + "'");
  }
}

std::int64_t parse_int(const std::string& field, const std::string& s) {
  double v = parse_double(field, s);
  if (v != std::floor(v) || std::abs(v) > 9.0e15) fail(field, "not an integer: '" + s + "'");
  return static_cast<std::int64_t>(v);
}

bool parse_bool(const std::string& field, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  fail(field, "not a boolean: '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    auto b = item.find_first_not_of(" \t");
    auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string{} : item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& field, const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(parse_double(field, item));
  return out;
}

std::vector<int> parse_ints(const std::string& field, const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) out.push_back(static_cast<int>(parse_int(field, item)));
  return out;
}

std::pair<double, double> parse_pair(const std::string& field, const std::string& s) {
  auto v = parse_doubles(field, s);
  if (v.size() != 2) fail(field, "expected two comma-separated values");
  return {v[0], v[1]};
}

// One binding per config key: how to read it, how to print it.
struct Binding {
  std::function<void(SystemConfig&, const std::string&)> read;
  std::function<std::string(const SystemConfig&)> write;
};

using BindingTable = std::vector<std::pair<std::string, std::pair<std::string, Binding>>>;

#define ISAC_DBL(path, expr)                                                             \
  {path, {#expr, Binding{[](SystemConfig& c, const std::string& s) { c.expr = parse_double(path, s); }, \
                         [](const SystemConfig& c) { return fmt_double(c.expr); }}}}
#define ISAC_INT(path, expr)                                                             \
  {path, {#expr, Binding{[](SystemConfig& c, const std::string& s) {                     \
                           c.expr = static_cast<decltype(c.expr)>(parse_int(path, s));    \
                         },                                                              \
                         [](const SystemConfig& c) { return std::to_string(c.expr); }}}}

const BindingTable& bindings() {
  static const BindingTable table = {
      ISAC_INT("system.n_tx_antennas", n_tx_antennas),
      ISAC_INT("system.n_rx_antennas", n_rx_antennas),
      ISAC_DBL("system.carrier_freq_hz", carrier_freq_hz),
      ISAC_DBL("system.subcarrier_spacing_hz", subcarrier_spacing_hz),
      ISAC_INT("system.n_subcarriers", n_subcarriers),
      ISAC_INT("system.n_symbols", n_symbols),
      ISAC_DBL("system.symbol_duration_s", symbol_duration_s),
      ISAC_DBL("system.tx_power_dbm", tx_power_dbm),
      ISAC_DBL("system.noise_power_dbm", noise_power_dbm),
      ISAC_DBL("system.rician_k_db", rician_k_db),
      ISAC_DBL("system.tti_duration_s", tti_duration_s),
      ISAC_INT("system.frames_per_tti", frames_per_tti),
      ISAC_DBL("system.rcs_m2", rcs_m2),
      ISAC_DBL("system.clutter_rcs_m2", clutter_rcs_m2),
      ISAC_DBL("system.rate_threshold", rate_threshold),
      ISAC_DBL("system.power_margin_db", power_margin_db),

      ISAC_INT("traffic.n_users", n_users),
      {"traffic.arrival_probs",
       {"arrival_probs",
        Binding{[](SystemConfig& c, const std::string& s) {
                  c.arrival_probs = parse_doubles("arrival_probs", s);
                },
                [](const SystemConfig& c) { return join(c.arrival_probs); }}}},
      {"traffic.buffer_sizes",
       {"buffer_sizes",
        Binding{[](SystemConfig& c, const std::string& s) {
                  c.buffer_sizes = parse_ints("buffer_sizes", s);
                },
                [](const SystemConfig& c) { return join(c.buffer_sizes); }}}},
      {"traffic.deadlines",
       {"deadlines", Binding{[](SystemConfig& c, const std::string& s) {
                               c.deadlines = parse_ints("deadlines", s);
                             },
                             [](const SystemConfig& c) { return join(c.deadlines); }}}},

      ISAC_DBL("mobility.mean_speed_mps", mean_speed_mps),
      ISAC_DBL("mobility.speed_variance", speed_variance),
      {"mobility.area_m",
       {"area_m", Binding{[](SystemConfig& c, const std::string& s) {
                            c.area_m = parse_pair("area_m", s);
                          },
                          [](const SystemConfig& c) {
                            return fmt_double(c.area_m.first) + "," + fmt_double(c.area_m.second);
                          }}}},
      {"mobility.bs_position_m",
       {"bs_position_m",
        Binding{[](SystemConfig& c, const std::string& s) {
                  c.bs_position_m = parse_pair("bs_position_m", s);
                },
                [](const SystemConfig& c) {
                  return fmt_double(c.bs_position_m.first) + "," +
                         fmt_double(c.bs_position_m.second);
                }}}},

      ISAC_DBL("rl.reward_log_base", rl.reward_log_base),
      ISAC_DBL("rl.epsilon_floor", rl.epsilon_floor),
      ISAC_DBL("rl.gamma", rl.gamma),
      ISAC_DBL("rl.clip_epsilon", rl.clip_epsilon),
      ISAC_INT("rl.rollout_steps", rl.rollout_steps),
      ISAC_INT("rl.epochs", rl.epochs),
      ISAC_INT("rl.minibatch_size", rl.minibatch_size),
      ISAC_DBL("rl.entropy_coef", rl.entropy_coef),
      ISAC_DBL("rl.value_coef", rl.value_coef),
      ISAC_DBL("rl.learning_rate", rl.learning_rate),
      ISAC_DBL("rl.max_grad_norm", rl.max_grad_norm),
      ISAC_INT("rl.total_steps", rl.total_steps),
      {"rl.use_gae",
       {"use_gae", Binding{[](SystemConfig& c, const std::string& s) {
                             c.rl.use_gae = parse_bool("use_gae", s);
                           },
                           [](const SystemConfig& c) {
                             return std::string(c.rl.use_gae ? "true" : "false");
                           }}}},
      ISAC_DBL("rl.gae_lambda", rl.gae_lambda),
      ISAC_INT("rl.hidden_units", rl.hidden_units),
      ISAC_INT("rl.moving_average_window", rl.moving_average_window),
      ISAC_INT("rl.checkpoint_every", rl.checkpoint_every),
      {"rl.action_set",
       {"action_set", Binding{[](SystemConfig& c, const std::string& s) { c.rl.action_set = s; },
                              [](const SystemConfig& c) { return c.rl.action_set; }}}},

      {"experiment.scenario",
       {"scenario", Binding{[](SystemConfig& c, const std::string& s) {
                              c.experiment.scenario = parse_scenario(s);
                            },
                            [](const SystemConfig& c) { return to_string(c.experiment.scenario); }}}},
      ISAC_INT("experiment.ttis_per_episode", experiment.ttis_per_episode),
      ISAC_INT("experiment.episodes", experiment.episodes),
      ISAC_INT("experiment.tdma_x", experiment.tdma_x),
      ISAC_INT("experiment.workers", experiment.workers),
      ISAC_DBL("experiment.aod_precision_threshold", aod_precision_threshold),
      {"experiment.train_sets",
       {"train_sets", Binding{[](SystemConfig& c, const std::string& s) {
                                c.experiment.train_sets = parse_ints("train_sets", s);
                              },
                              [](const SystemConfig& c) { return join(c.experiment.train_sets); }}}},
      {"experiment.test_sets",
       {"test_sets", Binding{[](SystemConfig& c, const std::string& s) {
                               c.experiment.test_sets = parse_ints("test_sets", s);
                             },
                             [](const SystemConfig& c) { return join(c.experiment.test_sets); }}}},
  };
  return table;
}

#undef ISAC_DBL
#undef ISAC_INT

}  // namespace

SystemConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("parse failure: ") + e.what());
  }

  std::map<std::string, const Binding*> by_path;
  for (const auto& [path, entry] : bindings()) by_path[path] = &entry.second;

  SystemConfig cfg = default_config();
  bool frames_given = false;
  bool threshold_given = false;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("parse failure: key '" + section + "' outside of a section");
    for (const auto& [key, value] : body) {
      const std::string path = section + "." + key;
      auto it = by_path.find(path);
      if (it == by_path.end()) throw ConfigError(path + ": unknown key");
      it->second->read(cfg, value.data());
      frames_given |= path == "system.frames_per_tti";
      threshold_given |= path == "experiment.aod_precision_threshold";
    }
  }
  if (!frames_given) cfg.frames_per_tti = derive_frames_per_tti(cfg);
  if (!threshold_given) cfg.aod_precision_threshold = std::numbers::pi / cfg.n_tx_antennas;
  validate(cfg);
  return cfg;
}

SystemConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const SystemConfig& cfg) {
  std::ostringstream os;
  std::string current;
  for (const auto& [path, entry] : bindings()) {
    const auto dot = path.find('.');
    const std::string section = path.substr(0, dot);
    if (section != current) {
      if (!current.empty()) os << '\n';
      os << '[' << section << "]\n";
      current = section;
    }
    os << path.substr(dot + 1) << " = " << entry.second.write(cfg) << '\n';
  }
  return os.str();
}

std::string config_hash(const SystemConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : emit_config(cfg)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace isac
