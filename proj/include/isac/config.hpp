// SPDX-License-Identifier: Apache-2.0
//
// Simulation constants, unit conventions and config-file I/O.

#pragma once

#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace isac {

inline constexpr double kSpeedOfLight = 299792458.0;

/// Raised for unreadable config files and invariant violations. The message
/// always names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scenario { clean, cluttered };

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& s);

/// PPO hyperparameters, section [rl].
struct RlConfig {
  double reward_log_base = 1.0 / 3.0;
  double epsilon_floor = 1e-6;
  double gamma = 0.99;
  double clip_epsilon = 0.2;
  int rollout_steps = 2048;
  int epochs = 10;
  int minibatch_size = 256;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double learning_rate = 3e-4;
  double max_grad_norm = 0.5;
  std::int64_t total_steps = 200000;
  bool use_gae = false;
  double gae_lambda = 0.95;
  int hidden_units = 128;
  int moving_average_window = 100;
  std::int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::string action_set = "mb";      // "mb" (all six) or "1b" (keep/step only)
};

/// Evaluation and baseline parameters, section [experiment].
struct ExperimentConfig {
  Scenario scenario = Scenario::clean;
  int ttis_per_episode = 40;
  int episodes = 500;
  int tdma_x = 1;
  int workers = 1;
  std::vector<int> train_sets{0, 1, 2, 3};
  std::vector<int> test_sets{4, 5};
};

/// Every model constant. Immutable once loaded; freely shareable.
///
/// Power convention: tx_power_dbm is the per-resource-element transmit
/// power (equal to the mean time-domain power under a unitary DFT), so the
/// TTI budget is N_s*N_c*M times that value. noise_power_dbm is the
/// per-subcarrier noise variance under the same convention.
struct SystemConfig {
  // [system]
  int n_tx_antennas = 16;
  int n_rx_antennas = 16;
  double carrier_freq_hz = 28e9;
  double subcarrier_spacing_hz = 60e3;
  int n_subcarriers = 144;
  int n_symbols = 280;
  double symbol_duration_s = 18.9e-6;
  double tx_power_dbm = 7.0;
  double noise_power_dbm = -109.0;
  double rician_k_db = 10.0;
  double tti_duration_s = 0.02;
  int frames_per_tti = 3;
  double rcs_m2 = 100.0;
  double clutter_rcs_m2 = 100.0;
  double rate_threshold = 523299.11468149466;  // calibrated: Genie success 0.957
  double power_margin_db = 0.0;

  // [traffic]
  int n_users = 2;
  std::vector<double> arrival_probs{0.9, 0.7};
  std::vector<int> buffer_sizes{6, 8};
  std::vector<int> deadlines{6, 8};

  // [mobility]
  double mean_speed_mps = 6.0;
  double speed_variance = 4.0;
  std::pair<double, double> area_m{100.0, 100.0};
  std::pair<double, double> bs_position_m{20.0, 50.0};

  // [experiment] (ttis_per_episode lives in experiment)
  double aod_precision_threshold = std::numbers::pi / 16.0;

  RlConfig rl;
  ExperimentConfig experiment;

  double wavelength_m() const { return kSpeedOfLight / carrier_freq_hz; }
  double tx_power_w() const;
  double noise_power_w() const;
  /// Total energy-style budget N_s*N_c*M*P_t in the units of the
  /// N_s N_c M trace(P) <= P_tot constraint.
  double tti_power_budget_w() const;
  double rician_k_linear() const;
  int n_resource_elements() const { return n_subcarriers * n_symbols; }
  int ttis_per_episode() const { return experiment.ttis_per_episode; }
};

/// Throws ConfigError naming the first violated invariant.
void validate(const SystemConfig& cfg);

/// Reference defaults, with frames_per_tti and the precision threshold
/// derived from the other fields.
SystemConfig default_config();

/// Parses the sectioned key-value format; absent keys keep their defaults.
SystemConfig load_config(const std::string& path);
SystemConfig parse_config(const std::string& text);

/// Canonical text form; parse_config(emit_config(c)) == c field for field.
std::string emit_config(const SystemConfig& cfg);

/// FNV-1a over emit_config, printed in CSV headers.
std::string config_hash(const SystemConfig& cfg);

struct Resolutions {
  double range_m;
  double speed_mps;
};

/// Range and speed bin widths of the range-Doppler grid.
Resolutions derived_resolutions(const SystemConfig& cfg);

/// floor(tti / (N_s*T_s)), at least one frame.
int derive_frames_per_tti(const SystemConfig& cfg);

double db_to_linear(double db);
double dbm_to_watt(double dbm);

}  // namespace isac
