// SPDX-License-Identifier: Apache-2.0
//
// Per-TTI MDP: observation, action decoding, collision resolution, PHY,
// sensing, traffic and reward.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "isac/config.hpp"
#include "isac/phy.hpp"
#include "isac/power.hpp"
#include "isac/rng.hpp"
#include "isac/sensing.hpp"
#include "isac/traffic.hpp"
#include "isac/world.hpp"

namespace isac {

inline constexpr int kActionsPerUser = 6;

int action_count(int n_users);

/// Per-user digits in 1..6, user 0 least significant.
std::vector<int> action_digits(int action, int n_users);
int action_from_digits(const std::vector<int>& digits);

/// Applies one per-user action digit to the user's current set.
std::vector<int> apply_action_digit(int digit, const std::vector<int>& current,
                                    const std::vector<double>& bin_power, int n_antennas);

/// Requested per-user sets for a joint action.
std::vector<std::vector<int>> decode_action(int action, const BeamAllocation& prev,
                                            const std::vector<double>& bin_power,
                                            int n_antennas);

/// Priority by occupancy, then head-of-line wait, then user index. Lower
/// priority users move conflicting indices to the nearest free index
/// (smaller on ties).
BeamAllocation resolve_collisions(const std::vector<std::vector<int>>& requests,
                                  const BufferState& buffers, int n_antennas);

/// Reward components for one user.
struct RewardTerms {
  double latency = 0.0;   // D_u - delta_u
  double overflow = 0.0;  // 1 if an arrival was dropped
  double expiry = 0.0;    // 1 if a packet expired
  double log_range = 0.0;
  double log_speed = 0.0;
  double total() const { return latency - overflow - expiry + log_range + log_speed; }
};

double log_error_term(double eps, const RlConfig& rl);

struct UserStep {
  bool success = false;
  double rate = 0.0;  // summed over frames
  int delta = 0;      // after the traffic update
  int occupancy = 0;
  TrafficEvents traffic;
  double x = 0.0;
  double y = 0.0;
  double distance = 0.0;
  double radial_speed = 0.0;
  double aod = 0.0;
  RangeVelocity estimate;
  NormalizedErrors errors;
  double echo_sinr = 0.0;
  int report_bin = 0;
  double music_aod = 0.0;
  bool has_music = false;
  RewardTerms reward;
};

struct MdpSnapshot {
  int tti = 0;  // 1..N
  int action = -1;
  std::vector<std::vector<int>> requested;
  BeamAllocation allocation;
  std::vector<UserStep> users;
  std::vector<double> observation;  // after the step
  double reward = 0.0;
  bool done = false;
  bool power_feasible = false;
};

/// How the transmitter forms angle beliefs for power control.
enum class BeliefSource { echo, genie, music };

struct EnvOptions {
  bool run_music = false;
  BeliefSource belief = BeliefSource::echo;
  bool keep_maps = false;
};

class IsacEnv {
 public:
  IsacEnv(SystemConfig cfg, std::uint64_t seed, EnvOptions opts = {});

  /// New episode from a position set; runs the warm-up sweep and returns
  /// the first observation.
  std::vector<double> reset(int position_set, std::uint64_t episode);

  MdpSnapshot step(int action);
  MdpSnapshot step_requests(const std::vector<std::vector<int>>& requests);

  std::vector<double> observation() const;
  int observation_size() const { return 2 * cfg_.n_tx_antennas + 2 * cfg_.n_users; }

  const SystemConfig& config() const { return cfg_; }
  const CMat& codebook() const { return codebook_; }
  const WorldState& world() const { return world_; }
  const BufferState& buffers() const { return buffers_; }
  const BeamAllocation& allocation() const { return alloc_; }
  const std::vector<double>& bin_power() const { return sensing_.bin_power; }
  const TtiSensing& last_sensing() const { return sensing_; }
  const PowerAllocation& last_powers() const { return powers_; }
  const std::vector<LinkBelief>& beliefs() const { return beliefs_; }
  /// MUSIC angles of the last TTI matched to users (empty without MUSIC).
  const std::vector<double>& music_estimates() const { return music_by_user_; }
  int tti() const { return tti_; }
  bool done() const { return tti_ >= cfg_.experiment.ttis_per_episode; }
  EnvOptions& options() { return opts_; }
  Scenario scenario() const { return cfg_.experiment.scenario; }

 private:
  SeededRng stream(std::uint64_t tag, std::uint64_t a = 0, std::uint64_t b = 0) const;
  std::vector<LinkBelief> next_beliefs() const;
  PowerAllocation plan_power(const BeamAllocation& alloc, const std::vector<CVec>& precoders) const;
  TtiSensing run_sensing(const BeamAllocation& alloc, const PowerAllocation& powers);

  SystemConfig cfg_;
  std::uint64_t seed_;
  EnvOptions opts_;
  CMat codebook_;
  std::uint64_t episode_ = 0;
  int tti_ = 0;
  WorldState world_;
  BufferState buffers_;
  BeamAllocation alloc_;
  PowerAllocation powers_;
  TtiSensing sensing_;
  std::vector<LinkBelief> beliefs_;
  std::vector<double> music_by_user_;
  bool have_estimates_ = false;
};

}  // namespace isac
