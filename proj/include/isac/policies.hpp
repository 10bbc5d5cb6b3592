// SPDX-License-Identifier: Apache-2.0
//
// Non-learning beam allocators. Each returns per-user requests; the
// environment applies the shared collision rule.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "isac/env.hpp"

namespace isac {

using BeamRequests = std::vector<std::vector<int>>;

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  /// Options the environment must run with for this policy.
  virtual EnvOptions env_options() const { return {}; }
  /// Called after env.reset().
  virtual void begin_episode(const IsacEnv& /*env*/) {}
  virtual BeamRequests decide(const IsacEnv& env, SeededRng& rng) = 0;
  /// Joint action index behind the last decision, -1 when not applicable.
  virtual int last_action() const { return -1; }
};

/// Three consecutive indices around centre, shifted inward at the edges.
std::vector<int> three_around(int centre, int n_antennas);

/// Index of the strongest bin among the set; ties go to the smaller index.
int strongest_bin(const std::vector<int>& set, const std::vector<double>& bin_power);

class GeniePolicy : public Policy {
 public:
  std::string name() const override { return "genie"; }
  EnvOptions env_options() const override;
  BeamRequests decide(const IsacEnv& env, SeededRng& rng) override;
};

/// Beam count from the MUSIC angle precision.
class AodBasedPolicy : public Policy {
 public:
  std::string name() const override { return "aod_based"; }
  EnvOptions env_options() const override;
  BeamRequests decide(const IsacEnv& env, SeededRng& rng) override;
  /// Normalized-angle standard deviation at estimated SINR gamma.
  static double angle_precision(double gamma, const SystemConfig& cfg);
  /// Echo SINR rebuilt from the estimates of one user.
  static double estimated_sinr(const IsacEnv& env, int user, double aod_hat);
};

/// One multi-beam slot followed by X single-beam slots.
class XTdmaPolicy : public Policy {
 public:
  explicit XTdmaPolicy(int x);
  std::string name() const override;
  void begin_episode(const IsacEnv& env) override;
  BeamRequests decide(const IsacEnv& env, SeededRng& rng) override;
  int phase() const { return phase_; }
  const std::vector<int>& best() const { return best_; }

 private:
  int x_;
  int phase_ = 0;
  bool last_was_multi_ = false;
  std::vector<int> best_;
};

/// One uniformly drawn beam per user, disjoint.
class RandomPolicy : public Policy {
 public:
  std::string name() const override { return "random"; }
  BeamRequests decide(const IsacEnv& env, SeededRng& rng) override;
};

/// Never moves: each user keeps beams anchored at the bin of its initial
/// true AoD. width 1 uses anchor+offset, width 3 uses three_around(anchor).
class StaticBeamPolicy : public Policy {
 public:
  StaticBeamPolicy(int width, int offset = 0);
  std::string name() const override;
  void begin_episode(const IsacEnv& env) override;
  BeamRequests decide(const IsacEnv& env, SeededRng& rng) override;

 private:
  int width_;
  int offset_;
  BeamRequests sets_;
};

/// Three beams starting at the static3 anchor, then re-centred every TTI on
/// the strongest bin of the last set.
class SweepPolicy : public Policy {
 public:
  std::string name() const override { return "sweep"; }
  void begin_episode(const IsacEnv& env) override;
  BeamRequests decide(const IsacEnv& env, SeededRng& rng) override;

 private:
  BeamRequests start_;
};

/// "genie", "aod_based", "x_tdma" (X from config) or "x_tdma:X", "random",
/// "static1", "static1:+k", "static3", "sweep". Throws std::invalid_argument.
std::unique_ptr<Policy> make_baseline(const std::string& tag, const SystemConfig& cfg);

}  // namespace isac
