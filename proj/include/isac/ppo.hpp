// SPDX-License-Identifier: Apache-2.0
//
// PPO over the joint 6^U action space: MLP, clipped objective, Adam,
// rollouts, checkpoints.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "isac/config.hpp"
#include "isac/env.hpp"
#include "isac/policies.hpp"
#include "isac/rng.hpp"

namespace isac {

/// Fully connected net, tanh between layers, linear output.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> sizes);

  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // input, hidden..., output
  };

  /// x is (inputs x batch).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;
  /// Accumulates dL/dparams into grad given dL/doutput.
  void backward(const Cache& cache, const Eigen::MatrixXd& d_out, Eigen::VectorXd& grad) const;

  /// Orthogonal weights with per-layer gains, zero biases. The last layer
  /// uses out_gains per output row.
  void init_orthogonal(SeededRng& rng, double hidden_gain, const std::vector<double>& out_gains);

  const std::vector<int>& sizes() const { return sizes_; }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::Index n_params() const { return params_.size(); }

 private:
  Eigen::Index weight_offset(std::size_t layer) const { return offsets_[layer]; }

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Eigen::VectorXd params_;
};

/// Welford running mean and variance per feature.
struct RunningStats {
  long long count = 0;
  Eigen::VectorXd mean;
  Eigen::VectorXd m2;

  void resize(Eigen::Index n);
  void update(const Eigen::VectorXd& x);
  Eigen::VectorXd stddev(double floor = 1e-8) const;
};

double clipped_objective(double ratio, double advantage, double eps);

/// Suffix sums of discounted rewards, restarting after each done.
std::vector<double> discounted_returns(const std::vector<double>& rewards,
                                       const std::vector<bool>& dones, double gamma);
/// Monte-Carlo advantages: returns minus values.
std::vector<double> mc_advantages(const std::vector<double>& rewards,
                                  const std::vector<double>& values,
                                  const std::vector<bool>& dones, double gamma);
/// Generalized advantage estimation; no bootstrap past a done.
std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                   const std::vector<double>& values,
                                   const std::vector<bool>& dones, double gamma, double lambda);
void normalize_in_place(std::vector<double>& xs);

/// Mask of allowed joint actions. "1b" keeps digits {1, 4, 6}.
std::vector<bool> action_mask(const std::string& action_set, int n_users);

struct PpoBatch {
  Eigen::MatrixXd obs;  // features x batch
  std::vector<int> actions;
  std::vector<double> old_logp;
  std::vector<double> advantages;
  std::vector<double> value_targets;  // normalized returns
};

struct LossStats {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

/// Loss = -clip objective + c_v (V - target)^2 - c_e H, averaged over the
/// batch. Writes the gradient when grad is non-null.
LossStats ppo_loss(const Mlp& net, const PpoBatch& batch, const std::vector<bool>& mask,
                   const RlConfig& rl, Eigen::VectorXd* grad);

/// Masked softmax over the logit rows of a net output column.
Eigen::VectorXd masked_softmax(const Eigen::VectorXd& logits, const std::vector<bool>& mask);

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long t = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);
};

/// Learning rate after the step decay at 1/3 and 2/3 of total_steps.
double scheduled_lr(const RlConfig& rl, std::int64_t step);

class PpoAgent {
 public:
  PpoAgent() = default;
  PpoAgent(const SystemConfig& cfg, std::uint64_t seed);

  int n_actions() const { return n_actions_; }
  int input_size() const { return input_size_; }

  /// Raw features: log10 bin powers, owner / U, delta / D, q / B.
  Eigen::VectorXd raw_features(const std::vector<double>& obs) const;
  /// Raw features with the bin-power block standardized.
  Eigen::VectorXd encode(const std::vector<double>& obs) const;
  void observe(const std::vector<double>& obs);

  struct Output {
    Eigen::VectorXd probs;
    double value = 0.0;  // denormalized
  };
  Output evaluate(const Eigen::VectorXd& encoded) const;
  int greedy_action(const Eigen::VectorXd& encoded) const;
  int sample_action(const Eigen::VectorXd& probs, SeededRng& rng) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  Adam& adam() { return adam_; }
  const std::vector<bool>& mask() const { return mask_; }
  RunningStats& obs_stats() { return obs_stats_; }
  RunningStats& return_stats() { return ret_stats_; }
  const RunningStats& return_stats() const { return ret_stats_; }
  double return_mean() const;
  double return_std() const;

  std::int64_t steps = 0;
  std::int64_t episodes = 0;
  std::int64_t updates = 0;
  std::vector<double> recent_rewards;  // moving-average window
  std::uint64_t seed = 0;

  void save(std::ostream& os) const;
  static PpoAgent load(std::istream& is, const SystemConfig& cfg);
  void save_file(const std::string& path) const;
  static PpoAgent load_file(const std::string& path, const SystemConfig& cfg);

 private:
  int n_t_ = 0;
  int n_users_ = 0;
  int n_actions_ = 0;
  int input_size_ = 0;
  std::vector<double> deadlines_;
  std::vector<double> capacities_;
  std::string action_set_;
  std::vector<bool> mask_;
  Mlp net_;
  Adam adam_;
  RunningStats obs_stats_;
  RunningStats ret_stats_;
};

/// Evaluation wrapper: greedy by default.
class AgentPolicy : public Policy {
 public:
  AgentPolicy(std::shared_ptr<const PpoAgent> agent, bool greedy = true, std::string name = "ppo");
  std::string name() const override { return name_; }
  BeamRequests decide(const IsacEnv& env, SeededRng& rng) override;
  int last_action() const override { return last_action_; }

 private:
  std::shared_ptr<const PpoAgent> agent_;
  bool greedy_;
  std::string name_;
  int last_action_ = -1;
};

struct CurveRow {
  std::int64_t step = 0;
  std::int64_t episodes = 0;
  double mean_reward = 0.0;  // moving average over the window
  LossStats loss;
  double lr = 0.0;
};

struct TrainOptions {
  std::uint64_t seed = 1;
  int workers = 1;
  std::string checkpoint_path;  // empty: no files
  std::string curve_path;
  std::function<void(const CurveRow&)> progress;
};

/// Runs PPO until agent.steps reaches rl.total_steps. Resumes from the
/// agent's counters. Deterministic for a given seed regardless of workers.
std::vector<CurveRow> train(PpoAgent& agent, const SystemConfig& cfg, const TrainOptions& opt);

void write_curve_header(std::ostream& os, const SystemConfig& cfg, std::uint64_t seed);
void write_curve_row(std::ostream& os, const CurveRow& row);

}  // namespace isac
