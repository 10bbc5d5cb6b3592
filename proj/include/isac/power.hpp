// SPDX-License-Identifier: Apache-2.0
//
// Minimum-power SINR-target allocation with even-split fallback.

#pragma once

#include <Eigen/Dense>

#include <vector>

#include "isac/config.hpp"
#include "isac/phy.hpp"

namespace isac {

/// One subcarrier: gain(u, q) = |h_u^H w_q|^2 as predicted by the BS.
struct PowerProblem {
  Eigen::MatrixXd gain;
  std::vector<double> target;
  double noise = 0.0;
  double budget = 0.0;  // total power available on this subcarrier
};

struct PowerSolution {
  std::vector<double> power;
  bool feasible = false;
  std::vector<bool> below_target;  // predicted failures
  int iterations = 0;
};

/// Fixed point p_u = t_u (sum_{q != u} G_uq p_q + noise) / G_uu from p = 0,
/// to relative change 1e-10 or 1000 iterations, then an exact linear solve.
/// Users with zero own gain get no power and are flagged. Infeasible or
/// over-budget problems fall back to an even split of the budget.
PowerSolution solve_power(const PowerProblem& problem);

/// Predicted SINR of every user for a power vector.
std::vector<double> predicted_sinr(const PowerProblem& problem, const std::vector<double>& p);

/// Uniform per-subcarrier target 2^{R_th / (M N_s N_c)} - 1, with the
/// configured margin.
double sinr_target(const SystemConfig& cfg);

/// Budget per subcarrier: P_tot / (N_s N_c M) summed over users.
double subcarrier_budget(const SystemConfig& cfg);

PowerAllocation even_split(int n_users, int n_subcarriers, double budget);

/// Solves every subcarrier; identical problems are solved once.
PowerAllocation allocate(const std::vector<PowerProblem>& per_subcarrier);

/// What the BS believes about a user when predicting gains.
struct LinkBelief {
  double distance = 1.0;   // m
  double aod_center = 0.0; // normalized angle
  double aod_half_width = 0.0;
  bool known = false;
};

/// Robust gains: own gain is the minimum over the angle interval, cross
/// gains the maximum. With finite K the NLoS part contributes its mean.
Eigen::MatrixXd predict_gains(const std::vector<LinkBelief>& beliefs,
                              const std::vector<CVec>& precoders, const SystemConfig& cfg,
                              bool rician);

}  // namespace isac
