// SPDX-License-Identifier: Apache-2.0

#include "isac/power.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace isac {

std::vector<double> predicted_sinr(const PowerProblem& pr, const std::vector<double>& p) {
  const int n = static_cast<int>(p.size());
  std::vector<double> s(n, 0.0);
  for (int u = 0; u < n; ++u) {
    double intf = pr.noise;
    for (int q = 0; q < n; ++q)
      if (q != u) intf += pr.gain(u, q) * p[q];
    s[u] = pr.gain(u, u) * p[u] / intf;
  }
  return s;
}

namespace {

PowerSolution fallback(const PowerProblem& pr, int iterations) {
  const int n = static_cast<int>(pr.target.size());
  PowerSolution sol;
  sol.power.assign(n, n > 0 ? pr.budget / n : 0.0);
  sol.feasible = false;
  sol.iterations = iterations;
  const auto s = predicted_sinr(pr, sol.power);
  sol.below_target.resize(n);
  for (int u = 0; u < n; ++u) sol.below_target[u] = !(s[u] >= pr.target[u]);
  return sol;
}

}  // namespace

PowerSolution solve_power(const PowerProblem& pr) {
  const int n = static_cast<int>(pr.target.size());
  std::vector<int> active;
  for (int u = 0; u < n; ++u)
    if (pr.gain(u, u) > 0.0) active.push_back(u);
  const int m = static_cast<int>(active.size());

  std::vector<double> p(n, 0.0);
  int it = 0;
  bool converged = m == 0;
  const double blowup = std::max(pr.budget, 1e-300) * 1e6;
  for (; it < 1000 && !converged; ++it) {
    double change = 0.0, scale = 0.0;
    std::vector<double> next(n, 0.0);
    for (int u : active) {
      double intf = pr.noise;
      for (int q : active)
        if (q != u) intf += pr.gain(u, q) * p[q];
      next[u] = pr.target[u] * intf / pr.gain(u, u);
      change = std::max(change, std::abs(next[u] - p[u]));
      scale = std::max(scale, std::abs(next[u]));
    }
    p = next;
    double total = 0.0;
    for (double x : p) total += x;
    if (!std::isfinite(total) || total > blowup) break;
    if (change <= 1e-10 * scale) converged = true;
  }
  if (!converged) return fallback(pr, it);

  // Polish: (I - D) p = b on the active set.
  if (m > 0) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m);
    Eigen::VectorXd b(m);
    for (int r = 0; r < m; ++r) {
      const int u = active[r];
      b[r] = pr.target[u] * pr.noise / pr.gain(u, u);
      for (int c = 0; c < m; ++c)
        if (c != r) a(r, c) = -pr.target[u] * pr.gain(u, active[c]) / pr.gain(u, u);
    }
    const Eigen::VectorXd x = a.partialPivLu().solve(b);
    for (int r = 0; r < m; ++r) p[active[r]] = x[r];
  }
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) return fallback(pr, it);
    total += x;
  }
  if (total > pr.budget) return fallback(pr, it);

  PowerSolution sol;
  sol.power = p;
  sol.feasible = true;
  sol.iterations = it;
  sol.below_target.assign(n, false);
  for (int u = 0; u < n; ++u)
    if (!(pr.gain(u, u) > 0.0)) sol.below_target[u] = true;
  return sol;
}

double sinr_target(const SystemConfig& cfg) {
  const double per_re = cfg.rate_threshold /
                        (static_cast<double>(cfg.frames_per_tti) * cfg.n_symbols * cfg.n_subcarriers);
  return (std::exp2(per_re) - 1.0) * db_to_linear(cfg.power_margin_db);
}

double subcarrier_budget(const SystemConfig& cfg) {
  return cfg.tti_power_budget_w() /
         (static_cast<double>(cfg.n_symbols) * cfg.n_subcarriers * cfg.frames_per_tti);
}

PowerAllocation even_split(int n_users, int n_subcarriers, double budget) {
  PowerAllocation pa;
  pa.power.assign(n_users, std::vector<double>(n_subcarriers, n_users > 0 ? budget / n_users : 0.0));
  pa.feasible.assign(n_subcarriers, false);
  pa.below_target.assign(n_users, std::vector<bool>(n_subcarriers, false));
  return pa;
}

PowerAllocation allocate(const std::vector<PowerProblem>& probs) {
  const int nc = static_cast<int>(probs.size());
  const int nu = nc > 0 ? static_cast<int>(probs[0].target.size()) : 0;
  PowerAllocation pa;
  pa.power.assign(nu, std::vector<double>(nc, 0.0));
  pa.feasible.assign(nc, false);
  pa.below_target.assign(nu, std::vector<bool>(nc, false));
  const PowerProblem* last = nullptr;
  PowerSolution sol;
  for (int i = 0; i < nc; ++i) {
    const PowerProblem& pr = probs[i];
    const bool same = last && last->gain == pr.gain && last->target == pr.target &&
                      last->noise == pr.noise && last->budget == pr.budget;
    if (!same) sol = solve_power(pr);
    last = &pr;
    pa.feasible[i] = sol.feasible;
    for (int u = 0; u < nu; ++u) {
      pa.power[u][i] = sol.power[u];
      pa.below_target[u][i] = sol.below_target[u];
    }
  }
  return pa;
}

Eigen::MatrixXd predict_gains(const std::vector<LinkBelief>& beliefs,
                              const std::vector<CVec>& precoders, const SystemConfig& cfg,
                              bool rician) {
  const int nu = static_cast<int>(beliefs.size());
  const int nq = static_cast<int>(precoders.size());
  const int nt = cfg.n_tx_antennas;
  const double k = cfg.rician_k_linear();
  const double los_w = rician ? k / (1.0 + k) : 1.0;
  const double nlos_w = rician ? 1.0 / (1.0 + k) : 0.0;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nu, nq);
  for (int u = 0; u < nu; ++u) {
    const LinkBelief& b = beliefs[u];
    const double amp = cfg.wavelength_m() / (4.0 * std::numbers::pi * std::max(b.distance, 1e-3));
    const double loss = amp * amp;
    constexpr int kPoints = 33;
    const int pts = b.aod_half_width > 0.0 ? kPoints : 1;
    for (int q = 0; q < nq; ++q) {
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (int s = 0; s < pts; ++s) {
        const double t = pts == 1 ? b.aod_center
                                  : b.aod_center - b.aod_half_width +
                                        2.0 * b.aod_half_width * s / (pts - 1);
        const double bf = std::norm(steering(t, nt).dot(precoders[q]));
        lo = std::min(lo, bf);
        hi = std::max(hi, bf);
      }
      const double bf = q == u ? lo : hi;
      g(u, q) = loss * (los_w * bf + nlos_w * precoders[q].squaredNorm() / nt);
    }
  }
  return g;
}

}  // namespace isac
