// SPDX-License-Identifier: Apache-2.0
//
// Array responses, DFT codebook, downlink channel, SINR and rate.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

#include "isac/config.hpp"
#include "isac/rng.hpp"
#include "isac/world.hpp"

namespace isac {

using cd = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

/// a(theta): entry k is e^{j k theta} / sqrt(n).
CVec steering(double theta, int n_antennas);

/// omega(n_a) = pi (2 n_a - 1 - N) / N, n_a in [1, N].
double codeword_angle(int n_a, int n_antennas);

/// Column n_a - 1 is codeword n_a.
CMat build_codebook(int n_antennas);

/// Codeword whose centre is nearest to theta (wrapped to [-pi, pi)).
int nearest_codeword(double theta, int n_antennas);

/// |a(theta)^H f_{n_a}|^2.
double beam_gain(double theta, int n_a, int n_antennas);

/// Per-user sorted sets of 1-based codebook indices.
struct BeamAllocation {
  std::vector<std::vector<int>> beams;

  int n_users() const { return static_cast<int>(beams.size()); }
  /// 1..3 beams per user, indices in range, no index shared.
  bool valid(int n_antennas) const;
  /// 0 when idle, otherwise user index + 1.
  std::vector<int> owner_map(int n_antennas) const;
  bool operator==(const BeamAllocation&) const = default;
};

/// Selection-vector weight for codeword n_a in a k-beam set: (-1)^{n_a}/sqrt(k).
double selection_weight(int n_a, int set_size);

/// Effective precoder F v_u of one user.
CVec user_precoder(const CMat& codebook, const std::vector<int>& beams);

/// One OFDM frame of downlink channels. The LoS term of user u is
/// los_gain[u] * e^{j2 pi i df d/c} e^{j2 pi l Ts v fc/c} a(phi_u); nlos[u]
/// (absent for pure LoS) holds the already-weighted NLoS vector of each
/// subcarrier as the columns of an N_T x N_c matrix.
struct ChannelRealization {
  struct UserLink {
    double distance = 0.0;
    double radial_speed = 0.0;
    double aod = 0.0;
    cd alpha;     // free-space gain with random phase
    cd los_gain;  // sqrt(K/(1+K)) alpha, or alpha for pure LoS
    CMat nlos;    // empty for pure LoS
  };
  std::vector<UserLink> users;
  double rician_k = 0.0;  // linear; infinity for pure LoS
  bool pure_los = true;
  int n_antennas = 0;
  int n_subcarriers = 0;
  int n_symbols = 0;
  double subcarrier_spacing_hz = 0.0;
  double symbol_duration_s = 0.0;
  double carrier_freq_hz = 0.0;

  /// e^{j2 pi i df d/c} e^{j2 pi l Ts v fc/c} of user u.
  cd los_phase(int user, int subcarrier, int symbol) const;
  /// Full response h_i^u[l].
  CVec response(int user, int subcarrier, int symbol) const;
};

ChannelRealization draw_channel(const WorldState& world, const SystemConfig& cfg,
                                bool pure_los, SeededRng& rng);

/// Per-user, per-subcarrier transmit power (W per resource element).
struct PowerAllocation {
  std::vector<std::vector<double>> power;  // [user][subcarrier]
  std::vector<bool> feasible;              // per subcarrier
  std::vector<std::vector<bool>> below_target;  // [user][subcarrier]
  double total() const;
};

/// h^H w for every (user, precoder) pair at one resource element.
Eigen::MatrixXcd effective_gains(const ChannelRealization& ch,
                                 const std::vector<CVec>& precoders, int subcarrier,
                                 int symbol);

double user_sinr(const ChannelRealization& ch, const std::vector<CVec>& precoders,
                 const PowerAllocation& powers, double noise_power, int subcarrier,
                 int symbol, int user);

/// R_u = sum over (i, l) of log2(1 + SINR), one frame.
std::vector<double> rates(const ChannelRealization& ch, const std::vector<CVec>& precoders,
                          const PowerAllocation& powers, double noise_power);

/// Sum over frames >= threshold.
bool transmission_success(const std::vector<double>& rates_over_frames, double r_th);

}  // namespace isac
