// SPDX-License-Identifier: Apache-2.0
//
// Monostatic echo, angular-bin extraction, range-Doppler processing, MUSIC
// and estimation bounds.
//
// The echo is kept in beamspace. For scatterer k with AoD phi_k the bin-n
// output of F^T y is e_kn * z_k(i,l), where e_kn = a(phi_k)^H f_n and
// z_k(i,l) = beta_k e^{j i varphi_k} e^{j l psi_k} a(phi_k)^H x(i,l). Since F
// is unitary the receiver noise is i.i.d. CN(0, sigma^2) in every bin, and
// antenna samples are recovered as conj(F) times the bin outputs.

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "isac/config.hpp"
#include "isac/phy.hpp"
#include "isac/rng.hpp"
#include "isac/world.hpp"

namespace isac {

struct Scatterer {
  double aod = 0.0;  // normalized angle
  double distance = 0.0;
  double radial_speed = 0.0;
  cd beta;
  int user = -1;  // -1 for clutter
};

/// Transmit side of one frame: per-user precoder and symbols
/// s_u(i,l) = amplitude_u(i) * q_u(i,l) with unit-modulus QPSK q.
struct TxFrame {
  std::vector<CVec> precoders;
  std::vector<Eigen::VectorXd> amplitude;  // sqrt(P_u(i)), length N_c
  std::vector<Eigen::MatrixXcd> qpsk;      // N_c x N_s
  int n_subcarriers = 0;
  int n_symbols = 0;

  cd symbol(int user, int i, int l) const { return amplitude[user][i] * qpsk[user](i, l); }
};

TxFrame make_tx_frame(const CMat& codebook, const BeamAllocation& alloc,
                      const PowerAllocation& powers, int n_symbols, SeededRng& rng);

class EchoFrame {
 public:
  EchoFrame() = default;
  EchoFrame(const SystemConfig& cfg, const CMat& codebook, std::vector<Scatterer> scatterers,
            const TxFrame& tx, double noise_var, SeededRng noise_rng);

  int n_bins() const { return static_cast<int>(codebook_.cols()); }
  int n_subcarriers() const { return n_c_; }
  int n_symbols() const { return n_s_; }
  double noise_var() const { return noise_var_; }
  const std::vector<Scatterer>& scatterers() const { return scatterers_; }

  /// Y'_n(i,l) for bin n_a (1-based), noise included. N_c x N_s.
  Eigen::MatrixXcd bin_samples(int n_a) const;
  /// Noise-free part of a bin, optionally with one scatterer left out.
  Eigen::MatrixXcd bin_signal(int n_a, int exclude = -1) const;
  /// Contribution of one scatterer to bin n_a.
  Eigen::MatrixXcd scatterer_term(int k, int n_a) const;
  /// y_i[l] for every (i,l): N_R x (N_c N_s), column index i + l N_c.
  Eigen::MatrixXcd antenna_samples() const;
  /// ||noise-free bin output||^2 over the frame, from the scatterer Gram
  /// matrix, optionally with one scatterer left out.
  double bin_signal_energy(int n_a, int exclude = -1) const;
  /// Draw of mean |Y'_n|^2 with the exact distribution of the materialized one.
  double sample_bin_power(int n_a, SeededRng& rng) const;

 private:
  int n_c_ = 0;
  int n_s_ = 0;
  CMat codebook_;
  std::vector<Scatterer> scatterers_;
  Eigen::MatrixXcd z_;               // column k: z_k flattened, index i + l N_c
  Eigen::MatrixXcd proj_;            // K x N_T, e_kn
  Eigen::MatrixXcd gram_;            // K x K, <z_k, z_k'>
  double noise_var_ = 0.0;
  SeededRng noise_rng_{0, 0};
};

/// Scatterer list of the current world: users with radar-equation
/// magnitudes and the given phases, then clutters.
std::vector<Scatterer> scene_scatterers(const WorldState& world, const SystemConfig& cfg,
                                        const std::vector<double>& user_phases);

/// Echo model evaluated antenna by antenna. Reference implementation used by
/// tests; O(N_R^2 N_c N_s).
Eigen::MatrixXcd direct_echo(const SystemConfig& cfg, const std::vector<Scatterer>& sc,
                             const TxFrame& tx);

struct AngularBinSeries {
  int n_a = 0;
  Eigen::MatrixXcd values;  // N_c x N_s
};

/// F^T y for one bin followed by removal of the given user's symbols where
/// they are non-zero.
AngularBinSeries extract_bin(const EchoFrame& echo, const TxFrame& tx, int n_a, int user);
AngularBinSeries remove_symbols(Eigen::MatrixXcd raw, const TxFrame& tx, int n_a, int user);

struct RangeDopplerMap {
  int n_a = 0;
  Eigen::MatrixXd magnitude;  // N_c x N_s, (n_r, n_v)
};

/// Normalized 2D DFT over (i, l).
RangeDopplerMap range_doppler_map(const AngularBinSeries& series);

struct PeakSearch {
  int n_r = 0;
  int n_v = 0;
  int n_a = 0;
  double magnitude = 0.0;
  bool valid = false;
};

/// Global maximum over the union of maps. Ties go to the smallest
/// (n_r, n_v), then the earliest map.
PeakSearch find_peak(const std::vector<RangeDopplerMap>& maps);

struct RangeVelocity {
  double range_m = 0.0;
  double speed_mps = 0.0;
  bool valid = false;
};

/// Peak cell to (d, v). Doppler indices above N_s/2 are negative speeds. An
/// invalid peak maps to the far edge of the grid.
RangeVelocity estimate_range_velocity(const PeakSearch& peak, const SystemConfig& cfg);

/// Continuous maximisation of the 2D periodogram around a coarse peak.
/// Returns (d, v).
RangeVelocity refine_range_velocity(const AngularBinSeries& series, const PeakSearch& coarse,
                                    const SystemConfig& cfg);

struct MusicResult {
  std::vector<double> aods;  // normalized angles, ascending
  bool low_confidence = false;
};

/// Spatial covariance over all snapshots (columns), noise-subspace
/// pseudospectrum over the receive signature a*(theta).
MusicResult music_aod(const Eigen::MatrixXcd& snapshots, int n_sources);

/// Pseudospectrum value at theta, for diagnostics and tests.
double music_pseudospectrum(const Eigen::MatrixXcd& noise_subspace, double theta);

/// P |beta|^2 |f_n^H a|^2 |a^H w| ^2 / (interference + noise). For a single
/// beam w = +-f_n this is the |f_n^H a|^4 form.
double echo_sinr(double power, double beta_abs2, double aod, int n_a, const CVec& precoder,
                 double interference, double noise, int n_antennas);

struct Crlb {
  double range_var = 0.0;
  double speed_var = 0.0;
  double angle_var = 0.0;  // physical angle, rad^2; infinite when cos = 0
};

/// Single-target bounds at per-sample SINR gamma; physical_aod in radians.
Crlb crlb(double gamma, const SystemConfig& cfg, double physical_aod);

struct NormalizedErrors {
  double range = 0.0;
  double speed = 0.0;
};

NormalizedErrors normalized_errors(double d, double v, double d_hat, double v_hat,
                                   const SystemConfig& cfg);

struct UserSensing {
  PeakSearch peak;
  RangeVelocity estimate;
  int report_bin = 0;          // strongest of the user's bins
  double report_power = 0.0;
  double echo_sinr = 0.0;      // true SINR in the report bin
  RangeDopplerMap peak_map;    // kept only on request
};

struct TtiSensing {
  std::vector<double> bin_power;  // b_n, n = 1..N_T at index n-1
  std::vector<UserSensing> users;
  bool has_music = false;
  MusicResult music;
};

/// Runs the sensing chain on one frame: bin powers for every codeword
/// (materialized for allocated bins, sampled for the rest), per-user
/// range-Doppler peak over the user's bins, optional MUSIC.
TtiSensing sense_frame(const SystemConfig& cfg, const EchoFrame& echo, const TxFrame& tx,
                       const BeamAllocation& alloc, SeededRng power_rng, bool run_music,
                       bool keep_maps);

/// Writes n_r,n_v,magnitude rows.
void write_rd_map_csv(const RangeDopplerMap& map, const std::string& path,
                      const std::string& header_comment);

}  // namespace isac
