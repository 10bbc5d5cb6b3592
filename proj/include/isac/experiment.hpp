// SPDX-License-Identifier: Apache-2.0
//
// Episode runner, evaluation metrics, calibration and CSV output.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "isac/env.hpp"
#include "isac/policies.hpp"

namespace isac {

inline constexpr const char* kEpisodeSchema = "isac-episodes/1";
inline constexpr const char* kTraceSchema = "isac-trace/1";
inline constexpr const char* kSummarySchema = "isac-summary/1";
inline constexpr const char* kSweepSchema = "isac-sweep/1";
inline constexpr const char* kCurveSchema = "isac-curve/1";
inline constexpr const char* kCdfSchema = "isac-cdf/1";
inline constexpr const char* kHistSchema = "isac-latency-hist/1";

/// Normalized errors below this count as accurate.
inline constexpr double kAccuracyThreshold = 0.2;

struct UserEpisodeMetrics {
  double throughput = 0.0;  // delivered / arrived
  double mean_latency = 0.0;
  long long delivered = 0;
  long long arrived = 0;
  long long overflow_drops = 0;
  long long expiry_drops = 0;
  double instant_fraction = 0.0;  // delivered with zero wait
  double success_rate = 0.0;
  double p_range = 0.0;
  double p_speed = 0.0;
  double p_aod = 0.0;
  double mean_aod_error = 0.0;  // normalized by the bin width
  std::vector<long long> delay_hist;  // index = wait in TTIs
  bool conserved = false;
};

struct EpisodeRecord {
  int episode = 0;
  int position_set = 0;
  double reward = 0.0;
  std::vector<UserEpisodeMetrics> users;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

/// Angle estimate the transmitter holds for a user after a step.
double aod_estimate(const UserStep& s, int n_antennas);

EpisodeRecord run_episode(IsacEnv& env, Policy& policy, int position_set, std::uint64_t episode,
                          std::uint64_t seed, std::vector<MdpSnapshot>* trace = nullptr);

struct EvalOptions {
  int episodes = 500;
  std::uint64_t seed = 1;
  int workers = 1;
  std::vector<int> position_sets;  // cycled by episode index
  bool keep_trace = false;
};

struct EvalResult {
  std::string policy;
  std::vector<EpisodeRecord> episodes;
  std::vector<std::vector<MdpSnapshot>> traces;  // only with keep_trace
};

/// Episode-parallel evaluation; results are ordered by episode index and do
/// not depend on the worker count.
EvalResult run_eval(const SystemConfig& cfg, const PolicyFactory& factory, const EvalOptions& opt);

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal interval
  double stderr_ = 0.0;
  long long n = 0;
};

MeanCi mean_ci(const std::vector<double>& xs);

std::vector<double> episode_rewards(const EvalResult& r);
/// Per-episode mean over users of a metric.
std::vector<double> user_mean(const EvalResult& r,
                              const std::function<double(const UserEpisodeMetrics&)>& f);
/// Fraction of all delivered packets with zero wait.
double instant_fraction(const EvalResult& r);
double success_rate(const EvalResult& r);

/// Writes "# key=value" lines: schema, config hash, seed, extras.
void write_csv_header(std::ostream& os, const std::string& schema, const SystemConfig& cfg,
                      std::uint64_t seed, const std::vector<std::string>& extra = {});
std::string format_double(double x);

void write_episodes_csv(std::ostream& os, const EvalResult& r, const SystemConfig& cfg,
                        std::uint64_t seed);
void write_trace_csv(std::ostream& os, const EvalResult& r, const SystemConfig& cfg,
                     std::uint64_t seed);
/// (metric, mean with interval) rows shared by summary and sweep output.
std::vector<std::pair<std::string, MeanCi>> summarize(const EvalResult& r);

void write_summary_csv(std::ostream& os, const std::vector<EvalResult>& results,
                       const SystemConfig& cfg, std::uint64_t seed);

/// Reads back per-user rows of an episodes CSV.
struct EpisodeRow {
  std::string policy;
  int episode = 0;
  int user = 0;
  double reward = 0.0;
  double throughput = 0.0;
  double mean_latency = 0.0;
  std::vector<long long> delay_hist;
};
std::vector<EpisodeRow> read_episodes_csv(std::istream& is);

/// Empirical CDF of values on a uniform grid over [0, 1].
std::vector<double> cdf_on_grid(std::vector<double> values, int points);

struct CalibrationResult {
  bool ok = false;
  double rate_threshold = 0.0;
  double success = 0.0;
  int iterations = 0;
  std::vector<std::pair<double, double>> probes;  // (R_th, success)
};

/// Log-space bisection on R_th until the genie success rate lands in
/// [lo, hi] (clean scenario, mean speed 6 m/s).
CalibrationResult calibrate_rate_threshold(SystemConfig cfg, std::uint64_t seed, int episodes,
                                           int workers, double lo = 0.93, double hi = 0.97);

}  // namespace isac
