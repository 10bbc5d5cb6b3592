// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random source. A generator is a (key, counter) pair: the key
// comes from (seed, stream id), each draw hashes key + counter. Distribution
// transforms are implemented here rather than taken from <random>, whose
// distributions are not specified bit-for-bit across standard libraries.

#pragma once

#include <complex>
#include <cstdint>
#include <initializer_list>

namespace isac {

/// SplitMix64 finaliser.
std::uint64_t mix64(std::uint64_t x);

/// Folds a list of integers into one stream id.
std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts);

class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Circularly symmetric complex Gaussian with E|z|^2 = variance.
  std::complex<double> complex_normal(double variance = 1.0);
  bool bernoulli(double p);
  /// Uniform on the closed range [lo, hi].
  int uniform_int(int lo, int hi);
  /// Gamma(shape, 1).
  double gamma(double shape);

  /// Independent generator derived from this one's key.
  SeededRng child(std::uint64_t sub) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace isac
