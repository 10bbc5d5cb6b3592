// SPDX-License-Identifier: Apache-2.0
//
// Finite FIFO buffers with Bernoulli arrivals and per-packet deadlines.

#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "isac/config.hpp"
#include "isac/rng.hpp"

namespace isac {

struct UserBuffer {
  int capacity = 1;
  int deadline = 1;
  double arrival_prob = 0.0;
  std::deque<int> waits;  // front is the head-of-line packet

  long long arrived = 0;
  long long delivered = 0;
  long long overflow_drops = 0;
  long long expiry_drops = 0;
  long long delivered_wait_sum = 0;

  int occupancy() const { return static_cast<int>(waits.size()); }
  int head_wait() const { return waits.empty() ? 0 : waits.front(); }
};

/// Events of one TTI for one user.
struct TrafficEvents {
  std::optional<int> delivered_wait;
  bool overflow = false;
  int expired = 0;
  bool arrival = false;
};

struct BufferState {
  std::vector<UserBuffer> users;

  static BufferState from_config(const SystemConfig& cfg);
  int n_users() const { return static_cast<int>(users.size()); }
};

/// Serves the head packet of every successful user and returns its wait.
/// Every packet still queued then ages by one TTI, and packets that reach
/// their deadline are dropped.
std::vector<TrafficEvents> step_service(BufferState& state, const std::vector<bool>& success);

/// Bernoulli arrival per user; a full buffer drops the newcomer.
void step_arrivals(BufferState& state, SeededRng& rng, std::vector<TrafficEvents>& events);

/// One full TTI: service, aging/expiry, arrivals.
std::vector<TrafficEvents> step_tti(BufferState& state, const std::vector<bool>& success,
                                    SeededRng& rng);

struct DelaySurrogate {
  double value = 0.0;
  bool no_data = true;
};

/// Mean delivered wait plus one unit per dropped packet, averaged over the
/// observed TTIs.
DelaySurrogate delay_surrogate(const UserBuffer& user, long long n_ttis);

/// arrived == delivered + drops + occupancy.
bool conserved(const UserBuffer& user);

}  // namespace isac
