// SPDX-License-Identifier: Apache-2.0

#include "isac/traffic.hpp"

#include <stdexcept>

namespace isac {

BufferState BufferState::from_config(const SystemConfig& cfg) {
  BufferState s;
  for (int u = 0; u < cfg.n_users; ++u) {
    UserBuffer b;
    b.capacity = cfg.buffer_sizes.at(u);
    b.deadline = cfg.deadlines.at(u);
    b.arrival_prob = cfg.arrival_probs.at(u);
    s.users.push_back(b);
  }
  return s;
}

std::vector<TrafficEvents> step_service(BufferState& state, const std::vector<bool>& success) {
  if (success.size() != state.users.size())
    throw std::invalid_argument("step_service: one success flag per user required");
  std::vector<TrafficEvents> ev(state.users.size());
  for (std::size_t u = 0; u < state.users.size(); ++u) {
    UserBuffer& b = state.users[u];
    if (success[u] && !b.waits.empty()) {
      const int w = b.waits.front();
      b.waits.pop_front();
      ++b.delivered;
      b.delivered_wait_sum += w;
      ev[u].delivered_wait = w;
    }
    for (int& w : b.waits) ++w;
    // Waits are strictly decreasing from the head, so expired packets sit
    // at the front.
    while (!b.waits.empty() && b.waits.front() >= b.deadline) {
      b.waits.pop_front();
      ++b.expiry_drops;
      ++ev[u].expired;
    }
  }
  return ev;
}

void step_arrivals(BufferState& state, SeededRng& rng, std::vector<TrafficEvents>& ev) {
  ev.resize(state.users.size());
  for (std::size_t u = 0; u < state.users.size(); ++u) {
    UserBuffer& b = state.users[u];
    if (!rng.bernoulli(b.arrival_prob)) continue;
    ++b.arrived;
    ev[u].arrival = true;
    if (b.occupancy() >= b.capacity) {
      ++b.overflow_drops;
      ev[u].overflow = true;
    } else {
      b.waits.push_back(0);
    }
  }
}

std::vector<TrafficEvents> step_tti(BufferState& state, const std::vector<bool>& success,
                                    SeededRng& rng) {
  auto ev = step_service(state, success);
  step_arrivals(state, rng, ev);
  return ev;
}

DelaySurrogate delay_surrogate(const UserBuffer& b, long long n_ttis) {
  DelaySurrogate s;
  const long long drops = b.overflow_drops + b.expiry_drops;
  if (b.delivered == 0 && drops == 0) return s;
  s.no_data = false;
  if (b.delivered > 0) s.value = static_cast<double>(b.delivered_wait_sum) / b.delivered;
  if (n_ttis > 0) s.value += static_cast<double>(drops) / n_ttis;
  return s;
}

bool conserved(const UserBuffer& b) {
  return b.arrived == b.delivered + b.overflow_drops + b.expiry_drops + b.occupancy();
}

}  // namespace isac
