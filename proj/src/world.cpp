// SPDX-License-Identifier: Apache-2.0

#include "isac/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace isac {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSnap = 1e-9;

struct InitialPair {
  Point u1, u2;
};

// Sets 0-3 train, 4-5 test. In every set user 1 is the closer one.
const std::array<InitialPair, kPositionSets>& initial_positions() {
  constexpr double a = 100.0 / 3.0;
  constexpr double b = 200.0 / 3.0;
  static const std::array<InitialPair, kPositionSets> sets = {{
      {{a, 45.0}, {70.0, b}},
      {{25.0, a}, {b, 80.0}},
      {{a, 60.0}, {85.0, a}},
      {{40.0, b}, {b, 20.0}},
      {{a, 25.0}, {80.0, b}},
      {{15.0, b}, {b, 55.0}},
  }};
  return sets;
}

bool on_road(double v, const std::vector<double>& roads) {
  for (double r : roads)
    if (std::abs(v - r) < 1e-6) return true;
  return false;
}

Point unit(Heading h) {
  switch (h) {
    case Heading::east: return {1, 0};
    case Heading::west: return {-1, 0};
    case Heading::north: return {0, 1};
    case Heading::south: return {0, -1};
  }
  return {0, 0};
}

}  // namespace

Heading reverse(Heading h) {
  switch (h) {
    case Heading::east: return Heading::west;
    case Heading::west: return Heading::east;
    case Heading::north: return Heading::south;
    case Heading::south: return Heading::north;
  }
  return h;
}

std::vector<std::pair<double, double>> clutter_polar() {
  return {{13.0, kPi / 5.0}, {20.0, 3.0 * kPi / 14.0}, {29.0, 9.0 * kPi / 17.0},
          {19.0, 15.0 * kPi / 17.0}};
}

double radar_amplitude(double wavelength, double rcs_m2, double distance) {
  return std::sqrt(wavelength * wavelength * rcs_m2 / std::pow(4.0 * kPi, 3)) /
         (distance * distance);
}

double draw_speed(const SystemConfig& cfg, SeededRng& rng) {
  return std::max(0.0, rng.normal(cfg.mean_speed_mps, std::sqrt(cfg.speed_variance)));
}

WorldState init_world(const SystemConfig& cfg, Scenario scenario, SeededRng& rng,
                      int position_set) {
  if (position_set < 0 || position_set >= kPositionSets)
    throw std::out_of_range("init_world: position set " + std::to_string(position_set) +
                            " out of range [0," + std::to_string(kPositionSets) + ")");
  if (cfg.n_users != 2)
    throw ConfigError("n_users: the road scenario defines initial positions for 2 users");

  WorldState w;
  w.bs = {cfg.bs_position_m.first, cfg.bs_position_m.second};
  w.area = {cfg.area_m.first, cfg.area_m.second};
  w.road_x = {w.area.x / 3.0, 2.0 * w.area.x / 3.0};
  w.road_y = {w.area.y / 3.0, 2.0 * w.area.y / 3.0};

  const InitialPair& p = initial_positions()[position_set];
  for (Point pos : {p.u1, p.u2}) {
    UserState u;
    u.pos = pos;
    const bool vertical = on_road(pos.x, w.road_x);
    const bool horizontal = on_road(pos.y, w.road_y);
    if (vertical && horizontal) {
      u.heading = static_cast<Heading>(rng.uniform_int(0, 3));
    } else if (vertical) {
      u.heading = rng.bernoulli(0.5) ? Heading::north : Heading::south;
    } else {
      u.heading = rng.bernoulli(0.5) ? Heading::east : Heading::west;
    }
    u.speed = draw_speed(cfg, rng);
    w.users.push_back(u);
  }

  if (scenario == Scenario::cluttered) {
    for (auto [r, ang] : clutter_polar()) {
      ClutterState c;
      c.pos = {w.bs.x + r * std::cos(ang), w.bs.y + r * std::sin(ang)};
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      c.beta = std::polar(radar_amplitude(cfg.wavelength_m(), cfg.clutter_rcs_m2, r), phase);
      w.clutters.push_back(c);
    }
  }
  return w;
}

void move_along_roads(const WorldState& w, UserState& u, double distance, SeededRng& rng) {
  double remaining = distance;
  int guard = 0;
  while (remaining > 0.0) {
    if (++guard > 1000) throw std::logic_error("move_along_roads: no progress");
    const Point d = unit(u.heading);
    const bool along_x = d.x != 0.0;
    const double coord = along_x ? u.pos.x : u.pos.y;
    const double sign = along_x ? d.x : d.y;
    const double edge = sign > 0 ? (along_x ? w.area.x : w.area.y) : 0.0;
    const auto& crossings = along_x ? w.road_x : w.road_y;

    double next = edge;
    bool at_edge = true;
    for (double r : crossings) {
      if (sign * (r - coord) > kSnap && sign * (r - next) < 0) {
        next = r;
        at_edge = false;
      }
    }
    const double gap = std::abs(next - coord);
    if (remaining < gap) {
      (along_x ? u.pos.x : u.pos.y) += sign * remaining;
      return;
    }
    (along_x ? u.pos.x : u.pos.y) = next;
    remaining -= gap;
    if (at_edge) {
      u.heading = reverse(u.heading);
    } else {
      std::array<Heading, 3> others{};
      int n = 0;
      for (int h = 0; h < 4; ++h)
        if (static_cast<Heading>(h) != u.heading) others[n++] = static_cast<Heading>(h);
      u.heading = others[rng.uniform_int(0, 2)];
    }
  }
}

void advance(WorldState& w, const SystemConfig& cfg, SeededRng& rng, double dt) {
  if (!(dt > 0)) throw std::invalid_argument("advance: dt must be positive");
  for (auto& u : w.users) {
    move_along_roads(w, u, u.speed * dt, rng);
    u.speed = draw_speed(cfg, rng);
  }
}

Geometry point_geometry(const WorldState& w, Point p, Point velocity) {
  const double dx = p.x - w.bs.x;
  const double dy = p.y - w.bs.y;
  const double d = std::hypot(dx, dy);
  if (d < 1e-9) throw std::domain_error("geometry: target collocated with the BS");
  Geometry g;
  g.distance = d;
  g.bearing = std::atan2(dy, dx);
  g.aod = kPi * std::sin(g.bearing);
  g.radial_speed = (velocity.x * dx + velocity.y * dy) / d;
  return g;
}

Geometry user_geometry(const WorldState& w, int user) {
  const UserState& u = w.users.at(user);
  const Point d = unit(u.heading);
  return point_geometry(w, u.pos, {d.x * u.speed, d.y * u.speed});
}

}  // namespace isac
