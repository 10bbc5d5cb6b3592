// SPDX-License-Identifier: Apache-2.0
//
// Road-grid scenario: BS, moving users, stationary clutters.

#pragma once

#include <complex>
#include <vector>

#include "isac/config.hpp"
#include "isac/rng.hpp"

namespace isac {

enum class Heading { east, west, north, south };

Heading reverse(Heading h);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct UserState {
  Point pos;
  Heading heading = Heading::east;
  double speed = 0.0;  // m/s, current TTI
};

struct ClutterState {
  Point pos;
  std::complex<double> beta;  // reflection coefficient, fixed for the episode
};

struct WorldState {
  Point bs;
  std::vector<UserState> users;
  std::vector<ClutterState> clutters;
  std::vector<double> road_x;  // vertical roads
  std::vector<double> road_y;  // horizontal roads
  Point area;
};

/// Per-target quantities seen from the BS. aod is the normalized angle
/// pi*sin(bearing), bearing measured from array broadside (+x).
struct Geometry {
  double distance = 0.0;
  double bearing = 0.0;
  double aod = 0.0;
  double radial_speed = 0.0;  // positive when receding
};

inline constexpr int kPositionSets = 6;

/// Polar clutter coordinates (range m, angle rad) relative to the BS.
std::vector<std::pair<double, double>> clutter_polar();

/// Users placed from the given initial-position set, headings drawn along
/// their road. Clutters are only populated for the cluttered scenario.
WorldState init_world(const SystemConfig& cfg, Scenario scenario, SeededRng& rng,
                      int position_set);

/// Moves every user by speed*dt along the road network, then redraws speeds.
void advance(WorldState& world, const SystemConfig& cfg, SeededRng& rng, double dt);

/// Moves one user a distance along the roads, turning at intersections and
/// reversing at the area boundary. Exposed for tests.
void move_along_roads(const WorldState& world, UserState& user, double distance,
                      SeededRng& rng);

double draw_speed(const SystemConfig& cfg, SeededRng& rng);

Geometry user_geometry(const WorldState& world, int user);
Geometry point_geometry(const WorldState& world, Point p, Point velocity = {});

/// Radar-equation magnitude of the round-trip coefficient.
double radar_amplitude(double wavelength, double rcs_m2, double distance);

}  // namespace isac
