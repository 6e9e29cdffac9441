#pragma once

#include <random>
#include <string>

#include "pingpong/ball_dynamics.hpp"
#include "pingpong/world.hpp"

namespace pingpong {

enum class ServeRange { Long, MidLong, Short, Mixed };

std::string to_string(ServeRange r);
ServeRange serve_range_from_string(const std::string& name);

struct SpeedInterval {
  double lo = 0.0;
  double hi = 0.0;
};

// Forward-speed magnitude interval of a serve range.
SpeedInterval forward_speed_interval(ServeRange r);

// Launch geometry and velocity boxes. Serves always travel toward +x.
struct ServeConfig {
  double launch_x = -1.0;
  double jitter_x = 0.1;
  double jitter_y = 0.1;
  double launch_clearance = 0.05;  // above the resting height on the table
  double vy_lo = -0.6;
  double vy_hi = 0.2;
  double vz_lo = 1.5;
  double vz_hi = 1.9;

  void validate() const;
};

struct ServeSpec {
  ServeRange range = ServeRange::Mixed;
  Vec3 p0 = Vec3::Zero();
  Vec3 v0 = Vec3::Zero();
  std::uint64_t seed = 0;
};

ServeSpec sample_serve(ServeRange range, std::mt19937_64& rng, const ServeConfig& cfg = {},
                       const TableGeometry& table = {}, const BallConstants& consts = {});

BallState launch_state(const ServeSpec& spec, double t0 = 0.0);

}  // namespace pingpong
