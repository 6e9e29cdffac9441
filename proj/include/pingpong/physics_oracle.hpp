#pragma once

#include <optional>

#include "pingpong/ball_dynamics.hpp"
#include "pingpong/world.hpp"

namespace pingpong {

inline constexpr double kOracleHorizon = 2.0;

// Noise-free predictions from rolling the flight model forward.
//
// For incoming balls: the post-bounce apex after the first bounce on the
// robot half (t_apex and t_arrive are filled with it). For returned balls:
// the net-plane crossing height and the first surface contact.
struct PredictionBundle {
  std::optional<Vec3> apex;
  std::optional<double> t_apex;  // absolute simulation time
  std::optional<double> t_bounce;
  std::optional<Vec2> landing_xy;
  std::optional<TableHalf> landing_half;
  bool landing_on_floor = false;
  std::optional<double> net_cross_z;
  bool net_strike = false;
  std::optional<double> t_arrive;
  bool bounce_valid = false;
};

// Precondition: the ball travels toward the robot half and has not bounced
// there yet. Returns bounce_valid = false when no robot-half bounce happens
// within the horizon or the ball is already past its apex.
PredictionBundle predict_incoming(const BallState& state, const BallConstants& consts,
                                  const TableGeometry& table, double horizon = kOracleHorizon);

// Outgoing ball right after a paddle strike.
PredictionBundle predict_return(const BallState& state_after_strike, const BallConstants& consts,
                                const TableGeometry& table, double horizon = kOracleHorizon);

}  // namespace pingpong
