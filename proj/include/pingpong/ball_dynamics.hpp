#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pingpong/world.hpp"

namespace pingpong {

enum class EventKind { TableBounce, NetPlaneCross, FloorContact, NetStrike };

std::string to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& name);

// `state_at_event` is the ball state at the located contact, before the
// contact response is applied.
struct FlightEvent {
  EventKind kind = EventKind::TableBounce;
  BallState state_at_event;
  TableHalf half = TableHalf::OffTable;
};

struct Trajectory {
  std::vector<BallState> samples;
  std::vector<FlightEvent> events;
};

struct StopRule {
  enum class Kind { AfterFirstBounceApex, AfterNBounces, TimeOnly };
  Kind kind = Kind::TimeOnly;
  int n = 0;

  static StopRule after_first_bounce_apex() { return {Kind::AfterFirstBounceApex, 0}; }
  static StopRule after_n_bounces(int n) { return {Kind::AfterNBounces, n}; }
  static StopRule time_only() { return {Kind::TimeOnly, 0}; }
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, BallState last_valid)
      : std::runtime_error(what + " (last valid state: " + describe(last_valid) + ")"),
        last_valid_(last_valid) {}

  const BallState& last_valid() const { return last_valid_; }

 private:
  BallState last_valid_;
};

inline constexpr double kDefaultFlightDt = 1e-3;
inline constexpr double kMaxFlightDt = 5e-3;
// Horizontal velocity retained (and reversed) when the ball strikes the net.
inline constexpr double kNetRestitution = 0.1;

// Aerodynamic drag acceleration -k |v| v.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, 1> drag_accel(const Eigen::MatrixBase<Derived>& v,
                                                         typename Derived::Scalar k) {
  return -k * v.norm() * v;
}

// One classical RK4 step under gravity plus quadratic drag.
BallState step(const BallState& state, double dt, const BallConstants& consts);

// Same integrator without the accuracy guard on dt, used by event location
// and by the fine-step reference integrations in tests.
BallState rk4_step(const BallState& state, double dt, const BallConstants& consts);

// Table bounce: v.z -> -e v.z, horizontal components scaled by the
// tangential retention. Requires v.z < 0.
BallState apply_bounce(const BallState& state, const BallConstants& consts);

// Finds the first root of `g` along the RK4 arc starting at `s0` within
// (0, h_max], given g(s0) and g(rk4(s0, h_max)) bracket a sign change.
// Bisection runs until the bracket is narrower than `time_tol`.
template <typename Constraint>
BallState locate_crossing(const BallState& s0, double h_max, const BallConstants& consts,
                          Constraint&& g, double time_tol = 1e-10) {
  const double g0 = g(s0);
  double lo = 0.0;
  double hi = h_max;
  BallState at_hi = rk4_step(s0, h_max, consts);
  while (hi - lo > time_tol) {
    const double mid = 0.5 * (lo + hi);
    BallState s_mid = rk4_step(s0, mid, consts);
    const double g_mid = g(s_mid);
    if (g_mid != 0.0 && (g_mid > 0.0) == (g0 > 0.0)) {
      lo = mid;
    } else {
      hi = mid;
      at_hi = s_mid;
    }
  }
  return at_hi;
}

// Event-aware ball flight over the table. Integration steps never exceed
// `dt`; every contact is located by bisection and resolved in place.
class FlightModel {
 public:
  FlightModel(BallConstants consts, TableGeometry table, double dt = kDefaultFlightDt);

  const BallConstants& constants() const { return consts_; }
  const TableGeometry& table() const { return table_; }
  double dt() const { return dt_; }

  // Advances `s` toward `t_end`. Stops early at the first event, which is
  // resolved (bounce or net response applied) and returned.
  std::optional<FlightEvent> advance(BallState& s, double t_end) const;

 private:
  std::optional<FlightEvent> single_step(BallState& s, double h) const;

  BallConstants consts_;
  TableGeometry table_;
  double dt_;
};

struct SimulateOptions {
  double dt = kDefaultFlightDt;
  // Spacing of the stored samples. The integration step is shrunk so that
  // samples fall on step boundaries.
  double sample_interval = kDefaultFlightDt;
};

Trajectory simulate(const BallState& initial, const BallConstants& consts,
                    const TableGeometry& table, double horizon, StopRule stop,
                    const SimulateOptions& options = {});

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
void write_events_json(const std::filesystem::path& path, const Trajectory& traj);

// Reads `t,x,y,z[,...]` rows; extra columns are ignored.
struct TimedPosition {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
};
std::vector<TimedPosition> read_positions_csv(const std::filesystem::path& path);

}  // namespace pingpong
