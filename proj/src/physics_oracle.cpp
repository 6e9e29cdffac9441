#include "pingpong/physics_oracle.hpp"

#include <algorithm>

namespace pingpong {

PredictionBundle predict_incoming(const BallState& state, const BallConstants& consts,
                                  const TableGeometry& table, double horizon) {
  if (!state.is_finite()) throw SimulationError("predict_incoming: non-finite state", state);
  const FlightModel model(consts, table);
  PredictionBundle out;
  BallState s = state;
  const double t_end = state.t + horizon;
  bool bounced = false;

  const auto finish = [&](const BallState& apex_state) {
    out.apex = apex_state.p;
    out.t_apex = apex_state.t;
    out.t_arrive = apex_state.t - state.t;
    out.bounce_valid = true;
    return out;
  };

  while (s.t < t_end) {
    const BallState prev = s;
    if (auto ev = model.advance(s, std::min(s.t + model.dt(), t_end))) {
      if (bounced) continue;
      if (ev->kind == EventKind::TableBounce && ev->half == TableHalf::Own) {
        bounced = true;
        out.t_bounce = ev->state_at_event.t;
        // Degenerate flat rebound: the bounce point stands in for the apex.
        if (s.v.z() <= 0.0) return finish(s);
      } else if (ev->kind == EventKind::FloorContact) {
        return out;
      }
      continue;
    }
    if (bounced && prev.v.z() > 0.0 && s.v.z() <= 0.0) {
      return finish(locate_crossing(prev, s.t - prev.t, consts, [](const BallState& b) { return b.v.z(); }));
    }
  }
  return out;
}

PredictionBundle predict_return(const BallState& state_after_strike, const BallConstants& consts,
                                const TableGeometry& table, double horizon) {
  if (!state_after_strike.is_finite()) {
    throw SimulationError("predict_return: non-finite state", state_after_strike);
  }
  const FlightModel model(consts, table);
  PredictionBundle out;
  BallState s = state_after_strike;
  const double t_end = s.t + horizon;
  while (s.t < t_end) {
    auto ev = model.advance(s, t_end);
    if (!ev) break;
    const BallState& at = ev->state_at_event;
    switch (ev->kind) {
      case EventKind::NetPlaneCross:
        if (!out.net_cross_z && !out.net_strike) out.net_cross_z = at.p.z();
        break;
      case EventKind::NetStrike:
        out.net_strike = true;
        break;
      case EventKind::TableBounce:
      case EventKind::FloorContact:
        out.landing_xy = Vec2(at.p.x(), at.p.y());
        out.landing_half = ev->kind == EventKind::TableBounce ? ev->half : TableHalf::OffTable;
        out.landing_on_floor = ev->kind == EventKind::FloorContact;
        out.t_arrive = at.t - state_after_strike.t;
        return out;
    }
  }
  return out;
}

}  // namespace pingpong
