#include "pingpong/ball_dynamics.hpp"

#include <algorithm>
#include <fstream>
#include <locale>
#include <nlohmann/json.hpp>
#include <sstream>

namespace pingpong {
namespace {

struct Derivative {
  Vec3 dp;
  Vec3 dv;
};

Derivative derivative(const Vec3& v, const BallConstants& c) {
  return {v, Vec3(0.0, 0.0, -c.gravity) + drag_accel(v, c.drag_coeff_k)};
}

}  // namespace

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::TableBounce:
      return "table_bounce";
    case EventKind::NetPlaneCross:
      return "net_plane_cross";
    case EventKind::FloorContact:
      return "floor_contact";
    case EventKind::NetStrike:
      return "net_strike";
  }
  return "unknown";
}

EventKind event_kind_from_string(const std::string& name) {
  for (auto kind : {EventKind::TableBounce, EventKind::NetPlaneCross, EventKind::FloorContact,
                    EventKind::NetStrike}) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown event kind: " + name);
}

BallState rk4_step(const BallState& s, double dt, const BallConstants& c) {
  const Derivative k1 = derivative(s.v, c);
  const Derivative k2 = derivative(s.v + 0.5 * dt * k1.dv, c);
  const Derivative k3 = derivative(s.v + 0.5 * dt * k2.dv, c);
  const Derivative k4 = derivative(s.v + dt * k3.dv, c);
  BallState out;
  out.t = s.t + dt;
  out.p = s.p + (dt / 6.0) * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
  out.v = s.v + (dt / 6.0) * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
  return out;
}

BallState step(const BallState& state, double dt, const BallConstants& consts) {
  if (!(dt > 0.0 && dt <= kMaxFlightDt)) {
    throw std::invalid_argument("step: dt must lie in (0, 5e-3]");
  }
  if (!state.is_finite()) throw SimulationError("step: non-finite input state", state);
  return rk4_step(state, dt, consts);
}

BallState apply_bounce(const BallState& state, const BallConstants& consts) {
  if (!(state.v.z() < 0.0)) throw std::invalid_argument("apply_bounce: requires v.z < 0");
  BallState out = state;
  out.v.x() *= consts.tangential_retention;
  out.v.y() *= consts.tangential_retention;
  out.v.z() = -consts.restitution_normal * state.v.z();
  return out;
}

FlightModel::FlightModel(BallConstants consts, TableGeometry table, double dt)
    : consts_(consts), table_(table), dt_(dt) {
  consts_.validate();
  table_.validate();
  if (!(dt_ > 0.0 && dt_ <= kMaxFlightDt)) {
    throw std::invalid_argument("FlightModel: dt must lie in (0, 5e-3]");
  }
}

std::optional<FlightEvent> FlightModel::advance(BallState& s, double t_end) const {
  while (s.t < t_end) {
    const double h = std::min(dt_, t_end - s.t);
    const bool lands_on_end = h < dt_ || s.t + h >= t_end;
    if (auto ev = single_step(s, h)) return ev;
    if (lands_on_end) s.t = t_end;
  }
  return std::nullopt;
}

std::optional<FlightEvent> FlightModel::single_step(BallState& s, double h) const {
  const BallState s1 = rk4_step(s, h, consts_);
  if (!s1.is_finite()) throw SimulationError("flight integration produced a non-finite state", s);

  const double z_table = table_.surface_height + consts_.radius;
  const double z_floor = consts_.radius;

  std::optional<FlightEvent> best;
  const auto consider = [&](FlightEvent ev) {
    if (!best || ev.state_at_event.t < best->state_at_event.t) best = ev;
  };

  if (s.p.z() - z_table > 0.0 && s1.p.z() - z_table <= 0.0) {
    BallState at = locate_crossing(s, h, consts_, [&](const BallState& b) { return b.p.z() - z_table; });
    const TableHalf half = in_half(table_, at.p);
    if (half != TableHalf::OffTable) {
      at.p.z() = z_table;
      consider({EventKind::TableBounce, at, half});
    }
  }
  if (s.p.z() - z_floor > 0.0 && s1.p.z() - z_floor <= 0.0) {
    BallState at = locate_crossing(s, h, consts_, [&](const BallState& b) { return b.p.z() - z_floor; });
    at.p.z() = z_floor;
    consider({EventKind::FloorContact, at, in_half(table_, at.p)});
  }
  const double gx0 = s.p.x() - table_.net_x;
  const double gx1 = s1.p.x() - table_.net_x;
  if ((gx0 > 0.0 && gx1 <= 0.0) || (gx0 < 0.0 && gx1 >= 0.0)) {
    BallState at = locate_crossing(s, h, consts_, [&](const BallState& b) { return b.p.x() - table_.net_x; });
    const bool in_band = at.p.z() >= table_.surface_height && at.p.z() <= table_.net_top() &&
                         std::abs(at.p.y()) <= table_.half_width();
    consider({in_band ? EventKind::NetStrike : EventKind::NetPlaneCross, at, in_half(table_, at.p)});
  }

  if (!best) {
    s = s1;
    return std::nullopt;
  }

  const BallState& at = best->state_at_event;
  switch (best->kind) {
    case EventKind::TableBounce:
    case EventKind::FloorContact:
      s = apply_bounce(at, consts_);
      break;
    case EventKind::NetStrike:
      s = at;
      // Keep the ball on the side it arrived from so the reversed motion
      // does not register a second crossing.
      s.p.x() = table_.net_x + (gx0 > 0.0 ? 1e-9 : -1e-9);
      s.v.x() = -kNetRestitution * at.v.x();
      break;
    case EventKind::NetPlaneCross:
      s = at;
      break;
  }
  return best;
}

Trajectory simulate(const BallState& initial, const BallConstants& consts, const TableGeometry& table,
                    double horizon, StopRule stop, const SimulateOptions& options) {
  if (!(horizon > 0.0)) throw std::invalid_argument("simulate: horizon must be > 0");
  if (!(options.sample_interval > 0.0)) throw std::invalid_argument("simulate: sample_interval must be > 0");
  if (!initial.is_finite()) throw SimulationError("simulate: non-finite initial state", initial);

  const long substeps = std::max(1L, static_cast<long>(std::ceil(options.sample_interval / options.dt - 1e-9)));
  const double dt = options.sample_interval / static_cast<double>(substeps);
  const FlightModel model(consts, table, std::min(dt * (1.0 + 1e-9), kMaxFlightDt));

  Trajectory traj;
  BallState s = initial;
  traj.samples.push_back(s);
  const double t0 = initial.t;
  const double t_end = t0 + horizon;
  long grid = 0;
  int contacts = 0;
  bool bounced = false;

  while (true) {
    double t_grid = t0 + static_cast<double>(grid + 1) * dt;
    if (t_grid > t_end - 1e-9 * dt) t_grid = t_end;
    const BallState prev = s;
    if (auto ev = model.advance(s, t_grid)) {
      traj.events.push_back(*ev);
      if (ev->kind == EventKind::TableBounce || ev->kind == EventKind::FloorContact) {
        ++contacts;
        if (ev->kind == EventKind::TableBounce) bounced = true;
        if (stop.kind == StopRule::Kind::AfterNBounces && contacts >= stop.n) {
          traj.samples.push_back(s);
          return traj;
        }
        if (stop.kind == StopRule::Kind::AfterFirstBounceApex && bounced && s.v.z() <= 0.0) {
          traj.samples.push_back(s);
          return traj;
        }
      }
      continue;
    }
    ++grid;
    if (stop.kind == StopRule::Kind::AfterFirstBounceApex && bounced && prev.v.z() > 0.0 && s.v.z() <= 0.0) {
      const BallState apex =
          locate_crossing(prev, s.t - prev.t, consts, [](const BallState& b) { return b.v.z(); });
      traj.samples.push_back(apex);
      return traj;
    }
    if (s.t >= t_end) {
      traj.samples.push_back(s);
      return traj;
    }
    if (grid % substeps == 0) traj.samples.push_back(s);
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.imbue(std::locale::classic());
  out.precision(17);
  out << "t,x,y,z,vx,vy,vz\n";
  for (const auto& s : traj.samples) {
    out << s.t << ',' << s.p.x() << ',' << s.p.y() << ',' << s.p.z() << ',' << s.v.x() << ',' << s.v.y()
        << ',' << s.v.z() << '\n';
  }
}

void write_events_json(const std::filesystem::path& path, const Trajectory& traj) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& ev : traj.events) {
    const auto& s = ev.state_at_event;
    events.push_back({{"kind", to_string(ev.kind)},
                      {"t", s.t},
                      {"position", {s.p.x(), s.p.y(), s.p.z()}},
                      {"velocity", {s.v.x(), s.v.y(), s.v.z()}},
                      {"half", to_string(ev.half)}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << nlohmann::json{{"events", events}}.dump(2) << '\n';
}

std::vector<TimedPosition> read_positions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ct = column("t"), cx = column("x"), cy = column("y"), cz = column("z");

  std::vector<TimedPosition> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    ss.imbue(std::locale::classic());
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        cells.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (cells.size() < header.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": too few columns");
    }
    rows.push_back({cells[ct], Vec3(cells[cx], cells[cy], cells[cz])});
  }
  return rows;
}

}  // namespace pingpong
