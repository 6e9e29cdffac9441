#include "pingpong/serve.hpp"

#include <stdexcept>

namespace pingpong {

std::string to_string(ServeRange r) {
  switch (r) {
    case ServeRange::Long:
      return "long";
    case ServeRange::MidLong:
      return "mid-long";
    case ServeRange::Short:
      return "short";
    case ServeRange::Mixed:
      return "mixed";
  }
  return "unknown";
}

ServeRange serve_range_from_string(const std::string& name) {
  for (auto r : {ServeRange::Long, ServeRange::MidLong, ServeRange::Short, ServeRange::Mixed}) {
    if (to_string(r) == name) return r;
  }
  if (name == "midlong" || name == "mid_long") return ServeRange::MidLong;
  throw std::invalid_argument("unknown serve range: " + name);
}

SpeedInterval forward_speed_interval(ServeRange r) {
  switch (r) {
    case ServeRange::Long:
      return {6.2, 6.5};
    case ServeRange::MidLong:
      return {5.7, 6.2};
    case ServeRange::Short:
      return {5.2, 5.7};
    case ServeRange::Mixed:
      return {5.2, 6.5};
  }
  throw std::invalid_argument("bad serve range");
}

void ServeConfig::validate() const {
  if (!(jitter_x >= 0.0 && jitter_y >= 0.0 && launch_clearance >= 0.0)) {
    throw std::invalid_argument("serve: jitters and clearance must be >= 0");
  }
  if (!(vy_lo <= vy_hi && vz_lo <= vz_hi)) throw std::invalid_argument("serve: empty velocity interval");
}

ServeSpec sample_serve(ServeRange range, std::mt19937_64& rng, const ServeConfig& cfg, const TableGeometry& table,
                       const BallConstants& consts) {
  const SpeedInterval speed = forward_speed_interval(range);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto between = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  ServeSpec spec;
  spec.range = range;
  spec.p0 = Vec3(cfg.launch_x + between(-cfg.jitter_x, cfg.jitter_x), between(-cfg.jitter_y, cfg.jitter_y),
                 table.surface_height + consts.radius + cfg.launch_clearance);
  spec.v0 = Vec3(between(speed.lo, speed.hi), between(cfg.vy_lo, cfg.vy_hi), between(cfg.vz_lo, cfg.vz_hi));
  return spec;
}

BallState launch_state(const ServeSpec& spec, double t0) { return {t0, spec.p0, spec.v0}; }

}  // namespace pingpong
