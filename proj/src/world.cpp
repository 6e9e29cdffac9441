#include "pingpong/world.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pingpong {

bool WorldFrame::is_valid(double tol) const {
  const auto unit = [tol](const Vec3& a) { return std::abs(a.norm() - 1.0) <= tol; };
  if (!unit(x_axis) || !unit(y_axis) || !unit(z_axis)) return false;
  if (std::abs(x_axis.dot(y_axis)) > tol || std::abs(y_axis.dot(z_axis)) > tol ||
      std::abs(z_axis.dot(x_axis)) > tol) {
    return false;
  }
  return (x_axis.cross(y_axis) - z_axis).norm() <= tol;
}

void TableGeometry::validate() const {
  if (!(length > 0.0) || !(width > 0.0) || !(surface_height > 0.0) || !(net_height > 0.0)) {
    throw std::invalid_argument("table: length, width, surface_height and net_height must be > 0");
  }
  if (!std::isfinite(net_x)) throw std::invalid_argument("table: net_x must be finite");
}

std::string to_string(TableHalf half) {
  switch (half) {
    case TableHalf::Own:
      return "own";
    case TableHalf::Opponent:
      return "opponent";
    case TableHalf::OffTable:
      return "off_table";
  }
  return "unknown";
}

void BallConstants::validate() const {
  if (!(mass > 0.0) || !(radius > 0.0) || !(gravity > 0.0)) {
    throw std::invalid_argument("ball: mass, radius and gravity must be > 0");
  }
  if (!(drag_coeff_k >= 0.0)) throw std::invalid_argument("ball: drag_coeff_k must be >= 0");
  if (!(restitution_normal > 0.0 && restitution_normal <= 1.0)) {
    throw std::invalid_argument("ball: restitution_normal must lie in (0, 1]");
  }
  if (!(tangential_retention > 0.0 && tangential_retention <= 1.0)) {
    throw std::invalid_argument("ball: tangential_retention must lie in (0, 1]");
  }
}

bool BallState::is_finite() const { return std::isfinite(t) && p.allFinite() && v.allFinite(); }

std::string describe(const BallState& s) {
  std::ostringstream os;
  os.precision(17);
  os << "t=" << s.t << " p=(" << s.p.x() << ", " << s.p.y() << ", " << s.p.z() << ") v=("
     << s.v.x() << ", " << s.v.y() << ", " << s.v.z() << ")";
  return os.str();
}

TableGeometry make_standard_table() { return TableGeometry{}; }

TableHalf in_half(const TableGeometry& table, const Vec3& p) {
  const bool in_footprint = std::abs(p.y()) <= table.half_width() && p.x() >= table.opponent_end() &&
                            p.x() <= table.own_end();
  if (!in_footprint) return TableHalf::OffTable;
  return p.x() > table.net_x ? TableHalf::Own : TableHalf::Opponent;
}

}  // namespace pingpong
