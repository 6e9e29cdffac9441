#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <string>

namespace pingpong {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// World frame: origin at the table center on the playing surface, net plane
// at x = 0, +x toward the robot half, +z up.
struct WorldFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 x_axis = Vec3::UnitX();
  Vec3 y_axis = Vec3::UnitY();
  Vec3 z_axis = Vec3::UnitZ();

  // Orthonormal and right-handed within `tol`.
  bool is_valid(double tol = 1e-12) const;
};

struct TableGeometry {
  double length = 2.74;
  double width = 1.525;
  double surface_height = 0.76;
  double net_height = 0.1525;
  double net_x = 0.0;

  void validate() const;

  double own_end() const { return net_x + 0.5 * length; }
  double opponent_end() const { return net_x - 0.5 * length; }
  double half_width() const { return 0.5 * width; }
  double net_top() const { return surface_height + net_height; }
};

enum class TableHalf { Own, Opponent, OffTable };

std::string to_string(TableHalf half);

// Lumped ball parameters. Drag acceleration is -drag_coeff_k * |v| * v.
struct BallConstants {
  double mass = 2.7e-3;
  double radius = 0.02;
  double drag_coeff_k = 0.112;
  double restitution_normal = 0.90;
  double tangential_retention = 0.80;
  double gravity = 9.81;

  void validate() const;
};

struct BallState {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  bool is_finite() const;
};

std::string describe(const BallState& s);

TableGeometry make_standard_table();

// Classifies the horizontal position of `p` against the table footprint.
// A point exactly on the net plane belongs to the opponent half.
TableHalf in_half(const TableGeometry& table, const Vec3& p);

}  // namespace pingpong
