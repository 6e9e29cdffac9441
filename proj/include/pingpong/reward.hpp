#pragma once

#include <array>
#include <string>

#include "pingpong/physics_oracle.hpp"
#include "pingpong/world.hpp"

namespace pingpong {

struct RewardConfig {
  double w_reach_ee = 0.1;
  double w_reach_base = 0.05;
  double w_track_vel = 0.05;
  double w_land = 3.0;
  double w_net = 1.0;
  double w_hit_bonus = 2.0;
  double w_success_bonus = 5.0;
  double w_fall = 10.0;
  double w_action_rate = 0.005;
  double w_alive = 0.01;

  double tol_pos_ee = 0.1;
  double tol_pos_base = 0.1;
  double tol_vel = 0.3;
  double sigma_ee = 0.5;
  double sigma_base = 0.5;
  double sigma_land = 1.5;  // wide enough to grade returns that miss the table
  double net_margin = 0.1;
  double t_gate = 0.1;
  double vel_gain = 2.0;
  double v_cap = 2.0;

  // Landing target on the opponent half; defaults to its center.
  Vec2 target_xy = Vec2(-2.74 / 4.0, 0.0);

  void validate() const;
};

enum class RewardTerm {
  ReachEe,
  ReachBase,
  TrackVel,
  Land,
  Net,
  HitBonus,
  SuccessBonus,
  Fall,
  ActionRate,
  Alive,
};

inline constexpr std::size_t kRewardTerms = 10;

std::string to_string(RewardTerm term);

// Signed weight applied to a term's raw value.
double term_weight(const RewardConfig& cfg, RewardTerm term);

struct RewardBreakdown {
  std::array<double, kRewardTerms> value{};
  std::array<bool, kRewardTerms> active{};
  bool reach_gated = false;  // reach terms suppressed near the end of flight
  double total = 0.0;

  double operator[](RewardTerm t) const { return value[static_cast<std::size_t>(t)]; }
  bool is_active(RewardTerm t) const { return active[static_cast<std::size_t>(t)]; }
  void set(RewardTerm t, double v);

  // Accumulates the active terms of `other` and recomputes the total.
  void merge(const RewardBreakdown& other, const RewardConfig& cfg);
  void recompute_total(const RewardConfig& cfg);
};

// Bounded kernel exp(-d^2 / sigma^2), flat at 1 inside `tol`.
double clamped_kernel(double d, double sigma, double tol);

RewardBreakdown reach_reward(const Vec3& p_ee, const Vec2& p_base_xy, const Vec2& v_base_xy,
                             const PredictionBundle& bundle, const Vec2& p_arm_xy_offset, double t_now,
                             const RewardConfig& cfg);

// Base velocity command pointing the base toward its desired position.
Vec2 pseudo_velocity_command(const Vec2& apex_xy, const Vec2& p_arm_xy_offset, const Vec2& p_base_xy,
                             const RewardConfig& cfg);

RewardBreakdown return_reward(const PredictionBundle& return_bundle, const Vec2& target_xy,
                              const TableGeometry& table, const RewardConfig& cfg);

enum class OutcomeEvent { Hit, ValidReturn, Fall, BallMissed };

double outcome_bonus(OutcomeEvent event, const RewardConfig& cfg);

RewardBreakdown outcome_breakdown(OutcomeEvent event, const RewardConfig& cfg);

// Action-rate penalty on |a - a_prev|^2 and the per-tick alive bonus.
RewardBreakdown regularizers(double action_delta_sq, const RewardConfig& cfg);

}  // namespace pingpong
