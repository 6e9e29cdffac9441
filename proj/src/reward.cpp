#include "pingpong/reward.hpp"

#include <cmath>
#include <stdexcept>

namespace pingpong {

void RewardConfig::validate() const {
  for (double w : {w_reach_ee, w_reach_base, w_track_vel, w_land, w_net, w_hit_bonus, w_success_bonus, w_fall,
                   w_action_rate, w_alive}) {
    if (!(w >= 0.0)) throw std::invalid_argument("reward: weights must be >= 0");
  }
  for (double s : {sigma_ee, sigma_base, sigma_land, tol_vel, vel_gain, v_cap}) {
    if (!(s > 0.0)) throw std::invalid_argument("reward: scales must be > 0");
  }
  if (!(tol_pos_ee >= 0.0 && tol_pos_base >= 0.0 && t_gate >= 0.0)) {
    throw std::invalid_argument("reward: tolerances and gate must be >= 0");
  }
  if (!(net_margin > 0.0 && net_margin < 0.5)) throw std::invalid_argument("reward: net_margin must lie in (0, 0.5)");
  if (!target_xy.allFinite()) throw std::invalid_argument("reward: non-finite landing target");
}

std::string to_string(RewardTerm term) {
  switch (term) {
    case RewardTerm::ReachEe:
      return "reach_ee";
    case RewardTerm::ReachBase:
      return "reach_base";
    case RewardTerm::TrackVel:
      return "track_vel";
    case RewardTerm::Land:
      return "land";
    case RewardTerm::Net:
      return "net";
    case RewardTerm::HitBonus:
      return "hit_bonus";
    case RewardTerm::SuccessBonus:
      return "success_bonus";
    case RewardTerm::Fall:
      return "fall";
    case RewardTerm::ActionRate:
      return "action_rate";
    case RewardTerm::Alive:
      return "alive";
  }
  return "unknown";
}

double term_weight(const RewardConfig& cfg, RewardTerm term) {
  switch (term) {
    case RewardTerm::ReachEe:
      return cfg.w_reach_ee;
    case RewardTerm::ReachBase:
      return cfg.w_reach_base;
    case RewardTerm::TrackVel:
      return cfg.w_track_vel;
    case RewardTerm::Land:
      return cfg.w_land;
    case RewardTerm::Net:
      return cfg.w_net;
    case RewardTerm::HitBonus:
      return cfg.w_hit_bonus;
    case RewardTerm::SuccessBonus:
      return cfg.w_success_bonus;
    case RewardTerm::Fall:
      return -cfg.w_fall;
    case RewardTerm::ActionRate:
      return -cfg.w_action_rate;
    case RewardTerm::Alive:
      return cfg.w_alive;
  }
  return 0.0;
}

void RewardBreakdown::set(RewardTerm t, double v) {
  value[static_cast<std::size_t>(t)] = v;
  active[static_cast<std::size_t>(t)] = true;
}

void RewardBreakdown::recompute_total(const RewardConfig& cfg) {
  total = 0.0;
  for (std::size_t i = 0; i < kRewardTerms; ++i) {
    if (active[i]) total += term_weight(cfg, static_cast<RewardTerm>(i)) * value[i];
  }
}

void RewardBreakdown::merge(const RewardBreakdown& other, const RewardConfig& cfg) {
  for (std::size_t i = 0; i < kRewardTerms; ++i) {
    if (!other.active[i]) continue;
    value[i] = active[i] ? value[i] + other.value[i] : other.value[i];
    active[i] = true;
  }
  reach_gated = reach_gated || other.reach_gated;
  recompute_total(cfg);
}

double clamped_kernel(double d, double sigma, double tol) {
  if (d <= tol) return 1.0;
  return std::exp(-(d * d) / (sigma * sigma));
}

Vec2 pseudo_velocity_command(const Vec2& apex_xy, const Vec2& p_arm_xy_offset, const Vec2& p_base_xy,
                             const RewardConfig& cfg) {
  Vec2 cmd = cfg.vel_gain * (apex_xy - p_arm_xy_offset - p_base_xy);
  const double n = cmd.norm();
  if (n > cfg.v_cap) cmd *= cfg.v_cap / n;
  return cmd;
}

RewardBreakdown reach_reward(const Vec3& p_ee, const Vec2& p_base_xy, const Vec2& v_base_xy,
                             const PredictionBundle& bundle, const Vec2& p_arm_xy_offset, double t_now,
                             const RewardConfig& cfg) {
  RewardBreakdown out;
  if (!bundle.bounce_valid || !bundle.apex || !bundle.t_apex) return out;
  if (!(t_now < *bundle.t_apex - cfg.t_gate)) {
    out.reach_gated = true;
    return out;
  }
  const Vec3& apex = *bundle.apex;
  const Vec2 apex_xy = apex.head<2>();
  out.set(RewardTerm::ReachEe, clamped_kernel((p_ee - apex).norm(), cfg.sigma_ee, cfg.tol_pos_ee));
  out.set(RewardTerm::ReachBase,
          clamped_kernel((p_base_xy - apex_xy + p_arm_xy_offset).norm(), cfg.sigma_base, cfg.tol_pos_base));
  const Vec2 v_cmd = pseudo_velocity_command(apex_xy, p_arm_xy_offset, p_base_xy, cfg);
  out.set(RewardTerm::TrackVel, clamped_kernel((v_base_xy - v_cmd).norm(), cfg.tol_vel, cfg.tol_vel));
  out.recompute_total(cfg);
  return out;
}

RewardBreakdown return_reward(const PredictionBundle& return_bundle, const Vec2& target_xy,
                              const TableGeometry& table, const RewardConfig& cfg) {
  RewardBreakdown out;
  double r_land = 0.0;
  if (return_bundle.landing_xy) {
    const double d = (*return_bundle.landing_xy - target_xy).norm();
    r_land = std::exp(-(d * d) / (cfg.sigma_land * cfg.sigma_land));
  }
  double r_net = 0.0;
  if (return_bundle.net_cross_z) {
    const double clear = table.net_top() + cfg.net_margin;
    const double gap = *return_bundle.net_cross_z - clear;
    r_net = gap >= 0.0 ? 1.0 : std::exp(-(gap * gap) / (cfg.net_margin * cfg.net_margin));
  }
  out.set(RewardTerm::Land, r_land);
  out.set(RewardTerm::Net, r_net);
  out.recompute_total(cfg);
  return out;
}

double outcome_bonus(OutcomeEvent event, const RewardConfig& cfg) {
  switch (event) {
    case OutcomeEvent::Hit:
      return cfg.w_hit_bonus;
    case OutcomeEvent::ValidReturn:
      return cfg.w_success_bonus;
    case OutcomeEvent::Fall:
      return -cfg.w_fall;
    case OutcomeEvent::BallMissed:
      return 0.0;
  }
  return 0.0;
}

RewardBreakdown outcome_breakdown(OutcomeEvent event, const RewardConfig& cfg) {
  RewardBreakdown out;
  switch (event) {
    case OutcomeEvent::Hit:
      out.set(RewardTerm::HitBonus, 1.0);
      break;
    case OutcomeEvent::ValidReturn:
      out.set(RewardTerm::SuccessBonus, 1.0);
      break;
    case OutcomeEvent::Fall:
      out.set(RewardTerm::Fall, 1.0);
      break;
    case OutcomeEvent::BallMissed:
      break;
  }
  out.recompute_total(cfg);
  return out;
}

RewardBreakdown regularizers(double action_delta_sq, const RewardConfig& cfg) {
  RewardBreakdown out;
  out.set(RewardTerm::ActionRate, action_delta_sq);
  out.set(RewardTerm::Alive, 1.0);
  out.recompute_total(cfg);
  return out;
}

}  // namespace pingpong
