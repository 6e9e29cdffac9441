#include <doctest.h>

#include <cmath>
#include <random>

#include "pingpong/reward.hpp"

using namespace pingpong;

namespace {

PredictionBundle bundle_at(const Vec3& apex, double t_apex) {
  PredictionBundle b;
  b.apex = apex;
  b.t_apex = t_apex;
  b.bounce_valid = true;
  return b;
}

const Vec2 kArm(-0.35, -0.15);

}  // namespace

TEST_CASE("reach kernel examples") {
  const RewardConfig cfg;
  const Vec3 apex(1.6, -0.1, 0.95);
  const auto b = bundle_at(apex, 1.0);
  const Vec2 base = apex.head<2>() - kArm;
  const auto at_target = reach_reward(apex, base, Vec2::Zero(), b, kArm, 0.5, cfg);
  CHECK(at_target[RewardTerm::ReachEe] == 1.0);
  CHECK(at_target[RewardTerm::ReachBase] == 1.0);
  CHECK(at_target[RewardTerm::TrackVel] == 1.0);

  const auto one_sigma = reach_reward(apex + Vec3(0, 0, cfg.sigma_ee), base, Vec2::Zero(), b, kArm, 0.5, cfg);
  CHECK(one_sigma[RewardTerm::ReachEe] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("reach terms switch off within t_gate of the apex") {
  const RewardConfig cfg;
  const auto b = bundle_at(Vec3(1.6, 0.0, 0.95), 1.0);
  const auto early = reach_reward(Vec3(1.5, 0, 1), Vec2(2, 0), Vec2::Zero(), b, kArm, 1.0 - cfg.t_gate - 1e-9, cfg);
  CHECK(early.is_active(RewardTerm::ReachEe));
  CHECK_FALSE(early.reach_gated);
  for (double t : {1.0 - cfg.t_gate, 1.0 - 0.5 * cfg.t_gate, 1.0, 1.3}) {
    const auto late = reach_reward(Vec3(1.5, 0, 1), Vec2(2, 0), Vec2::Zero(), b, kArm, t, cfg);
    CHECK(late.reach_gated);
    CHECK_FALSE(late.is_active(RewardTerm::ReachEe));
    CHECK_FALSE(late.is_active(RewardTerm::ReachBase));
    CHECK_FALSE(late.is_active(RewardTerm::TrackVel));
    CHECK(late.total == 0.0);
  }
  PredictionBundle invalid;
  CHECK(reach_reward(Vec3::Zero(), Vec2::Zero(), Vec2::Zero(), invalid, kArm, 0.0, cfg).total == 0.0);
}

TEST_CASE("return reward examples") {
  const RewardConfig cfg;
  const TableGeometry table = make_standard_table();
  PredictionBundle exact;
  exact.landing_xy = cfg.target_xy;
  exact.net_cross_z = table.net_top() + cfg.net_margin;
  const auto r = return_reward(exact, cfg.target_xy, table, cfg);
  CHECK(r[RewardTerm::Land] == 1.0);
  CHECK(r[RewardTerm::Net] == 1.0);

  PredictionBundle tape = exact;
  tape.net_cross_z = table.net_top();
  CHECK(return_reward(tape, cfg.target_xy, table, cfg)[RewardTerm::Net] == doctest::Approx(std::exp(-1.0)));

  PredictionBundle backward;
  backward.landing_xy = Vec2(3.2, 0.1);
  backward.landing_on_floor = true;
  const auto rb = return_reward(backward, cfg.target_xy, table, cfg);
  CHECK(rb[RewardTerm::Net] == 0.0);
  const double d = (Vec2(3.2, 0.1) - cfg.target_xy).norm();
  CHECK(rb[RewardTerm::Land] == doctest::Approx(std::exp(-d * d / (cfg.sigma_land * cfg.sigma_land))));
  CHECK(rb[RewardTerm::Land] < 0.01);
}

TEST_CASE("outcome bonuses") {
  const RewardConfig cfg;
  CHECK(outcome_bonus(OutcomeEvent::Hit, cfg) == 2.0);
  CHECK(outcome_bonus(OutcomeEvent::ValidReturn, cfg) == 5.0);
  CHECK(outcome_bonus(OutcomeEvent::Fall, cfg) == -10.0);
  CHECK(outcome_bonus(OutcomeEvent::BallMissed, cfg) == 0.0);
  for (auto ev : {OutcomeEvent::Hit, OutcomeEvent::ValidReturn, OutcomeEvent::Fall, OutcomeEvent::BallMissed}) {
    CHECK(outcome_breakdown(ev, cfg).total == outcome_bonus(ev, cfg));
  }
}

TEST_CASE("kernel terms stay in [0, 1] and the breakdown identity holds") {
  const RewardConfig cfg;
  const TableGeometry table = make_standard_table();
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 5000; ++i) {
    const Vec3 apex(u(rng), u(rng), 0.76 + std::abs(u(rng)));
    const auto b = bundle_at(apex, 1.0);
    RewardBreakdown r = reach_reward(Vec3(u(rng), u(rng), u(rng)), Vec2(u(rng), u(rng)), Vec2(u(rng), u(rng)), b,
                                     kArm, 0.0, cfg);
    PredictionBundle ret;
    ret.landing_xy = Vec2(u(rng), u(rng));
    ret.net_cross_z = 0.76 + std::abs(u(rng));
    r.merge(return_reward(ret, cfg.target_xy, table, cfg), cfg);
    r.merge(regularizers(std::abs(u(rng)), cfg), cfg);
    r.merge(outcome_breakdown(OutcomeEvent::Hit, cfg), cfg);
    for (auto t : {RewardTerm::ReachEe, RewardTerm::ReachBase, RewardTerm::TrackVel, RewardTerm::Land,
                   RewardTerm::Net}) {
      CHECK(r[t] >= 0.0);
      CHECK(r[t] <= 1.0);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < kRewardTerms; ++k) {
      if (r.active[k]) sum += term_weight(cfg, static_cast<RewardTerm>(k)) * r.value[k];
    }
    CHECK(r.total == sum);
  }
}

TEST_CASE("kernels are monotone in the error") {
  const RewardConfig cfg;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = u(rng), b = u(rng);
    const double lo = std::min(a, b), hi = std::max(a, b);
    CHECK(clamped_kernel(lo, cfg.sigma_ee, cfg.tol_pos_ee) >= clamped_kernel(hi, cfg.sigma_ee, cfg.tol_pos_ee));
  }
}

TEST_CASE("the tolerance ball is a plateau") {
  const RewardConfig cfg;
  const Vec3 apex(1.6, -0.1, 0.95);
  const auto b = bundle_at(apex, 1.0);
  const Vec2 base = apex.head<2>() - kArm;
  const Vec2 v_cmd = pseudo_velocity_command(apex.head<2>(), kArm, base, cfg);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto inside = [&](double radius, int dim) {
    Eigen::VectorXd d(dim);
    for (int k = 0; k < dim; ++k) d(k) = n(rng);
    return Eigen::VectorXd(d.normalized() * radius * std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  };
  const auto ref = reach_reward(apex, base, v_cmd, b, kArm, 0.0, cfg);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p = apex + Vec3(inside(cfg.tol_pos_ee, 3));
    const Vec2 q = base + Vec2(inside(cfg.tol_pos_base, 2));
    const Vec2 v = pseudo_velocity_command(apex.head<2>(), kArm, q, cfg) + Vec2(inside(cfg.tol_vel, 2));
    const auto r = reach_reward(p, q, v, b, kArm, 0.0, cfg);
    CHECK(r[RewardTerm::ReachEe] == ref[RewardTerm::ReachEe]);
    CHECK(r[RewardTerm::ReachBase] == ref[RewardTerm::ReachBase]);
    CHECK(r[RewardTerm::TrackVel] == ref[RewardTerm::TrackVel]);
  }
}

TEST_CASE("return reward is dense away from the target") {
  const RewardConfig cfg;
  const TableGeometry table = make_standard_table();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    PredictionBundle b;
    b.landing_xy = cfg.target_xy + Vec2(u(rng), u(rng));
    const double r0 = return_reward(b, cfg.target_xy, table, cfg)[RewardTerm::Land];
    PredictionBundle closer = b;
    closer.landing_xy = cfg.target_xy + 0.9 * (*b.landing_xy - cfg.target_xy);
    const double r1 = return_reward(closer, cfg.target_xy, table, cfg)[RewardTerm::Land];
    CHECK(std::isfinite(r0));
    CHECK(r1 > r0);
  }
}

TEST_CASE("config validation") {
  RewardConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.net_margin = 0.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = RewardConfig{};
  cfg.w_land = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
