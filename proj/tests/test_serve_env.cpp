#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pingpong/serve_env.hpp"

using namespace pingpong;

namespace {

EnvParams quiet_params() {
  EnvParams p;
  p.env.use_predictor = false;
  return p;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("serve sampling stays inside the declared boxes") {
  std::mt19937_64 rng(1);
  const ServeConfig cfg;
  for (int i = 0; i < 10000; ++i) {
    const ServeSpec s = sample_serve(ServeRange::Mixed, rng);
    CHECK(s.v0.x() >= 5.2);
    CHECK(s.v0.x() <= 6.5);
    CHECK(s.v0.y() >= cfg.vy_lo);
    CHECK(s.v0.y() <= cfg.vy_hi);
    CHECK(s.v0.z() >= cfg.vz_lo);
    CHECK(s.v0.z() <= cfg.vz_hi);
    CHECK(std::abs(s.p0.x() - cfg.launch_x) <= cfg.jitter_x);
    CHECK(std::abs(s.p0.y()) <= cfg.jitter_y);
  }
  for (auto r : {ServeRange::Long, ServeRange::MidLong, ServeRange::Short}) {
    const SpeedInterval iv = forward_speed_interval(r);
    for (int i = 0; i < 1000; ++i) {
      const double vx = sample_serve(r, rng).v0.x();
      CHECK(vx >= iv.lo);
      CHECK(vx <= iv.hi);
    }
  }
  std::mt19937_64 a(42), b(42);
  const ServeSpec sa = sample_serve(ServeRange::Short, a);
  const ServeSpec sb = sample_serve(ServeRange::Short, b);
  CHECK(sa.p0 == sb.p0);
  CHECK(sa.v0 == sb.v0);
  CHECK(serve_range_from_string("mid-long") == ServeRange::MidLong);
  CHECK_THROWS_AS(serve_range_from_string("lob"), std::invalid_argument);
}

TEST_CASE("every mixed serve reaches the robot half and its apex in time") {
  std::mt19937_64 rng(2);
  const TableGeometry table = make_standard_table();
  const BallConstants ball;
  std::vector<double> times;
  for (int i = 0; i < 1000; ++i) {
    const PredictionBundle b = predict_incoming(launch_state(sample_serve(ServeRange::Mixed, rng)), ball, table);
    REQUIRE(b.bounce_valid);
    CHECK(*b.t_arrive < 0.6);
    times.push_back(*b.t_arrive);
  }
  CHECK(median(times) < 0.55);
}

TEST_CASE("short serves bounce nearer the net than long serves") {
  const TableGeometry table = make_standard_table();
  const BallConstants ball;
  std::vector<double> short_x, long_x;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const FlightModel model(ball, table);
    for (auto* out : {&short_x, &long_x}) {
      BallState s = launch_state(sample_serve(out == &short_x ? ServeRange::Short : ServeRange::Long, rng));
      while (true) {
        const auto ev = model.advance(s, s.t + 1.0);
        if (ev && ev->kind == EventKind::TableBounce) {
          out->push_back(ev->state_at_event.p.x());
          break;
        }
      }
    }
  }
  CHECK(median(short_x) < median(long_x));
  CHECK(median(short_x) > 0.0);
}

TEST_CASE("contact law examples") {
  ContactConfig elastic;
  elastic.restitution = 1.0;
  const Vec3 v(4.0, 0.5, -1.0);
  const Vec3 mirrored = paddle_contact_velocity(v, Vec3::Zero(), -v.normalized(), elastic);
  CHECK(mirrored.norm() == doctest::Approx(v.norm()).epsilon(1e-12));
  CHECK((mirrored + v).norm() < 1e-12);

  const ContactConfig c;
  const Vec3 out = paddle_contact_velocity(Vec3(5, 0, 0), Vec3(-3, 0, 0), Vec3(-1, 0, 0), c);
  CHECK(out.x() == doctest::Approx(-3.0 - 0.85 * 8.0));
  CHECK(out.norm() <= c.out_speed_cap);
  const Vec3 capped = paddle_contact_velocity(Vec3(6, 0, 0), Vec3(-5, 0, 0), Vec3(-1, 0, 0), c);
  CHECK(capped.norm() == doctest::Approx(c.out_speed_cap));
  // Separating motion is left alone.
  CHECK(paddle_contact_velocity(Vec3(-2, 0, 0), Vec3::Zero(), Vec3(-1, 0, 0), c) == Vec3(-2, 0, 0));
  // A fast swing returns the ball faster than it arrived.
  CHECK(paddle_contact_velocity(Vec3(5, 0, 0), Vec3(-2, 0, 0), Vec3(-1, 0, 0), c).norm() > 5.0);
}

TEST_CASE("resets fill the start box uniformly and reproducibly") {
  const EnvParams p = quiet_params();
  ServeEnv env(p, nullptr, 11);
  int counts[4][4] = {};
  const double x0 = p.table.own_end();
  for (int i = 0; i < 1000; ++i) {
    env.reset();
    const Vec2 b = env.agent().base_xy;
    REQUIRE(b.x() >= x0);
    REQUIRE(b.x() <= x0 + p.agent.reset_depth);
    REQUIRE(std::abs(b.y()) <= p.agent.reset_half_width);
    const int ix = std::min(3, static_cast<int>((b.x() - x0) / p.agent.reset_depth * 4));
    const int iy = std::min(3, static_cast<int>((b.y() + p.agent.reset_half_width) / (2 * p.agent.reset_half_width) * 4));
    ++counts[ix][iy];
  }
  double chi2 = 0.0;
  for (auto& row : counts) {
    for (int c : row) chi2 += (c - 62.5) * (c - 62.5) / 62.5;
  }
  CHECK(chi2 < 30.58);  // 15 dof, p = 0.01

  ServeEnv a(p, nullptr, 5), b(p, nullptr, 5);
  CHECK(a.agent().base_xy == b.agent().base_xy);
}

TEST_CASE("the settle delay carries no serve rewards and zero action comes to rest") {
  EnvParams p = quiet_params();
  ServeEnv env(p, nullptr, 3);
  AgentState moving = env.agent();
  moving.base_vel_xy = Vec2(1.0, -0.5);
  env.debug_set_agent(moving);
  const int settle_ticks = static_cast<int>(std::lround(p.env.settle / p.env.tick));
  for (int i = 0; i < settle_ticks - 1; ++i) {
    const StepResult r = env.step(Action::Zero());
    for (auto t : {RewardTerm::ReachEe, RewardTerm::ReachBase, RewardTerm::TrackVel, RewardTerm::Land,
                   RewardTerm::Net, RewardTerm::HitBonus, RewardTerm::SuccessBonus}) {
      CHECK_FALSE(r.reward.is_active(t));
    }
    CHECK(env.phase() == ServePhase::Waiting);
    CHECK(env.actor_stack().allFinite());
  }
  CHECK(env.agent().base_vel_xy.norm() < 1e-3);
  env.step(Action::Zero());
  CHECK(env.phase() == ServePhase::Incoming);
}

TEST_CASE("a static paddle in the ball path scores a hit") {
  EnvParams p = quiet_params();
  p.ball.drag_coeff_k = 0.0;
  ServeEnv env(p, nullptr, 4);
  AgentState a = env.agent();
  a.base_xy = Vec2(1.85, 0.15);
  a.base_vel_xy.setZero();
  a.paddle_offset = p.agent.offset_nominal;
  env.debug_set_agent(a);
  const Vec3 paddle = env.agent().paddle_world();
  ServeSpec spec;
  spec.p0 = paddle + Vec3(-0.2, 0.0, 0.0);
  spec.v0 = Vec3(5.0, 0.0, 0.5);
  env.debug_launch(spec);
  bool hit = false;
  for (int i = 0; i < 200 && !env.done(); ++i) {
    const StepResult r = env.step(Action::Zero());
    if (r.reward.is_active(RewardTerm::HitBonus)) {
      hit = true;
      CHECK(r.reward.is_active(RewardTerm::Land));
      CHECK(r.reward.is_active(RewardTerm::Net));
      CHECK(env.phase() != ServePhase::Incoming);
    }
    if (r.resolved) {
      const ServeScore s = score_serve(*r.resolved, p.table);
      CHECK(s.hit);
      CHECK(r.resolved->contacts == 1);
      CHECK(r.resolved->outbound_speed > 0.0);
      break;
    }
  }
  CHECK(hit);
}

TEST_CASE("scoring rules") {
  const TableGeometry table = make_standard_table();
  ServeRecord none;
  CHECK_FALSE(score_serve(none, table).hit);
  CHECK_FALSE(score_serve(none, table).success);

  ServeRecord own;
  own.contacts = 1;
  own.landing = TableHalf::Own;
  CHECK(score_serve(own, table).hit);
  CHECK_FALSE(score_serve(own, table).success);

  ServeRecord good;
  good.contacts = 1;
  good.net_cross_z = table.net_top() + 0.05;
  good.landing = TableHalf::Opponent;
  CHECK(score_serve(good, table).success);

  ServeRecord cord = good;
  cord.net_strike = true;
  CHECK(score_serve(cord, table).hit);
  CHECK_FALSE(score_serve(cord, table).success);

  ServeRecord under = good;
  under.net_cross_z = table.surface_height - 0.1;
  CHECK_FALSE(score_serve(under, table).success);
}

TEST_CASE("commanding excessive base speed ends the episode as a fall") {
  ServeEnv env(quiet_params(), nullptr, 6);
  Action a = Action::Zero();
  a(0) = 3.0;
  int ticks = 0;
  StepResult r;
  while (!env.done()) {
    r = env.step(a);
    ++ticks;
  }
  CHECK(r.termination == Termination::Fell);
  CHECK(r.reward.is_active(RewardTerm::Fall));
  CHECK(ticks == 11);
  CHECK(env.agent().base_vel_xy.norm() <= quiet_params().agent.v_max + 1e-12);
  CHECK_THROWS_AS(env.step(a), std::logic_error);
}

TEST_CASE("episodes hold at most five serves and replay bit-exactly") {
  const auto run = [](std::uint64_t seed) {
    ServeEnv env(quiet_params(), nullptr, seed);
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> n(0.0, 0.3);
    std::ostringstream out;
    for (int ep = 0; ep < 3; ++ep) {
      env.reset();
      while (!env.done()) {
        Action a;
        for (int i = 0; i < kActionSize; ++i) a(i) = n(rng);
        env.step(a);
      }
      CHECK(env.log().serves.size() <= 5);
      for (const auto& s : env.log().serves) {
        const ServeScore sc = score_serve(s, env.params().table);
        CHECK((!sc.success || sc.hit));
      }
      append_episode_jsonl(out, env.log(), env.params().table);
    }
    return out.str();
  };
  const std::string a = run(9);
  CHECK(a == run(9));
  CHECK(a != run(10));
  CHECK(std::count(a.begin(), a.end(), '\n') >= 3);
}

TEST_CASE("noise-free actor fields are a prefix of the critic observation") {
  EnvParams p;
  p.env.obs_noise = 0.0;
  const auto model = std::make_shared<ApexPredictor>(make_untrained_predictor(p.table));
  ServeEnv env(p, model, 8);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.3);
  for (int i = 0; i < 200 && !env.done(); ++i) {
    Action a;
    for (int k = 0; k < kActionSize; ++k) a(k) = n(rng);
    env.step(a);
    const Eigen::VectorXd actor = env.actor_obs().to_vector();
    const Eigen::VectorXd critic = env.critic_obs().to_vector();
    REQUIRE(actor.size() == ActorObs::kSize);
    REQUIRE(critic.size() == CriticObs::kSize);
    CHECK(actor == critic.head(ActorObs::kSize));
  }
  CHECK(ActorObs::kSize == 31);
  CHECK(CriticObs::kSize == 47);
  CHECK(env.actor_stack().size() == 5 * ActorObs::kSize);
}

TEST_CASE("the no-predictor variant blanks the prediction fields") {
  EnvParams p;
  p.env.use_predictor = false;
  ServeEnv env(p, nullptr, 2);
  for (int i = 0; i < 60; ++i) {
    env.step(Action::Zero());
    CHECK(env.actor_obs().p_tilde == Vec3::Zero());
    CHECK(env.actor_obs().delta_p_tilde == Vec2::Zero());
    CHECK(env.critic_obs().clean.p_tilde == Vec3::Zero());
  }
  CHECK_THROWS_AS(ServeEnv(EnvParams{}, nullptr, 1), std::invalid_argument);
}
