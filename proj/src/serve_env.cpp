#include "pingpong/serve_env.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace pingpong {

void AgentConfig::validate() const {
  if (!(action_scale > 0.0 && v_max > 0.0 && accel_cap > 0.0 && track_gain > 0.0 && base_vel_scale > 0.0)) {
    throw std::invalid_argument("agent: scales, caps and gains must be > 0");
  }
  if (!((offset_lo.array() < offset_hi.array()).all())) throw std::invalid_argument("agent: empty offset box");
  if (!((offset_nominal.array() >= offset_lo.array()).all() && (offset_nominal.array() <= offset_hi.array()).all())) {
    throw std::invalid_argument("agent: nominal offset outside its box");
  }
  if (!(offset_tau > 0.0 && offset_speed_cap > 0.0 && normal_scale > 0.0 && normal_nominal.norm() > 0.0)) {
    throw std::invalid_argument("agent: bad paddle tracking parameters");
  }
  if (!(fall_speed > 0.0 && fall_time > 0.0 && reach_x > 0.0 && reach_y > 0.0)) {
    throw std::invalid_argument("agent: bad fall or workspace parameters");
  }
  if (!(reset_depth >= 0.0 && reset_depth <= reach_x && reset_half_width >= 0.0 && reset_half_width <= reach_y)) {
    throw std::invalid_argument("agent: reset box outside the workspace");
  }
}

void ContactConfig::validate() const {
  if (!(paddle_radius > 0.0 && restitution > 0.0 && restitution <= 1.0 && tangential_retention >= 0.0 &&
        tangential_retention <= 1.0 && out_speed_cap > 0.0)) {
    throw std::invalid_argument("contact: bad paddle parameters");
  }
}

void EnvConfig::validate() const {
  if (!(tick > 0.0 && substep > 0.0 && substep <= kMaxFlightDt && substep <= tick)) {
    throw std::invalid_argument("env: need 0 < substep <= min(tick, 5e-3)");
  }
  const double n = tick / substep;
  if (std::abs(n - std::round(n)) > 1e-9) throw std::invalid_argument("env: tick must be a multiple of substep");
  if (!(settle >= 0.0 && serve_gap >= 0.0 && serve_timeout > 0.0 && obs_noise >= 0.0)) {
    throw std::invalid_argument("env: bad timing or noise");
  }
  if (serves_per_episode < 1 || serves_per_episode > 5) throw std::invalid_argument("env: serves_per_episode in 1..5");
  if (history < 1) throw std::invalid_argument("env: history must be >= 1");
}

void EnvParams::validate() const {
  table.validate();
  ball.validate();
  serve.validate();
  agent.validate();
  contact.validate();
  reward.validate();
  env.validate();
}

Vec3 paddle_contact_velocity(const Vec3& v_ball, const Vec3& v_paddle, const Vec3& n, const ContactConfig& cfg) {
  const Vec3 u = v_ball - v_paddle;
  const double un = u.dot(n);
  if (!(un < 0.0)) return v_ball;
  Vec3 out = v_paddle + cfg.tangential_retention * (u - un * n) - cfg.restitution * un * n;
  const double speed = out.norm();
  if (speed > cfg.out_speed_cap) out *= cfg.out_speed_cap / speed;
  return out;
}

Vec3 AgentState::paddle_world() const {
  return {base_xy.x() - paddle_offset.x(), base_xy.y() - paddle_offset.y(), paddle_offset.z()};
}

Vec3 AgentState::paddle_world_velocity() const {
  return {base_vel_xy.x() - paddle_vel.x(), base_vel_xy.y() - paddle_vel.y(), paddle_vel.z()};
}

bool AgentState::is_finite() const {
  return base_xy.allFinite() && base_vel_xy.allFinite() && paddle_offset.allFinite() && paddle_vel.allFinite() &&
         paddle_normal.allFinite();
}

Vec2 arm_xy_offset(const AgentConfig& cfg) { return -cfg.offset_nominal.head<2>(); }

Eigen::VectorXd ActorObs::to_vector() const {
  Eigen::VectorXd v(kSize);
  v << base_vel_xy, base_xy, paddle_offset, paddle_vel, paddle_normal, prev_action, p_ball, heading, p_tilde,
      delta_p_tilde;
  return v;
}

Eigen::VectorXd CriticObs::to_vector() const {
  Eigen::VectorXd v(kSize);
  v << clean.to_vector(), p_hat, delta_p_hat, v_ball, p_ee, t_arrive, serve_progress, episode_progress, b_own_table,
      b_paddle;
  return v;
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::Running:
      return "running";
    case Termination::Completed5:
      return "completed";
    case Termination::Fell:
      return "fell";
    case Termination::Diverged:
      return "diverged";
  }
  return "unknown";
}

ServeScore score_serve(const ServeRecord& record, const TableGeometry& table) {
  ServeScore s;
  s.hit = record.contacts > 0;
  s.success = s.hit && !record.net_strike && record.net_cross_z && *record.net_cross_z > table.net_top() &&
              record.landing == TableHalf::Opponent;
  return s;
}

nlohmann::json to_json(const ServeRecord& r, const TableGeometry& table) {
  const ServeScore score = score_serve(r, table);
  nlohmann::json j{{"range", to_string(r.spec.range)},
                   {"p0", {r.spec.p0.x(), r.spec.p0.y(), r.spec.p0.z()}},
                   {"v0", {r.spec.v0.x(), r.spec.v0.y(), r.spec.v0.z()}},
                   {"index", r.index_in_episode},
                   {"contacts", r.contacts},
                   {"hit", score.hit},
                   {"success", score.success},
                   {"own_bounce", r.own_bounce},
                   {"outbound_speed", r.outbound_speed},
                   {"net_strike", r.net_strike},
                   {"reward_trace", r.reward_trace}};
  j["contact_point"] = r.contact_point ? nlohmann::json{r.contact_point->x(), r.contact_point->y(),
                                                        r.contact_point->z()}
                                       : nlohmann::json(nullptr);
  j["net_cross_z"] = r.net_cross_z ? nlohmann::json(*r.net_cross_z) : nlohmann::json(nullptr);
  j["landing"] = r.landing ? nlohmann::json(to_string(*r.landing)) : nlohmann::json(nullptr);
  return j;
}

void append_episode_jsonl(std::ostream& out, const EpisodeLog& log, const TableGeometry& table) {
  for (const auto& r : log.serves) {
    nlohmann::json j = to_json(r, table);
    j["termination"] = to_string(log.termination);
    out << j.dump() << '\n';
  }
}

ServeEnv::ServeEnv(EnvParams params, std::shared_ptr<const ApexPredictor> predictor, std::uint64_t seed)
    : params_(std::move(params)),
      predictor_(std::move(predictor)),
      rng_(seed),
      flight_(params_.ball, params_.table, params_.env.substep) {
  params_.validate();
  if (params_.env.use_predictor && !predictor_) throw std::invalid_argument("ServeEnv: predictor required");
  reset();
}

void ServeEnv::reset() {
  const AgentConfig& a = params_.agent;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  agent_ = AgentState{};
  agent_.base_xy = Vec2(params_.table.own_end() + a.reset_depth * u01(rng_),
                        a.reset_half_width * (2.0 * u01(rng_) - 1.0));
  agent_.paddle_offset = a.offset_nominal;
  agent_.paddle_normal = a.normal_nominal.normalized();
  prev_action_.setZero();
  base_vel_target_.setZero();
  offset_target_ = a.offset_nominal;

  t_ = 0.0;
  phase_ = ServePhase::Waiting;
  t_next_launch_ = params_.env.settle;
  t_launch_ = 0.0;
  ball_ = BallState{};
  incoming_ = PredictionBundle{};
  current_ = ServeRecord{};
  noisy_track_.clear();
  clean_track_.clear();
  p_tilde_.reset();
  p_tilde_clean_.reset();
  noisy_ball_.setZero();
  log_ = EpisodeLog{};
  done_ = false;
  pending_resolution_ = false;
  if (t_next_launch_ <= 0.0) launch(sample_serve(params_.env.range, rng_, params_.serve, params_.table, params_.ball));
  build_observations();
  stack_.assign(static_cast<std::size_t>(params_.env.history), actor_.to_vector());
}

Eigen::VectorXd ServeEnv::actor_stack() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(stack_.size()) * ActorObs::kSize);
  Eigen::Index k = 0;
  for (const auto& v : stack_) {
    out.segment(k, ActorObs::kSize) = v;
    k += ActorObs::kSize;
  }
  return out;
}

void ServeEnv::debug_launch(const ServeSpec& spec) {
  launch(spec);
  build_observations();
}

void ServeEnv::launch(const ServeSpec& spec) {
  phase_ = ServePhase::Incoming;
  t_launch_ = t_;
  ball_ = launch_state(spec, t_);
  incoming_ = predict_incoming(ball_, params_.ball, params_.table);
  current_ = ServeRecord{};
  current_.spec = spec;
  current_.index_in_episode = static_cast<int>(log_.serves.size());
  noisy_track_.clear();
  clean_track_.clear();
  p_tilde_.reset();
  p_tilde_clean_.reset();
  refresh_prediction();
}

void ServeEnv::set_predictor(std::shared_ptr<const ApexPredictor> predictor) {
  if (params_.env.use_predictor && !predictor) throw std::invalid_argument("ServeEnv: predictor required");
  predictor_ = std::move(predictor);
}

void ServeEnv::refresh_prediction() {
  const bool in_flight = phase_ == ServePhase::Incoming || phase_ == ServePhase::Outgoing;
  if (in_flight) {
    std::normal_distribution<double> n(0.0, 1.0);
    const double s = params_.env.obs_noise;
    noisy_ball_ = ball_.p;
    if (s > 0.0) noisy_ball_ += s * Vec3(n(rng_), n(rng_), n(rng_));
  } else {
    noisy_ball_.setZero();
  }
  if (phase_ != ServePhase::Incoming) {
    p_tilde_.reset();
    p_tilde_clean_.reset();
    return;
  }
  if (current_.own_bounce || !predictor_) return;  // hold the last pre-bounce prediction
  noisy_track_.push_back(noisy_ball_);
  clean_track_.push_back(ball_.p);
  const int h = predictor_->history();
  PredictorInput noisy_in = make_predictor_input(noisy_track_, h);
  p_tilde_ = predict(*predictor_, noisy_in);
  if (incoming_.apex) sample_.emplace(std::move(noisy_in), *incoming_.apex);
  p_tilde_clean_ = predict(*predictor_, make_predictor_input(clean_track_, h));
}

void ServeEnv::integrate_agent(double dt) {
  const AgentConfig& a = params_.agent;
  Vec2 acc = a.track_gain * (base_vel_target_ - agent_.base_vel_xy);
  if (acc.norm() > a.accel_cap) acc *= a.accel_cap / acc.norm();
  agent_.base_vel_xy += dt * acc;
  if (agent_.base_vel_xy.norm() > a.v_max) agent_.base_vel_xy *= a.v_max / agent_.base_vel_xy.norm();
  agent_.base_xy += dt * agent_.base_vel_xy;

  const Vec2 lo(params_.table.own_end(), -a.reach_y);
  const Vec2 hi(params_.table.own_end() + a.reach_x, a.reach_y);
  for (int i = 0; i < 2; ++i) {
    if (agent_.base_xy(i) < lo(i)) {
      agent_.base_xy(i) = lo(i);
      agent_.base_vel_xy(i) = std::max(0.0, agent_.base_vel_xy(i));
    } else if (agent_.base_xy(i) > hi(i)) {
      agent_.base_xy(i) = hi(i);
      agent_.base_vel_xy(i) = std::min(0.0, agent_.base_vel_xy(i));
    }
  }

  Vec3 vel = (offset_target_ - agent_.paddle_offset) / a.offset_tau;
  if (vel.norm() > a.offset_speed_cap) vel *= a.offset_speed_cap / vel.norm();
  const Vec3 next = (agent_.paddle_offset + dt * vel).cwiseMax(a.offset_lo).cwiseMin(a.offset_hi);
  agent_.paddle_vel = (next - agent_.paddle_offset) / dt;
  agent_.paddle_offset = next;
}

void ServeEnv::resolve(StepResult& out) {
  if (pending_resolution_) return;
  pending_resolution_ = true;
  phase_ = ServePhase::Dead;
  if (score_serve(current_, params_.table).success) {
    out.reward.merge(outcome_breakdown(OutcomeEvent::ValidReturn, params_.reward), params_.reward);
  }
}

void ServeEnv::handle_ball_event(const FlightEvent& ev, StepResult& out) {
  if (phase_ == ServePhase::Incoming) {
    switch (ev.kind) {
      case EventKind::TableBounce:
        if (ev.half == TableHalf::Own && !current_.own_bounce) {
          current_.own_bounce = true;
        } else {
          resolve(out);
        }
        break;
      case EventKind::FloorContact:
        resolve(out);
        break;
      case EventKind::NetPlaneCross:
      case EventKind::NetStrike:
        break;
    }
    return;
  }
  if (phase_ != ServePhase::Outgoing) return;
  switch (ev.kind) {
    case EventKind::NetPlaneCross:
      if (!current_.net_cross_z && !current_.net_strike) current_.net_cross_z = ev.state_at_event.p.z();
      break;
    case EventKind::NetStrike:
      current_.net_strike = true;
      break;
    case EventKind::TableBounce:
      current_.landing = ev.half;
      resolve(out);
      break;
    case EventKind::FloorContact:
      current_.landing = TableHalf::OffTable;
      resolve(out);
      break;
  }
}

void ServeEnv::check_paddle_contact(const BallState& before, const Vec3& paddle_before, const Vec3& paddle_vel,
                                    StepResult& out) {
  const ContactConfig& c = params_.contact;
  const double r = params_.ball.radius;
  const Vec3 n = agent_.paddle_normal;
  const Vec3 paddle_after = agent_.paddle_world();
  const double d0 = (before.p - paddle_before).dot(n);
  const double d1 = (ball_.p - paddle_after).dot(n);
  if (!(std::abs(d0) > r)) return;
  if (!(std::abs(d1) <= r || d0 * d1 < 0.0)) return;

  const double side = d0 > 0.0 ? 1.0 : -1.0;
  const double f = std::clamp((side * r - d0) / (d1 - d0), 0.0, 1.0);
  const Vec3 ball_c = before.p + f * (ball_.p - before.p);
  const Vec3 paddle_c = paddle_before + f * (paddle_after - paddle_before);
  const Vec3 rel = ball_c - paddle_c;
  if ((rel - rel.dot(n) * n).norm() > c.paddle_radius) return;

  const Vec3 ns = side * n;
  const Vec3 u = ball_.v - paddle_vel;
  const double un = u.dot(ns);
  if (!(un < 0.0)) return;

  const Vec3 v_out = paddle_contact_velocity(ball_.v, paddle_vel, ns, c);

  ball_.p = ball_c;
  ball_.v = v_out;
  phase_ = ServePhase::Outgoing;
  current_.contacts = 1;
  current_.contact_point = ball_c;
  current_.outbound_speed = v_out.norm();

  const PredictionBundle ret = predict_return(ball_, params_.ball, params_.table);
  out.reward.merge(return_reward(ret, params_.reward.target_xy, params_.table, params_.reward), params_.reward);
  out.reward.merge(outcome_breakdown(OutcomeEvent::Hit, params_.reward), params_.reward);
}

StepResult ServeEnv::step(const Action& action_in) {
  if (done_) throw std::logic_error("ServeEnv::step: episode already terminated");
  if (!action_in.allFinite()) throw std::invalid_argument("ServeEnv::step: non-finite action");
  const AgentConfig& a = params_.agent;
  const EnvConfig& e = params_.env;
  StepResult out;
  sample_.reset();

  const Action act = action_in.cwiseMax(-10.0).cwiseMin(10.0);
  const Vec2 raw_vel = a.base_vel_scale * a.action_scale * act.head<2>();
  base_vel_target_ = raw_vel.norm() > a.v_max ? Vec2(raw_vel * (a.v_max / raw_vel.norm())) : raw_vel;
  offset_target_ = (a.offset_nominal + a.offset_scale.cwiseProduct(a.action_scale * act.segment<3>(2)))
                       .cwiseMax(a.offset_lo)
                       .cwiseMin(a.offset_hi);
  const Vec3 n = a.normal_nominal.normalized() + a.normal_scale * a.action_scale * act.segment<3>(5);
  agent_.paddle_normal = n.norm() > 1e-6 ? Vec3(n.normalized()) : Vec3(a.normal_nominal.normalized());

  agent_.overspeed_time = raw_vel.norm() > a.fall_speed ? agent_.overspeed_time + e.tick : 0.0;
  if (agent_.overspeed_time > a.fall_time + 1e-9) agent_.stance_ok = false;

  out.reward.merge(regularizers((act - prev_action_).squaredNorm(), params_.reward), params_.reward);
  prev_action_ = act;

  const double t0 = t_;
  const int n_sub = static_cast<int>(std::lround(e.tick / e.substep));
  double t_prev = t0;
  try {
    for (int j = 1; j <= n_sub; ++j) {
      const double t_sub = j == n_sub ? t0 + e.tick : t0 + j * e.substep;
      const Vec3 paddle_before = agent_.paddle_world();
      integrate_agent(t_sub - t_prev);
      t_prev = t_sub;
      if (phase_ != ServePhase::Incoming && phase_ != ServePhase::Outgoing) continue;
      const BallState before = ball_;
      while ((phase_ == ServePhase::Incoming || phase_ == ServePhase::Outgoing) && ball_.t < t_sub) {
        if (auto ev = flight_.advance(ball_, t_sub)) handle_ball_event(*ev, out);
      }
      if (phase_ == ServePhase::Incoming) {
        check_paddle_contact(before, paddle_before, agent_.paddle_world_velocity(), out);
      }
    }
  } catch (const SimulationError&) {
    t_ = t0 + e.tick;
    done_ = true;
    log_.termination = Termination::Diverged;
    out.done = true;
    out.termination = Termination::Diverged;
    return out;
  }
  t_ = t0 + e.tick;

  const bool in_flight = phase_ == ServePhase::Incoming || phase_ == ServePhase::Outgoing;
  if (in_flight && t_ - t_launch_ >= e.serve_timeout - 1e-9) resolve(out);

  if (!agent_.is_finite()) {
    done_ = true;
    log_.termination = Termination::Diverged;
  } else if (!agent_.stance_ok) {
    out.reward.merge(outcome_breakdown(OutcomeEvent::Fall, params_.reward), params_.reward);
    if (phase_ == ServePhase::Incoming || phase_ == ServePhase::Outgoing) resolve(out);
    done_ = true;
    log_.termination = Termination::Fell;
  }

  if (phase_ == ServePhase::Incoming && current_.contacts == 0) {
    out.reward.merge(reach_reward(agent_.paddle_world(), agent_.base_xy, agent_.base_vel_xy, incoming_,
                                  arm_xy_offset(a), t_, params_.reward),
                     params_.reward);
  }

  const bool serve_active = phase_ == ServePhase::Incoming || phase_ == ServePhase::Outgoing;
  if (serve_active || pending_resolution_) current_.reward_trace.push_back(out.reward.total);
  if (pending_resolution_) {
    pending_resolution_ = false;
    log_.serves.push_back(current_);
    out.resolved = current_;
    t_next_launch_ = t_ + e.serve_gap;
    if (!done_ && static_cast<int>(log_.serves.size()) >= e.serves_per_episode) {
      done_ = true;
      log_.termination = Termination::Completed5;
    }
  }

  if (!done_ && (phase_ == ServePhase::Waiting || phase_ == ServePhase::Dead) && t_ >= t_next_launch_ - 1e-9) {
    launch(sample_serve(e.range, rng_, params_.serve, params_.table, params_.ball));
  } else {
    refresh_prediction();
  }

  build_observations();
  stack_.push_back(actor_.to_vector());
  while (static_cast<int>(stack_.size()) > e.history) stack_.pop_front();

  out.done = done_;
  out.termination = log_.termination;
  return out;
}

void ServeEnv::build_observations() {
  const bool in_flight = phase_ == ServePhase::Incoming || phase_ == ServePhase::Outgoing;
  const bool use_pred = params_.env.use_predictor;
  std::normal_distribution<double> n(0.0, 1.0);
  const double s = params_.env.obs_noise;

  ActorObs clean;
  clean.base_vel_xy = agent_.base_vel_xy;
  clean.base_xy = agent_.base_xy;
  clean.paddle_offset = agent_.paddle_offset;
  clean.paddle_vel = agent_.paddle_vel;
  clean.paddle_normal = agent_.paddle_normal;
  clean.prev_action = prev_action_;
  clean.p_ball = in_flight ? ball_.p : Vec3::Zero();

  ActorObs noisy = clean;
  if (s > 0.0) noisy.base_xy += s * Vec2(n(rng_), n(rng_));
  noisy.p_ball = noisy_ball_;

  if (use_pred && p_tilde_ && p_tilde_clean_) {
    clean.p_tilde = *p_tilde_clean_;
    clean.delta_p_tilde = base_shift(*p_tilde_clean_, clean.base_xy);
    noisy.p_tilde = *p_tilde_;
    noisy.delta_p_tilde = base_shift(*p_tilde_, noisy.base_xy);
  }
  actor_ = noisy;

  critic_ = CriticObs{};
  critic_.clean = clean;
  const bool incoming_valid = phase_ == ServePhase::Incoming && incoming_.bounce_valid && incoming_.apex;
  if (incoming_valid) {
    critic_.p_hat = *incoming_.apex;
    critic_.delta_p_hat = base_shift(*incoming_.apex, agent_.base_xy);
    critic_.t_arrive = std::max(0.0, *incoming_.t_apex - t_);
  }
  if (in_flight) {
    critic_.v_ball = ball_.v;
    critic_.serve_progress = std::min(1.0, (t_ - t_launch_) / params_.env.serve_timeout);
    critic_.b_own_table = current_.own_bounce ? 1.0 : 0.0;
    critic_.b_paddle = current_.contacts > 0 ? 1.0 : 0.0;
  }
  critic_.p_ee = agent_.paddle_world();
  critic_.episode_progress =
      static_cast<double>(log_.serves.size()) / static_cast<double>(params_.env.serves_per_episode);
}

}  // namespace pingpong
