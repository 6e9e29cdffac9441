#pragma once

#include <array>
#include <deque>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <utility>
#include <string_view>
#include <vector>

#include "pingpong/apex_predictor.hpp"
#include "pingpong/ball_dynamics.hpp"
#include "pingpong/physics_oracle.hpp"
#include "pingpong/reward.hpp"
#include "pingpong/serve.hpp"

namespace pingpong {

inline constexpr int kActionSize = 8;
using Action = Eigen::Matrix<double, kActionSize, 1>;

// Planar stand-in for the humanoid: a velocity-tracked base carrying a
// paddle on a bounded offset. The robot faces -x, so the paddle sits at
// base - offset.xy in world coordinates.
struct AgentConfig {
  double action_scale = 0.25;
  double v_max = 2.5;
  double accel_cap = 8.0;
  double track_gain = 20.0;
  double base_vel_scale = 10.0;  // target speed per unit of scaled action
  Vec3 offset_lo = Vec3(0.1, -0.2, 0.6);
  Vec3 offset_hi = Vec3(0.6, 0.5, 1.3);
  Vec3 offset_nominal = Vec3(0.35, 0.15, 0.95);
  Vec3 offset_scale = Vec3(1.0, 1.4, 1.4);
  double offset_tau = 0.03;
  double offset_speed_cap = 2.0;
  Vec3 normal_nominal = Vec3(-1.0, 0.0, 0.0);
  double normal_scale = 2.0;
  double fall_speed = 3.5;  // commanded base speed that counts as unstable
  double fall_time = 0.2;
  double reach_x = 2.0;  // base travel behind the table end
  double reach_y = 1.5;
  double reset_depth = 0.8;
  double reset_half_width = 0.8;

  void validate() const;
};

struct ContactConfig {
  double paddle_radius = 0.08;
  double restitution = 0.85;
  double tangential_retention = 0.9;
  double out_speed_cap = 12.0;

  void validate() const;
};

// Outgoing ball velocity for a contact against a paddle moving at v_paddle
// with unit normal n facing the ball: restitution on the relative normal
// component, retention on the relative tangential one, speed capped.
Vec3 paddle_contact_velocity(const Vec3& v_ball, const Vec3& v_paddle, const Vec3& n, const ContactConfig& cfg);

struct EnvConfig {
  double tick = kPolicyTick;
  double substep = 1e-3;
  double settle = 0.5;
  double serve_gap = 0.3;
  int serves_per_episode = 5;
  double serve_timeout = 3.0;
  double obs_noise = 0.005;
  int history = 5;
  ServeRange range = ServeRange::Mixed;
  bool use_predictor = true;

  void validate() const;
};

struct EnvParams {
  TableGeometry table;
  BallConstants ball;
  ServeConfig serve;
  AgentConfig agent;
  ContactConfig contact;
  RewardConfig reward;
  EnvConfig env;

  void validate() const;
};

struct AgentState {
  Vec2 base_xy = Vec2::Zero();
  Vec2 base_vel_xy = Vec2::Zero();
  Vec3 paddle_offset = Vec3::Zero();
  Vec3 paddle_vel = Vec3::Zero();  // offset rate in the base frame
  Vec3 paddle_normal = -Vec3::UnitX();
  bool stance_ok = true;
  double overspeed_time = 0.0;

  Vec3 paddle_world() const;
  Vec3 paddle_world_velocity() const;
  bool is_finite() const;
};

// World-frame displacement from base to paddle at the nominal pose.
Vec2 arm_xy_offset(const AgentConfig& cfg);

struct ObsField {
  std::string_view name;
  int size;
};

inline constexpr std::array<ObsField, 10> kActorFields{{
    {"base_vel_xy", 2},
    {"base_xy", 2},
    {"paddle_offset", 3},
    {"paddle_vel", 3},
    {"paddle_normal", 3},
    {"prev_action", 8},
    {"p_ball", 3},
    {"heading", 2},
    {"p_tilde", 3},
    {"delta_p_tilde", 2},
}};

inline constexpr std::array<ObsField, 9> kCriticOnlyFields{{
    {"p_hat", 3},
    {"delta_p_hat", 2},
    {"v_ball", 3},
    {"p_ee", 3},
    {"t_arrive", 1},
    {"serve_progress", 1},
    {"episode_progress", 1},
    {"b_own_table", 1},
    {"b_paddle", 1},
}};

template <std::size_t N>
constexpr int total_size(const std::array<ObsField, N>& fields) {
  int n = 0;
  for (const auto& f : fields) n += f.size;
  return n;
}

constexpr bool fields_disjoint() {
  for (const auto& a : kActorFields) {
    for (const auto& c : kCriticOnlyFields) {
      if (a.name == c.name) return false;
    }
  }
  return true;
}

static_assert(fields_disjoint(), "actor observation shares a field with the privileged set");

// What the policy sees on one tick. Deliberately holds no ball velocity,
// oracle output, contact flag or progress scalar.
struct ActorObs {
  static constexpr int kSize = total_size(kActorFields);

  Vec2 base_vel_xy = Vec2::Zero();
  Vec2 base_xy = Vec2::Zero();
  Vec3 paddle_offset = Vec3::Zero();
  Vec3 paddle_vel = Vec3::Zero();
  Vec3 paddle_normal = Vec3::Zero();
  Action prev_action = Action::Zero();
  Vec3 p_ball = Vec3::Zero();
  Vec2 heading = Vec2(1.0, 0.0);
  Vec3 p_tilde = Vec3::Zero();
  Vec2 delta_p_tilde = Vec2::Zero();

  Eigen::VectorXd to_vector() const;
};

struct CriticObs {
  static constexpr int kSize = ActorObs::kSize + total_size(kCriticOnlyFields);

  ActorObs clean;  // the actor fields without injected noise
  Vec3 p_hat = Vec3::Zero();
  Vec2 delta_p_hat = Vec2::Zero();
  Vec3 v_ball = Vec3::Zero();
  Vec3 p_ee = Vec3::Zero();
  double t_arrive = 0.0;
  double serve_progress = 0.0;
  double episode_progress = 0.0;
  double b_own_table = 0.0;
  double b_paddle = 0.0;

  Eigen::VectorXd to_vector() const;
};

enum class Termination { Running, Completed5, Fell, Diverged };
std::string to_string(Termination t);

struct ServeRecord {
  ServeSpec spec;
  int index_in_episode = 0;
  int contacts = 0;
  bool own_bounce = false;
  std::optional<Vec3> contact_point;
  double outbound_speed = 0.0;
  std::optional<double> net_cross_z;  // first clean net-plane crossing after contact
  bool net_strike = false;            // net band touched after contact
  std::optional<TableHalf> landing;   // first surface contact after contact
  std::vector<double> reward_trace;
};

struct ServeScore {
  bool hit = false;
  bool success = false;
};

// The single scorer used by training metrics and evaluation.
ServeScore score_serve(const ServeRecord& record, const TableGeometry& table);

struct EpisodeLog {
  std::vector<ServeRecord> serves;
  Termination termination = Termination::Running;
};

nlohmann::json to_json(const ServeRecord& record, const TableGeometry& table);

// One serve per line; every line carries the episode termination.
void append_episode_jsonl(std::ostream& out, const EpisodeLog& log, const TableGeometry& table);

enum class ServePhase { Waiting, Incoming, Outgoing, Dead };

struct StepResult {
  RewardBreakdown reward;
  bool done = false;
  Termination termination = Termination::Running;
  std::optional<ServeRecord> resolved;
};

class ServeEnv {
 public:
  ServeEnv(EnvParams params, std::shared_ptr<const ApexPredictor> predictor, std::uint64_t seed);

  // Starts a new episode: random base position, nominal paddle pose, first
  // serve after the settle delay.
  void reset();
  StepResult step(const Action& action);

  const ActorObs& actor_obs() const { return actor_; }
  const CriticObs& critic_obs() const { return critic_; }
  // H stacked actor observations, oldest first.
  Eigen::VectorXd actor_stack() const;
  static int actor_stack_size(int history) { return history * ActorObs::kSize; }

  const AgentState& agent() const { return agent_; }
  const BallState& ball() const { return ball_; }
  ServePhase phase() const { return phase_; }
  double time() const { return t_; }
  const EpisodeLog& log() const { return log_; }
  const EnvParams& params() const { return params_; }
  const PredictionBundle& incoming_bundle() const { return incoming_; }
  bool done() const { return done_; }

  // Noisy predictor input and oracle apex of the last tick, when the ball
  // was incoming and had not bounced yet.
  const std::optional<std::pair<PredictorInput, Vec3>>& predictor_sample() const { return sample_; }
  void set_predictor(std::shared_ptr<const ApexPredictor> predictor);

  // Test hooks: place the ball and agent directly.
  void debug_set_agent(const AgentState& agent) { agent_ = agent; }
  void debug_launch(const ServeSpec& spec);

 private:
  void launch(const ServeSpec& spec);
  void integrate_agent(double dt);
  void handle_ball_event(const FlightEvent& ev, StepResult& out);
  void check_paddle_contact(const BallState& ball_before, const Vec3& paddle_before, const Vec3& paddle_vel,
                            StepResult& out);
  void resolve(StepResult& out);
  void refresh_prediction();
  void build_observations();

  EnvParams params_;
  std::shared_ptr<const ApexPredictor> predictor_;
  std::mt19937_64 rng_;
  FlightModel flight_;

  double t_ = 0.0;
  AgentState agent_;
  Action prev_action_ = Action::Zero();
  Vec2 base_vel_target_ = Vec2::Zero();
  Vec3 offset_target_ = Vec3::Zero();

  ServePhase phase_ = ServePhase::Waiting;
  double t_next_launch_ = 0.0;
  double t_launch_ = 0.0;
  BallState ball_;
  PredictionBundle incoming_;
  ServeRecord current_;
  std::vector<Vec3> noisy_track_;
  std::vector<Vec3> clean_track_;
  std::optional<Vec3> p_tilde_;
  std::optional<Vec3> p_tilde_clean_;
  Vec3 noisy_ball_ = Vec3::Zero();
  std::optional<std::pair<PredictorInput, Vec3>> sample_;

  EpisodeLog log_;
  bool done_ = false;
  bool pending_resolution_ = false;
  ActorObs actor_;
  CriticObs critic_;
  std::deque<Eigen::VectorXd> stack_;
};

}  // namespace pingpong
