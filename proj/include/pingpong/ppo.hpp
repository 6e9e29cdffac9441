#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <vector>

#include "pingpong/apex_predictor.hpp"
#include "pingpong/mlp.hpp"
#include "pingpong/serve_env.hpp"

namespace pingpong {

enum class Variant { Full, NoPredictor, NoHitGuidance, NoReturnGuidance };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

// Switches off the ablated mechanism in the environment or reward weights.
void apply_variant(Variant v, EnvParams& params);

struct PpoConfig {
  int n_envs = 64;
  int n_steps = 24;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 5;
  int minibatches = 4;
  double entropy_coef = 0.005;
  double value_coef = 0.5;
  double max_grad_norm = 1.0;
  double action_std_init = 0.5;
  double learning_rate = 3e-4;
  double kl_stop = 0.5;
  bool adaptive_lr = false;
  double desired_kl = 0.01;
  std::vector<int> actor_hidden = {256, 256, 128};
  std::vector<int> critic_hidden = {256, 256, 128};
  int updates = 4000;
  int metrics_window = 400;  // serves in the rolling hit/success window
  int checkpoint_every = 500;
  bool joint_predictor = false;
  int threads = 1;

  void validate() const;
};

nlohmann::json to_json(const PpoConfig& cfg);

// Running mean and variance, merged batch-wise.
struct RunningNorm {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  double count = 0.0;
  double clip = 5.0;

  explicit RunningNorm(int dim = 0);
  void update(const Eigen::MatrixXd& batch);
  // Normalizes a column-stacked batch whose row count is a multiple of the
  // statistics' dimension (stacked histories share one set of statistics).
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

struct Policy {
  int history = kPredictorHistory;
  Variant variant = Variant::Full;  // observation setup the policy was trained with
  nn::MlpParams<double> actor;   // stacked ActorObs -> action mean
  Eigen::VectorXd log_std;
  nn::MlpParams<double> critic;  // CriticObs -> value
  RunningNorm actor_norm{ActorObs::kSize};
  RunningNorm critic_norm{CriticObs::kSize};

  // Throws unless the actor consumes exactly the stacked actor fields and
  // the critic exactly the critic fields.
  void audit() const;
};

Policy make_policy(const PpoConfig& cfg, int history, std::mt19937_64& rng);

double gaussian_log_prob(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& mean,
                         const Eigen::VectorXd& log_std);
double gaussian_entropy(const Eigen::VectorXd& log_std);

// Columns are indexed step * n_envs + env.
struct RolloutBatch {
  int n_envs = 0;
  int n_steps = 0;
  Eigen::MatrixXd actor_obs;   // normalized stacks
  Eigen::MatrixXd critic_obs;  // normalized
  Eigen::MatrixXd actions;
  Eigen::VectorXd log_probs;
  Eigen::VectorXd rewards;
  Eigen::VectorXd values;
  Eigen::VectorXd dones;
  Eigen::VectorXd bootstrap_values;  // per env, value after the last step
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  int size() const { return n_envs * n_steps; }
};

struct GaeResult {
  Eigen::VectorXd advantages;  // before normalization
  Eigen::VectorXd returns;
};

GaeResult compute_gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, const Eigen::VectorXd& dones,
                      const Eigen::VectorXd& bootstrap_values, int n_envs, int n_steps, double gamma, double lambda);

void compute_gae(RolloutBatch& batch, const PpoConfig& cfg);

Eigen::VectorXd normalize_advantages(const Eigen::VectorXd& adv);

struct ServeOutcome {
  bool hit = false;
  bool success = false;
};

// A set of environments with per-env action noise streams.
class VecEnv {
 public:
  VecEnv(const EnvParams& params, std::shared_ptr<const ApexPredictor> predictor, int n_envs, std::uint64_t seed);

  int size() const { return static_cast<int>(envs_.size()); }
  ServeEnv& env(int i) { return envs_[static_cast<std::size_t>(i)]; }
  std::mt19937_64& action_rng(int i) { return action_rngs_[static_cast<std::size_t>(i)]; }

  void set_predictor(const std::shared_ptr<const ApexPredictor>& predictor);

  Eigen::MatrixXd actor_stacks() const;
  Eigen::MatrixXd critic_obs() const;

 private:
  std::vector<ServeEnv> envs_;
  std::vector<std::mt19937_64> action_rngs_;
};

struct CollectStats {
  std::vector<ServeOutcome> serves;
  int episodes = 0;
  int falls = 0;
  double reward_sum = 0.0;
  std::vector<std::pair<PredictorInput, Vec3>> predictor_pairs;  // only when harvesting
};

RolloutBatch collect_rollouts(Policy& policy, VecEnv& envs, const PpoConfig& cfg, CollectStats& stats,
                              bool update_norms = true, bool harvest_predictor_pairs = false);

// min(r A, clip(r, 1 - eps, 1 + eps) A) and its derivative in r, which is
// zero wherever the clipped branch binds.
struct ClippedSurrogate {
  double value = 0.0;
  double d_ratio = 0.0;
};

ClippedSurrogate clipped_surrogate(double ratio, double advantage, double eps);

struct UpdateStats {
  double actor_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  int minibatch_steps = 0;
  bool early_stopped = false;
};

struct PolicyOptimizer {
  nn::OptState<double> actor;
  nn::OptState<double> critic;
  Eigen::VectorXd log_std_m;
  Eigen::VectorXd log_std_v;
  long log_std_step = 0;
  double learning_rate = 3e-4;
};

PolicyOptimizer make_optimizer(const Policy& policy, const PpoConfig& cfg);

UpdateStats ppo_update(Policy& policy, PolicyOptimizer& opt, RolloutBatch& batch, const PpoConfig& cfg,
                       std::mt19937_64& rng);

struct CurveRow {
  int update = 0;
  double hit_rate = 0.0;
  double success_rate = 0.0;
  double actor_loss = 0.0;
  double value_loss = 0.0;
  double kl = 0.0;
};

void write_curves_csv(const std::filesystem::path& path, const std::vector<CurveRow>& rows);
std::vector<CurveRow> read_curves_csv(const std::filesystem::path& path);

struct TrainOptions {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;  // empty: no files
  std::function<void(const CurveRow&)> on_update;
  nlohmann::json manifest_extra;
  nlohmann::json run_config;  // full configuration, hashed into the manifest
};

// What a training manifest hashes: PPO settings, variant, the caller's run
// config and the predictor weights.
nlohmann::json training_identity(const PpoConfig& cfg, Variant variant, const nlohmann::json& run_config,
                                 const ApexPredictor* predictor);

struct TrainResult {
  Policy policy;
  std::vector<CurveRow> curves;
  std::shared_ptr<ApexPredictor> predictor;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

TrainResult train(const PpoConfig& cfg, EnvParams params, Variant variant,
                  std::shared_ptr<const ApexPredictor> predictor, const TrainOptions& options);

nlohmann::json policy_to_json(const Policy& p);
Policy policy_from_json(const nlohmann::json& j);
void save_policy(const std::filesystem::path& path, const Policy& p);
Policy load_policy(const std::filesystem::path& path);

// Deterministic action: the distribution mean.
Action mean_action(const Policy& p, const Eigen::VectorXd& actor_stack);

}  // namespace pingpong
