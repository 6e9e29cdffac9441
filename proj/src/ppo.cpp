#include "pingpong/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <locale>
#include <numeric>
#include <sstream>
#include <thread>

#include "pingpong/manifest.hpp"

namespace pingpong {
namespace {

constexpr double kLogStdMin = -4.0;
constexpr double kLogStdMax = 1.0;
const double kLog2Pi = std::log(2.0 * M_PI);

template <typename F>
void parallel_for(int n, int threads, F&& body) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  const int t = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(t));
  for (int k = 0; k < t; ++k) {
    pool.emplace_back([&, k] {
      for (int i = k; i < n; i += t) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

nlohmann::json norm_to_json(const RunningNorm& n) {
  return {{"mean", std::vector<double>(n.mean.data(), n.mean.data() + n.mean.size())},
          {"var", std::vector<double>(n.var.data(), n.var.data() + n.var.size())},
          {"count", n.count},
          {"clip", n.clip}};
}

RunningNorm norm_from_json(const nlohmann::json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto var = j.at("var").get<std::vector<double>>();
  if (mean.size() != var.size()) throw nn::ShapeError("normalizer: mean/var size mismatch");
  RunningNorm n(static_cast<int>(mean.size()));
  n.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  n.var = Eigen::Map<const Eigen::VectorXd>(var.data(), static_cast<Eigen::Index>(var.size()));
  n.count = j.at("count").get<double>();
  n.clip = j.at("clip").get<double>();
  return n;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full:
      return "full";
    case Variant::NoPredictor:
      return "no-predictor";
    case Variant::NoHitGuidance:
      return "no-hit-guidance";
    case Variant::NoReturnGuidance:
      return "no-return-guidance";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  for (auto v : {Variant::Full, Variant::NoPredictor, Variant::NoHitGuidance, Variant::NoReturnGuidance}) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown variant: " + name);
}

void apply_variant(Variant v, EnvParams& params) {
  switch (v) {
    case Variant::Full:
      break;
    case Variant::NoPredictor:
      params.env.use_predictor = false;
      break;
    case Variant::NoHitGuidance:
      params.reward.w_reach_ee = 0.0;
      params.reward.w_reach_base = 0.0;
      params.reward.w_track_vel = 0.0;
      break;
    case Variant::NoReturnGuidance:
      params.reward.w_land = 0.0;
      params.reward.w_net = 0.0;
      break;
  }
}

void PpoConfig::validate() const {
  if (n_envs < 1 || n_steps < 1) throw std::invalid_argument("ppo: n_envs and n_steps must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("ppo: gamma must lie in [0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("ppo: gae_lambda must lie in [0, 1]");
  if (!(clip_eps > 0.0)) throw std::invalid_argument("ppo: clip_eps must be > 0");
  if (epochs < 1 || minibatches < 1) throw std::invalid_argument("ppo: epochs and minibatches must be >= 1");
  if (minibatches > n_envs * n_steps) throw std::invalid_argument("ppo: more minibatches than samples");
  if (!(entropy_coef >= 0.0 && value_coef > 0.0)) throw std::invalid_argument("ppo: bad loss coefficients");
  if (!(max_grad_norm > 0.0)) throw std::invalid_argument("ppo: max_grad_norm must be > 0");
  if (!(action_std_init > 0.0)) throw std::invalid_argument("ppo: action_std_init must be > 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("ppo: learning_rate must be > 0");
  if (!(kl_stop > 0.0 && desired_kl > 0.0)) throw std::invalid_argument("ppo: KL thresholds must be > 0");
  if (actor_hidden.empty() || critic_hidden.empty()) throw std::invalid_argument("ppo: hidden sizes required");
  for (int s : actor_hidden) {
    if (s < 1) throw std::invalid_argument("ppo: hidden sizes must be >= 1");
  }
  for (int s : critic_hidden) {
    if (s < 1) throw std::invalid_argument("ppo: hidden sizes must be >= 1");
  }
  if (updates < 1 || metrics_window < 1 || checkpoint_every < 1 || threads < 1) {
    throw std::invalid_argument("ppo: updates, metrics_window, checkpoint_every and threads must be >= 1");
  }
}

nlohmann::json to_json(const PpoConfig& c) {
  return {{"n_envs", c.n_envs},
          {"n_steps", c.n_steps},
          {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip_eps", c.clip_eps},
          {"epochs", c.epochs},
          {"minibatches", c.minibatches},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"max_grad_norm", c.max_grad_norm},
          {"action_std_init", c.action_std_init},
          {"learning_rate", c.learning_rate},
          {"kl_stop", c.kl_stop},
          {"adaptive_lr", c.adaptive_lr},
          {"desired_kl", c.desired_kl},
          {"actor_hidden", c.actor_hidden},
          {"critic_hidden", c.critic_hidden},
          {"updates", c.updates},
          {"metrics_window", c.metrics_window},
          {"checkpoint_every", c.checkpoint_every},
          {"joint_predictor", c.joint_predictor},
          {"threads", c.threads}};
}

RunningNorm::RunningNorm(int dim)
    : mean(Eigen::VectorXd::Zero(dim)), var(Eigen::VectorXd::Ones(dim)), count(1e-4) {}

void RunningNorm::update(const Eigen::MatrixXd& batch) {
  if (batch.rows() != mean.size()) throw nn::ShapeError("RunningNorm::update: dimension mismatch");
  const double n = static_cast<double>(batch.cols());
  if (n == 0.0) return;
  const Eigen::VectorXd bm = batch.rowwise().mean();
  const Eigen::VectorXd bv = (batch.colwise() - bm).array().square().rowwise().mean();
  const Eigen::VectorXd delta = bm - mean;
  const double total = count + n;
  mean += delta * (n / total);
  var = (var * count + bv * n + delta.cwiseProduct(delta) * (count * n / total)) / total;
  count = total;
}

Eigen::MatrixXd RunningNorm::apply(const Eigen::MatrixXd& x) const {
  const Eigen::Index d = mean.size();
  if (d == 0 || x.rows() % d != 0) throw nn::ShapeError("RunningNorm::apply: dimension mismatch");
  const Eigen::VectorXd inv = (var.array() + 1e-8).rsqrt().matrix();
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < x.rows() / d; ++b) {
    out.middleRows(b * d, d) =
        ((x.middleRows(b * d, d).colwise() - mean).array().colwise() * inv.array()).cwiseMax(-clip).cwiseMin(clip);
  }
  return out;
}

void Policy::audit() const {
  if (!fields_disjoint()) throw std::logic_error("policy audit: actor and critic-only fields overlap");
  for (const auto& a : kActorFields) {
    for (const auto& c : kCriticOnlyFields) {
      if (a.name == c.name) throw std::logic_error("policy audit: actor field " + std::string(a.name) + " is privileged");
    }
  }
  actor.validate();
  critic.validate();
  if (actor.input_size() != ServeEnv::actor_stack_size(history)) {
    throw nn::ShapeError("policy audit: actor input must be the stacked actor observation");
  }
  if (actor.output_size() != kActionSize || log_std.size() != kActionSize) {
    throw nn::ShapeError("policy audit: action size mismatch");
  }
  if (critic.input_size() != CriticObs::kSize || critic.output_size() != 1) {
    throw nn::ShapeError("policy audit: critic shape mismatch");
  }
  if (actor_norm.mean.size() != ActorObs::kSize || critic_norm.mean.size() != CriticObs::kSize) {
    throw nn::ShapeError("policy audit: normalizer size mismatch");
  }
}

Policy make_policy(const PpoConfig& cfg, int history, std::mt19937_64& rng) {
  Policy p;
  p.history = history;
  std::vector<int> a{ServeEnv::actor_stack_size(history)};
  a.insert(a.end(), cfg.actor_hidden.begin(), cfg.actor_hidden.end());
  a.push_back(kActionSize);
  std::vector<int> c{CriticObs::kSize};
  c.insert(c.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
  c.push_back(1);
  p.actor = nn::make_mlp<double>(a, nn::Activation::Elu, rng, std::sqrt(2.0), 0.01);
  p.critic = nn::make_mlp<double>(c, nn::Activation::Elu, rng, std::sqrt(2.0), 1.0);
  p.log_std = Eigen::VectorXd::Constant(kActionSize, std::log(cfg.action_std_init));
  p.audit();
  return p;
}

double gaussian_log_prob(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& mean,
                         const Eigen::VectorXd& log_std) {
  const Eigen::ArrayXd z = (a - mean).array() * (-log_std.array()).exp();
  return -0.5 * z.square().sum() - log_std.sum() - 0.5 * static_cast<double>(a.size()) * kLog2Pi;
}

double gaussian_entropy(const Eigen::VectorXd& log_std) {
  return log_std.sum() + 0.5 * static_cast<double>(log_std.size()) * (1.0 + kLog2Pi);
}

GaeResult compute_gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, const Eigen::VectorXd& dones,
                      const Eigen::VectorXd& bootstrap_values, int n_envs, int n_steps, double gamma,
                      double lambda) {
  const Eigen::Index n = static_cast<Eigen::Index>(n_envs) * n_steps;
  if (rewards.size() != n || values.size() != n || dones.size() != n || bootstrap_values.size() != n_envs) {
    throw nn::ShapeError("compute_gae: batch arrays do not match n_envs x n_steps");
  }
  GaeResult out{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  for (int e = 0; e < n_envs; ++e) {
    double next_adv = 0.0;
    double next_value = bootstrap_values(e);
    for (int t = n_steps - 1; t >= 0; --t) {
      const Eigen::Index i = static_cast<Eigen::Index>(t) * n_envs + e;
      const double live = 1.0 - dones(i);
      const double delta = rewards(i) + gamma * next_value * live - values(i);
      next_adv = delta + gamma * lambda * live * next_adv;
      out.advantages(i) = next_adv;
      next_value = values(i);
    }
  }
  out.returns = out.advantages + values;
  return out;
}

void compute_gae(RolloutBatch& batch, const PpoConfig& cfg) {
  GaeResult r = compute_gae(batch.rewards, batch.values, batch.dones, batch.bootstrap_values, batch.n_envs,
                            batch.n_steps, cfg.gamma, cfg.gae_lambda);
  batch.advantages = std::move(r.advantages);
  batch.returns = std::move(r.returns);
}

Eigen::VectorXd normalize_advantages(const Eigen::VectorXd& adv) {
  if (adv.size() == 0) return adv;
  const double mean = adv.mean();
  const double var = (adv.array() - mean).square().mean();
  return ((adv.array() - mean) / (std::sqrt(var) + 1e-8)).matrix();
}

VecEnv::VecEnv(const EnvParams& params, std::shared_ptr<const ApexPredictor> predictor, int n_envs,
               std::uint64_t seed) {
  if (n_envs < 1) throw std::invalid_argument("VecEnv: n_envs must be >= 1");
  envs_.reserve(static_cast<std::size_t>(n_envs));
  for (int i = 0; i < n_envs; ++i) {
    envs_.emplace_back(params, predictor, mix_seed(seed, 2 * static_cast<std::uint64_t>(i)));
    action_rngs_.emplace_back(mix_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1));
  }
}

void VecEnv::set_predictor(const std::shared_ptr<const ApexPredictor>& predictor) {
  for (auto& e : envs_) e.set_predictor(predictor);
}

Eigen::MatrixXd VecEnv::actor_stacks() const {
  const int h = envs_.front().params().env.history;
  Eigen::MatrixXd out(ServeEnv::actor_stack_size(h), size());
  for (int i = 0; i < size(); ++i) out.col(i) = envs_[static_cast<std::size_t>(i)].actor_stack();
  return out;
}

Eigen::MatrixXd VecEnv::critic_obs() const {
  Eigen::MatrixXd out(CriticObs::kSize, size());
  for (int i = 0; i < size(); ++i) out.col(i) = envs_[static_cast<std::size_t>(i)].critic_obs().to_vector();
  return out;
}

RolloutBatch collect_rollouts(Policy& policy, VecEnv& envs, const PpoConfig& cfg, CollectStats& stats,
                              bool update_norms, bool harvest_predictor_pairs) {
  policy.audit();
  const int ne = envs.size();
  const int ns = cfg.n_steps;
  const Eigen::Index n = static_cast<Eigen::Index>(ne) * ns;
  const int stack_rows = policy.actor.input_size();

  RolloutBatch b;
  b.n_envs = ne;
  b.n_steps = ns;
  b.actor_obs.resize(stack_rows, n);
  b.critic_obs.resize(CriticObs::kSize, n);
  b.actions.resize(kActionSize, n);
  b.log_probs.resize(n);
  b.rewards.resize(n);
  b.values.resize(n);
  b.dones.resize(n);

  const Eigen::VectorXd std_dev = policy.log_std.array().exp().matrix();
  std::vector<StepResult> results(static_cast<std::size_t>(ne));

  for (int t = 0; t < ns; ++t) {
    const Eigen::MatrixXd raw_actor = envs.actor_stacks();
    const Eigen::MatrixXd raw_critic = envs.critic_obs();
    if (raw_actor.rows() != stack_rows) throw nn::ShapeError("collect_rollouts: actor stack size mismatch");
    const Eigen::MatrixXd a_in = policy.actor_norm.apply(raw_actor);
    const Eigen::MatrixXd c_in = policy.critic_norm.apply(raw_critic);
    const Eigen::MatrixXd mu = nn::forward(policy.actor, a_in);
    const Eigen::MatrixXd v = nn::forward(policy.critic, c_in);
    for (int e = 0; e < ne; ++e) {
      if (!mu.col(e).allFinite() || !std::isfinite(v(0, e))) {
        std::ostringstream msg;
        msg << "collect_rollouts: non-finite policy output for env " << e << ", observation "
            << raw_actor.col(e).transpose();
        throw nn::NonFiniteError(msg.str());
      }
    }

    const Eigen::Index base = static_cast<Eigen::Index>(t) * ne;
    b.actor_obs.middleCols(base, ne) = a_in;
    b.critic_obs.middleCols(base, ne) = c_in;
    b.values.segment(base, ne) = v.row(0).transpose();
    for (int e = 0; e < ne; ++e) {
      std::normal_distribution<double> normal(0.0, 1.0);
      Action a;
      for (int k = 0; k < kActionSize; ++k) a(k) = mu(k, e) + std_dev(k) * normal(envs.action_rng(e));
      b.actions.col(base + e) = a;
      b.log_probs(base + e) = gaussian_log_prob(a, mu.col(e), policy.log_std);
    }

    parallel_for(ne, cfg.threads, [&](int e) {
      ServeEnv& env = envs.env(e);
      StepResult r = env.step(b.actions.col(base + e));
      if (r.done) env.reset();
      results[static_cast<std::size_t>(e)] = std::move(r);
    });

    for (int e = 0; e < ne; ++e) {
      const StepResult& r = results[static_cast<std::size_t>(e)];
      b.rewards(base + e) = r.reward.total;
      b.dones(base + e) = r.done ? 1.0 : 0.0;
      stats.reward_sum += r.reward.total;
      if (r.resolved) {
        const ServeScore s = score_serve(*r.resolved, envs.env(e).params().table);
        stats.serves.push_back({s.hit, s.success});
      }
      if (r.done) {
        ++stats.episodes;
        if (r.termination == Termination::Fell) ++stats.falls;
      }
      if (harvest_predictor_pairs && !r.done && envs.env(e).predictor_sample()) {
        stats.predictor_pairs.push_back(*envs.env(e).predictor_sample());
      }
    }

    if (update_norms) {
      policy.actor_norm.update(raw_actor.bottomRows(ActorObs::kSize));
      policy.critic_norm.update(raw_critic);
    }
  }

  b.bootstrap_values = nn::forward(policy.critic, policy.critic_norm.apply(envs.critic_obs())).row(0).transpose();
  return b;
}

ClippedSurrogate clipped_surrogate(double ratio, double advantage, double eps) {
  const double s1 = ratio * advantage;
  const double s2 = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage;
  if (s1 <= s2) return {s1, advantage};
  return {s2, 0.0};
}

PolicyOptimizer make_optimizer(const Policy& policy, const PpoConfig& cfg) {
  nn::AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  PolicyOptimizer opt;
  opt.actor = nn::make_opt_state(policy.actor, adam);
  opt.critic = nn::make_opt_state(policy.critic, adam);
  opt.log_std_m = Eigen::VectorXd::Zero(policy.log_std.size());
  opt.log_std_v = Eigen::VectorXd::Zero(policy.log_std.size());
  opt.learning_rate = cfg.learning_rate;
  return opt;
}

UpdateStats ppo_update(Policy& policy, PolicyOptimizer& opt, RolloutBatch& batch, const PpoConfig& cfg,
                       std::mt19937_64& rng) {
  policy.audit();
  const Eigen::Index n = batch.size();
  if (batch.advantages.size() != n || batch.returns.size() != n) {
    throw std::invalid_argument("ppo_update: advantages not computed");
  }
  const Eigen::VectorXd adv = normalize_advantages(batch.advantages);
  const int mb = cfg.minibatches;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  UpdateStats st;
  double kl_sum = 0.0;
  double clip_sum = 0.0;
  double actor_sum = 0.0;
  double value_sum = 0.0;
  double entropy_sum = 0.0;

  for (int epoch = 0; epoch < cfg.epochs && !st.early_stopped; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int k = 0; k < mb; ++k) {
      const Eigen::Index lo = n * k / mb;
      const Eigen::Index hi = n * (k + 1) / mb;
      const Eigen::Index m = hi - lo;
      std::vector<Eigen::Index> idx(order.begin() + lo, order.begin() + hi);

      const Eigen::MatrixXd x_a = batch.actor_obs(Eigen::all, idx);
      const Eigen::MatrixXd x_c = batch.critic_obs(Eigen::all, idx);
      const Eigen::MatrixXd acts = batch.actions(Eigen::all, idx);

      nn::MlpCache<double> cache_a;
      nn::MlpCache<double> cache_c;
      const Eigen::MatrixXd mu = nn::forward(policy.actor, x_a, &cache_a);
      const Eigen::MatrixXd v = nn::forward(policy.critic, x_c, &cache_c);

      const Eigen::ArrayXd inv_std = (-policy.log_std.array()).exp();
      const Eigen::ArrayXXd z = (acts - mu).array().colwise() * inv_std;

      Eigen::MatrixXd d_mu = Eigen::MatrixXd::Zero(kActionSize, m);
      Eigen::VectorXd d_log_std = Eigen::VectorXd::Zero(kActionSize);
      Eigen::MatrixXd d_v(1, m);
      double surrogate = 0.0;
      double kl = 0.0;
      int clipped = 0;
      double vloss = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::Index i = idx[static_cast<std::size_t>(j)];
        const double logp = gaussian_log_prob(acts.col(j), mu.col(j), policy.log_std);
        const double log_ratio = logp - batch.log_probs(i);
        const double ratio = std::exp(log_ratio);
        const ClippedSurrogate sur = clipped_surrogate(ratio, adv(i), cfg.clip_eps);
        surrogate += sur.value;
        if (std::abs(ratio - 1.0) > cfg.clip_eps) ++clipped;
        kl += (ratio - 1.0) - log_ratio;
        if (sur.d_ratio != 0.0) {
          // d ratio / d logp = ratio; d logp / d mu = z / sigma.
          const double g = -sur.d_ratio * ratio / static_cast<double>(m);
          d_mu.col(j) = g * (z.col(j) * inv_std).matrix();
          d_log_std += g * (z.col(j).square() - 1.0).matrix();
        }
        const double err = v(0, j) - batch.returns(i);
        vloss += err * err;
        d_v(0, j) = 2.0 * cfg.value_coef * err / static_cast<double>(m);
      }
      surrogate /= static_cast<double>(m);
      kl /= static_cast<double>(m);
      vloss /= static_cast<double>(m);
      const double entropy = gaussian_entropy(policy.log_std);
      d_log_std.array() -= cfg.entropy_coef;

      const double actor_loss = -surrogate - cfg.entropy_coef * entropy;
      const double value_loss = cfg.value_coef * vloss;
      if (!std::isfinite(actor_loss) || !std::isfinite(value_loss)) {
        throw nn::NonFiniteError("ppo_update: non-finite loss");
      }

      nn::MlpParams<double> g_a = nn::backward(policy.actor, cache_a, d_mu);
      nn::MlpParams<double> g_c = nn::backward(policy.critic, cache_c, d_v);
      const double norm = std::sqrt(nn::squared_norm(g_a) + nn::squared_norm(g_c) + d_log_std.squaredNorm());
      if (norm > cfg.max_grad_norm) {
        const double s = cfg.max_grad_norm / (norm + 1e-12);
        nn::scale_inplace(g_a, s);
        nn::scale_inplace(g_c, s);
        d_log_std *= s;
      }

      opt.actor.config.learning_rate = opt.learning_rate;
      opt.critic.config.learning_rate = opt.learning_rate;
      nn::opt_step(policy.actor, g_a, opt.actor);
      nn::opt_step(policy.critic, g_c, opt.critic);
      ++opt.log_std_step;
      nn::adam_block<double>(policy.log_std, d_log_std, opt.log_std_m, opt.log_std_v, opt.log_std_step,
                             opt.actor.config);
      policy.log_std = policy.log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);

      kl_sum += kl;
      clip_sum += static_cast<double>(clipped) / static_cast<double>(m);
      actor_sum += actor_loss;
      value_sum += value_loss;
      entropy_sum += entropy;
      ++st.minibatch_steps;

      if (cfg.adaptive_lr) {
        if (kl > 2.0 * cfg.desired_kl) opt.learning_rate = std::max(1e-5, opt.learning_rate / 1.5);
        if (kl < 0.5 * cfg.desired_kl) opt.learning_rate = std::min(1e-2, opt.learning_rate * 1.5);
      }
      if (kl > cfg.kl_stop) {
        st.early_stopped = true;
        break;
      }
    }
  }

  const double steps = static_cast<double>(std::max(1, st.minibatch_steps));
  st.kl = kl_sum / steps;
  st.clip_fraction = clip_sum / steps;
  st.actor_loss = actor_sum / steps;
  st.value_loss = value_sum / steps;
  st.entropy = entropy_sum / steps;
  return st;
}

void write_curves_csv(const std::filesystem::path& path, const std::vector<CurveRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.imbue(std::locale::classic());
  out.precision(10);
  out << "update,hit_rate,success_rate,actor_loss,value_loss,kl\n";
  for (const auto& r : rows) {
    out << r.update << ',' << r.hit_rate << ',' << r.success_rate << ',' << r.actor_loss << ',' << r.value_loss
        << ',' << r.kl << '\n';
  }
}

std::vector<CurveRow> read_curves_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "update,hit_rate,success_rate,actor_loss,value_loss,kl") {
    throw std::runtime_error(path.string() + ": unexpected curve header");
  }
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ss.imbue(std::locale::classic());
    CurveRow r;
    char c1, c2, c3, c4, c5;
    if (!(ss >> r.update >> c1 >> r.hit_rate >> c2 >> r.success_rate >> c3 >> r.actor_loss >> c4 >> r.value_loss >>
          c5 >> r.kl)) {
      throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

nlohmann::json policy_to_json(const Policy& p) {
  return {{"history", p.history},
          {"variant", to_string(p.variant)},
          {"actor", nn::to_json(p.actor)},
          {"critic", nn::to_json(p.critic)},
          {"log_std", std::vector<double>(p.log_std.data(), p.log_std.data() + p.log_std.size())},
          {"actor_norm", norm_to_json(p.actor_norm)},
          {"critic_norm", norm_to_json(p.critic_norm)}};
}

Policy policy_from_json(const nlohmann::json& j) {
  Policy p;
  p.history = j.at("history").get<int>();
  p.variant = variant_from_string(j.at("variant").get<std::string>());
  p.actor = nn::mlp_from_json<double>(j.at("actor"));
  p.critic = nn::mlp_from_json<double>(j.at("critic"));
  const auto ls = j.at("log_std").get<std::vector<double>>();
  p.log_std = Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  p.actor_norm = norm_from_json(j.at("actor_norm"));
  p.critic_norm = norm_from_json(j.at("critic_norm"));
  p.audit();
  return p;
}

void save_policy(const std::filesystem::path& path, const Policy& p) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << policy_to_json(p).dump() << '\n';
}

Policy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return policy_from_json(nlohmann::json::parse(in));
}

Action mean_action(const Policy& p, const Eigen::VectorXd& actor_stack) {
  const Eigen::MatrixXd x = p.actor_norm.apply(Eigen::MatrixXd(actor_stack));
  return nn::forward(p.actor, x).col(0);
}

namespace {

// One pass of Adam over harvested pairs; the folded scaling means the
// network maps raw positions to meters directly.
void joint_predictor_step(ApexPredictor& model, nn::OptState<double>& opt,
                          const std::vector<std::pair<PredictorInput, Vec3>>& pairs, std::mt19937_64& rng) {
  if (pairs.empty()) return;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  constexpr std::size_t kBatch = 64;
  for (std::size_t lo = 0; lo < order.size(); lo += kBatch) {
    const std::size_t hi = std::min(order.size(), lo + kBatch);
    const Eigen::Index m = static_cast<Eigen::Index>(hi - lo);
    Eigen::MatrixXd x(model.net.input_size(), m);
    Eigen::MatrixXd y(3, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      x.col(j) = pairs[order[lo + static_cast<std::size_t>(j)]].first.history;
      y.col(j) = pairs[order[lo + static_cast<std::size_t>(j)]].second;
    }
    nn::MlpCache<double> cache;
    const Eigen::MatrixXd out = nn::forward(model.net, x, &cache);
    const Eigen::MatrixXd grad = 2.0 * (out - y) / static_cast<double>(m);
    nn::opt_step(model.net, nn::backward(model.net, cache, grad), opt);
  }
}

}  // namespace

nlohmann::json training_identity(const PpoConfig& cfg, Variant variant, const nlohmann::json& run_config,
                                 const ApexPredictor* predictor) {
  return {{"ppo", to_json(cfg)},
          {"variant", to_string(variant)},
          {"run", run_config},
          {"predictor_hash", predictor ? hex64(fnv1a64(nn::to_json(predictor->net).dump())) : "none"}};
}

TrainResult train(const PpoConfig& cfg, EnvParams params, Variant variant,
                  std::shared_ptr<const ApexPredictor> predictor, const TrainOptions& options) {
  cfg.validate();
  apply_variant(variant, params);
  params.validate();

  std::mt19937_64 init_rng(mix_seed(options.seed, 1001));
  std::mt19937_64 update_rng(mix_seed(options.seed, 1002));

  TrainResult result;
  result.policy = make_policy(cfg, params.env.history, init_rng);
  result.policy.variant = variant;
  Policy& policy = result.policy;
  PolicyOptimizer opt = make_optimizer(policy, cfg);

  std::shared_ptr<ApexPredictor> joint;
  nn::OptState<double> joint_opt;
  const bool harvest = cfg.joint_predictor && params.env.use_predictor;
  if (harvest) {
    if (!predictor) throw std::invalid_argument("train: joint predictor mode needs an initial predictor");
    joint = std::make_shared<ApexPredictor>(*predictor);
    nn::AdamConfig adam;
    adam.learning_rate = 1e-4;
    joint_opt = nn::make_opt_state(joint->net, adam);
    predictor = joint;
  }
  if (!params.env.use_predictor) predictor = nullptr;

  VecEnv envs(params, predictor, cfg.n_envs, mix_seed(options.seed, 1003));

  nlohmann::json manifest = make_manifest(
      training_identity(cfg, variant, options.run_config, params.env.use_predictor ? predictor.get() : nullptr),
      options.seed);
  for (const auto& [k, v] : options.manifest_extra.items()) manifest[k] = v;

  std::ofstream curves_out;
  const bool files = !options.out_dir.empty();
  if (files) {
    std::filesystem::create_directories(options.out_dir);
    curves_out.open(options.out_dir / "curves.csv");
    if (!curves_out) throw std::runtime_error("cannot open curves.csv in " + options.out_dir.string());
    curves_out.imbue(std::locale::classic());
    curves_out.precision(10);
    curves_out << "update,hit_rate,success_rate,actor_loss,value_loss,kl\n";
  }
  const auto started = std::chrono::steady_clock::now();
  const auto checkpoint = [&](int update) {
    if (!files) return;
    save_policy(options.out_dir / "policy.json", policy);
    if (joint) nn::save_weights(options.out_dir / "predictor.json", joint->net);
    nlohmann::json m = manifest;
    m["update"] = update;
    m["train_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_json(options.out_dir / "manifest.json", m);
  };
  checkpoint(0);

  std::deque<ServeOutcome> window;
  int window_hits = 0;
  int window_successes = 0;

  for (int u = 1; u <= cfg.updates; ++u) {
    CollectStats cs;
    UpdateStats us;
    try {
      RolloutBatch batch = collect_rollouts(policy, envs, cfg, cs, true, harvest);
      compute_gae(batch, cfg);
      us = ppo_update(policy, opt, batch, cfg, update_rng);
    } catch (const nn::NonFiniteError& e) {
      throw TrainingDiverged(std::string("training diverged at update ") + std::to_string(u) + ": " + e.what());
    }

    for (const auto& s : cs.serves) {
      window.push_back(s);
      window_hits += s.hit;
      window_successes += s.success;
      if (static_cast<int>(window.size()) > cfg.metrics_window) {
        window_hits -= window.front().hit;
        window_successes -= window.front().success;
        window.pop_front();
      }
    }
    if (joint) {
      joint_predictor_step(*joint, joint_opt, cs.predictor_pairs, update_rng);
      envs.set_predictor(joint);
    }

    CurveRow row;
    row.update = u;
    const double w = std::max<double>(1.0, static_cast<double>(window.size()));
    row.hit_rate = static_cast<double>(window_hits) / w;
    row.success_rate = static_cast<double>(window_successes) / w;
    row.actor_loss = us.actor_loss;
    row.value_loss = us.value_loss;
    row.kl = us.kl;
    result.curves.push_back(row);
    if (files) {
      curves_out << row.update << ',' << row.hit_rate << ',' << row.success_rate << ',' << row.actor_loss << ','
                 << row.value_loss << ',' << row.kl << '\n';
      curves_out.flush();
    }
    if (options.on_update) options.on_update(row);
    if (u % cfg.checkpoint_every == 0 || u == cfg.updates) checkpoint(u);
  }
  result.predictor = joint;
  return result;
}

}  // namespace pingpong
