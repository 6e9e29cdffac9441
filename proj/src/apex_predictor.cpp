#include "pingpong/apex_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pingpong/physics_oracle.hpp"

namespace pingpong {

int PredictorInput::n_valid() const { return static_cast<int>(std::count(valid.begin(), valid.end(), true)); }

void PredictorInput::validate() const {
  if (valid.empty() || history.size() != 3 * h()) throw std::invalid_argument("predictor input: shape mismatch");
  bool seen_valid = false;
  for (int i = 0; i < h(); ++i) {
    if (valid[static_cast<std::size_t>(i)]) {
      seen_valid = true;
    } else if (seen_valid) {
      throw std::invalid_argument("predictor input: invalid slot after a valid one");
    } else if (!history.segment<3>(3 * i).isZero(0.0)) {
      throw std::invalid_argument("predictor input: invalid slot is not zero-filled");
    }
  }
  if (!history.allFinite()) throw std::invalid_argument("predictor input: non-finite position");
}

PredictorInput make_predictor_input(const std::vector<Vec3>& recent, int h) {
  if (h < 1) throw std::invalid_argument("predictor input: history must be >= 1");
  PredictorInput in;
  in.history = Eigen::VectorXd::Zero(3 * h);
  in.valid.assign(static_cast<std::size_t>(h), false);
  const int n = std::min<int>(h, static_cast<int>(recent.size()));
  for (int i = 0; i < n; ++i) {
    const int slot = h - n + i;
    in.history.segment<3>(3 * slot) = recent[recent.size() - static_cast<std::size_t>(n - i)];
    in.valid[static_cast<std::size_t>(slot)] = true;
  }
  return in;
}

SanityBox SanityBox::around(const TableGeometry& table) {
  const double margin = 1.5;
  return {Vec3(table.opponent_end() - margin, -table.half_width() - margin, table.surface_height),
          Vec3(table.own_end() + margin, table.half_width() + margin, table.surface_height + 1.5)};
}

ApexPredictor make_untrained_predictor(const TableGeometry& table, int h) {
  return {nn::make_zero_mlp<double>({3 * h, 64, 64, 3}, nn::Activation::Elu), SanityBox::around(table)};
}

Vec3 predict(const ApexPredictor& model, const PredictorInput& input) {
  if (input.h() != model.history()) {
    throw nn::ShapeError("predict: history length " + std::to_string(input.h()) + " does not match the network (" +
                         std::to_string(model.history()) + ")");
  }
  const Eigen::VectorXd y = nn::forward(model.net, input.history);
  return model.box.clamp(Vec3(y(0), y(1), y(2)));
}

void save_predictor(const std::filesystem::path& path, const ApexPredictor& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nn::save_weights(path, model.net);
}

ApexPredictor load_predictor(const std::filesystem::path& path, const TableGeometry& table) {
  ApexPredictor model{nn::load_weights<double>(path), SanityBox::around(table)};
  model.net.validate();
  if (model.net.input_size() % 3 != 0 || model.net.output_size() != 3) {
    throw nn::ShapeError("predictor weights: expected 3H inputs and 3 outputs");
  }
  return model;
}

Vec2 base_shift(const Vec3& p_tilde, const Vec2& p_base_xy) { return p_tilde.head<2>() - p_base_xy; }

void PredictorConfig::validate() const {
  if (history < 1) throw std::invalid_argument("predictor: history must be >= 1");
  if (hidden.empty()) throw std::invalid_argument("predictor: need at least one hidden layer");
  if (!(tick > 0.0 && noise_sigma >= 0.0 && latency_prob >= 0.0 && latency_prob <= 1.0)) {
    throw std::invalid_argument("predictor: bad tick, noise or latency probability");
  }
  if (train_pairs < 1 || holdout_serves < 1 || epochs < 1 || batch_size < 1) {
    throw std::invalid_argument("predictor: budgets must be positive");
  }
  if (!(learning_rate > 0.0 && final_learning_rate > 0.0)) throw std::invalid_argument("predictor: bad learning rate");
}

namespace {

struct PairBuffer {
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Vec3> targets;
  std::vector<int> n_valid;
};

// Returns the number of pairs added.
long add_serve_pairs(PairBuffer& buf, ServeRange range, const PairOptions& opt, const PredictorWorld& world,
                     std::mt19937_64& rng) {
  const ServeSpec spec = sample_serve(range, rng, world.serve, world.table, world.ball);
  std::mt19937_64 noise_rng(rng());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const BallState s0 = launch_state(spec);
  const PredictionBundle bundle = predict_incoming(s0, world.ball, world.table);
  if (!bundle.bounce_valid) return 0;

  std::vector<Vec3> positions{s0.p};
  const FlightModel model(world.ball, world.table);
  BallState s = s0;
  for (int k = 1;; ++k) {
    const double t_k = k * opt.tick;
    if (t_k >= *bundle.t_bounce) break;
    bool contact = false;
    while (s.t < t_k) {
      const auto ev = model.advance(s, t_k);
      if (ev && ev->kind != EventKind::NetPlaneCross) contact = true;
    }
    if (contact) break;
    positions.push_back(s.p);
  }
  for (auto& p : positions) {
    if (opt.noise_sigma > 0.0) p += opt.noise_sigma * Vec3(noise(noise_rng), noise(noise_rng), noise(noise_rng));
  }

  long added = 0;
  std::vector<Vec3> window;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    std::size_t end = k;
    if (opt.latency_prob > 0.0 && u01(noise_rng) < opt.latency_prob && k > 0) end = k - 1;
    window.assign(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(end + 1));
    PredictorInput in = make_predictor_input(window, opt.history);
    if (opt.full_history_only && in.n_valid() < opt.history) continue;
    buf.inputs.push_back(std::move(in.history));
    buf.targets.push_back(*bundle.apex);
    buf.n_valid.push_back(std::min<int>(opt.history, static_cast<int>(end + 1)));
    ++added;
  }
  return added;
}

PairSet to_pair_set(const PairBuffer& buf, int history) {
  PairSet out;
  const auto n = static_cast<Eigen::Index>(buf.targets.size());
  out.inputs.resize(3 * history, n);
  out.targets.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.inputs.col(i) = buf.inputs[static_cast<std::size_t>(i)];
    out.targets.col(i) = buf.targets[static_cast<std::size_t>(i)];
  }
  out.n_valid = buf.n_valid;
  return out;
}

// Folds x -> (x - mu_x) / sd_x and y -> sd_y * y + mu_y into the network.
nn::MlpParams<double> fold_scaling(nn::MlpParams<double> net, const Eigen::VectorXd& mu_x,
                                   const Eigen::VectorXd& sd_x, const Eigen::VectorXd& mu_y,
                                   const Eigen::VectorXd& sd_y) {
  const Eigen::VectorXd inv = sd_x.cwiseInverse();
  net.biases.front() -= net.weights.front() * mu_x.cwiseProduct(inv);
  net.weights.front() = net.weights.front() * inv.asDiagonal();
  net.weights.back() = sd_y.asDiagonal() * net.weights.back();
  net.biases.back() = sd_y.cwiseProduct(net.biases.back()) + mu_y;
  return net;
}

}  // namespace

PairSet generate_pairs(long min_pairs, ServeRange range, const PairOptions& opt, const PredictorWorld& world,
                       std::mt19937_64& rng) {
  PairBuffer buf;
  long total = 0;
  long serves = 0;
  while (total < min_pairs) {
    total += add_serve_pairs(buf, range, opt, world, rng);
    if (++serves > 100 * (min_pairs + 10) && total == 0) {
      throw std::runtime_error("generate_pairs: serves never reach the robot half");
    }
  }
  return to_pair_set(buf, opt.history);
}

PairSet generate_pairs_from_serves(int n_serves, ServeRange range, const PairOptions& opt,
                                   const PredictorWorld& world, std::mt19937_64& rng) {
  PairBuffer buf;
  for (int i = 0; i < n_serves; ++i) add_serve_pairs(buf, range, opt, world, rng);
  return to_pair_set(buf, opt.history);
}

double rmse(const ApexPredictor& model, const PairSet& pairs) {
  if (pairs.size() == 0) throw std::invalid_argument("rmse: empty pair set");
  Eigen::MatrixXd y = nn::forward(model.net, pairs.inputs);
  for (Eigen::Index i = 0; i < y.cols(); ++i) y.col(i) = model.box.clamp(y.col(i));
  return std::sqrt((y - pairs.targets).colwise().squaredNorm().mean());
}

std::pair<ApexPredictor, PredictorTrainReport> train_predictor(const PredictorConfig& cfg,
                                                               const PredictorWorld& world, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 data_rng(seed);
  std::mt19937_64 holdout_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 init_rng(seed + 1);
  std::mt19937_64 shuffle_rng(seed + 2);

  PairOptions train_opt;
  train_opt.history = cfg.history;
  train_opt.tick = cfg.tick;
  train_opt.noise_sigma = cfg.noise_sigma;
  train_opt.latency_prob = cfg.latency_prob;
  const PairSet train = generate_pairs(cfg.train_pairs, cfg.range, train_opt, world, data_rng);

  PairOptions hold_opt = train_opt;
  hold_opt.latency_prob = 0.0;
  hold_opt.full_history_only = true;
  std::mt19937_64 hold_copy = holdout_rng;
  const PairSet holdout = generate_pairs_from_serves(cfg.holdout_serves, cfg.range, hold_opt, world, holdout_rng);

  const Eigen::VectorXd mu_x = train.inputs.rowwise().mean();
  Eigen::VectorXd sd_x = ((train.inputs.colwise() - mu_x).array().square().rowwise().mean()).sqrt().matrix();
  const Eigen::VectorXd mu_y = train.targets.rowwise().mean();
  Eigen::VectorXd sd_y = ((train.targets.colwise() - mu_y).array().square().rowwise().mean()).sqrt().matrix();
  sd_x = sd_x.unaryExpr([](double s) { return s > 1e-6 ? s : 1.0; });
  sd_y = sd_y.unaryExpr([](double s) { return s > 1e-6 ? s : 1.0; });
  const Eigen::MatrixXd xn = (train.inputs.colwise() - mu_x).array().colwise() / sd_x.array();

  std::vector<int> sizes{3 * cfg.history};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(3);
  nn::MlpParams<double> net = nn::make_mlp<double>(sizes, nn::Activation::Elu, init_rng, std::sqrt(2.0), 1.0);
  nn::OptState<double> opt = nn::make_opt_state(net, nn::AdamConfig{cfg.learning_rate});

  PredictorTrainReport report;
  report.n_pairs = train.size();
  ApexPredictor model{net, SanityBox::around(world.table)};
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);
  const double decay = std::pow(cfg.final_learning_rate / cfg.learning_rate, 1.0 / std::max(1, cfg.epochs - 1));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.config.learning_rate = cfg.learning_rate * std::pow(decay, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sq_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Eigen::MatrixXd xb = xn(Eigen::all, idx);
      const Eigen::MatrixXd tb = train.targets(Eigen::all, idx);
      nn::MlpCache<double> cache;
      const Eigen::MatrixXd yn = nn::forward(net, xb, &cache);
      const Eigen::MatrixXd err = (sd_y.asDiagonal() * yn).colwise() + mu_y - tb;
      const double sq = err.colwise().squaredNorm().sum();
      sq_sum += sq;
      const double loss = std::sqrt(sq / static_cast<double>(idx.size()));
      if (!(loss > 0.0)) continue;
      // d/dy sqrt(mean |e|^2) = e / (n * loss), mapped back through the output scale.
      const Eigen::MatrixXd grad = sd_y.asDiagonal() * err / (static_cast<double>(idx.size()) * loss);
      nn::opt_step(net, nn::backward(net, cache, grad), opt);
    }
    report.epoch_rmse.push_back(std::sqrt(sq_sum / static_cast<double>(order.size())));
    model.net = fold_scaling(net, mu_x, sd_x, mu_y, sd_y);
    const double hold = rmse(model, holdout);
    report.epoch_holdout_rmse.push_back(hold);
    // The holdout goes through the sanity clamp, so the raw training error is checked too.
    const double fit = report.epoch_rmse.back();
    if (!std::isfinite(hold) || !std::isfinite(fit) || (epoch >= 1 && std::max(hold, fit) > 5.0)) {
      std::ostringstream msg;
      msg << "train_predictor: diverged at epoch " << epoch << " (holdout rmse " << hold << ", train rmse "
          << fit << ", lr " << opt.config.learning_rate << ")";
      throw PredictorDivergence(msg.str());
    }
  }

  report.holdout_rmse = report.epoch_holdout_rmse.back();
  PairOptions all_opt = hold_opt;
  all_opt.full_history_only = false;
  std::mt19937_64 rng_all = hold_copy;
  report.holdout_rmse_all_ticks =
      rmse(model, generate_pairs_from_serves(cfg.holdout_serves, cfg.range, all_opt, world, rng_all));
  PairOptions clean_opt = hold_opt;
  clean_opt.noise_sigma = 0.0;
  std::mt19937_64 rng_clean = hold_copy;
  report.holdout_rmse_clean =
      rmse(model, generate_pairs_from_serves(cfg.holdout_serves, cfg.range, clean_opt, world, rng_clean));
  return {model, report};
}

}  // namespace pingpong
