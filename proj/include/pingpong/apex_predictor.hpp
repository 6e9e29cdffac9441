#pragma once

#include <filesystem>
#include <random>
#include <stdexcept>
#include <vector>

#include "pingpong/mlp.hpp"
#include "pingpong/serve.hpp"
#include "pingpong/world.hpp"

namespace pingpong {

inline constexpr int kPredictorHistory = 5;
inline constexpr double kPolicyTick = 0.02;

// Recent ball positions, oldest first. Slots before the serve are zero and
// flagged invalid; they can only sit at the oldest end.
struct PredictorInput {
  Eigen::VectorXd history;  // 3 * H
  std::vector<bool> valid;

  int h() const { return static_cast<int>(valid.size()); }
  int n_valid() const;
  void validate() const;
};

// Builds an input from the last min(H, recent.size()) entries of `recent`
// (most recent last).
PredictorInput make_predictor_input(const std::vector<Vec3>& recent, int h = kPredictorHistory);

struct SanityBox {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  static SanityBox around(const TableGeometry& table);
  Vec3 clamp(const Vec3& p) const { return p.cwiseMax(lo).cwiseMin(hi); }
  bool contains(const Vec3& p) const { return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all(); }
};

// Network with input and output scaling folded into its first and last
// layers, so raw positions in and meters out.
struct ApexPredictor {
  nn::MlpParams<double> net;
  SanityBox box;

  int history() const { return net.input_size() / 3; }
};

ApexPredictor make_untrained_predictor(const TableGeometry& table, int h = kPredictorHistory);

Vec3 predict(const ApexPredictor& model, const PredictorInput& input);

// Weight file round trip; the sanity box is rebuilt from the table.
void save_predictor(const std::filesystem::path& path, const ApexPredictor& model);
ApexPredictor load_predictor(const std::filesystem::path& path, const TableGeometry& table);

// Desired base displacement: p_tilde.xy - p_base_xy.
Vec2 base_shift(const Vec3& p_tilde, const Vec2& p_base_xy);

struct PredictorConfig {
  int history = kPredictorHistory;
  std::vector<int> hidden = {64, 64};
  double tick = kPolicyTick;
  double noise_sigma = 0.005;
  double latency_prob = 0.5;
  long train_pairs = 250000;
  int holdout_serves = 1000;
  int epochs = 40;
  int batch_size = 64;
  double learning_rate = 2e-3;
  double final_learning_rate = 5e-5;
  ServeRange range = ServeRange::Mixed;

  void validate() const;
};

struct PredictorWorld {
  TableGeometry table;
  BallConstants ball;
  ServeConfig serve;
};

// Column-wise (history -> oracle apex) pairs.
struct PairSet {
  Eigen::MatrixXd inputs;   // 3H x n
  Eigen::MatrixXd targets;  // 3 x n
  std::vector<int> n_valid;

  long size() const { return static_cast<long>(targets.cols()); }
};

struct PairOptions {
  int history = kPredictorHistory;
  double tick = kPolicyTick;
  double noise_sigma = 0.0;
  double latency_prob = 0.0;
  bool full_history_only = false;
};

// Samples serves until at least `min_pairs` pairs are collected, forming one
// pair per policy tick between launch and the robot-half bounce.
PairSet generate_pairs(long min_pairs, ServeRange range, const PairOptions& opt, const PredictorWorld& world,
                       std::mt19937_64& rng);

PairSet generate_pairs_from_serves(int n_serves, ServeRange range, const PairOptions& opt,
                                   const PredictorWorld& world, std::mt19937_64& rng);

double rmse(const ApexPredictor& model, const PairSet& pairs);

struct PredictorTrainReport {
  long n_pairs = 0;
  std::vector<double> epoch_rmse;          // training loss per epoch
  std::vector<double> epoch_holdout_rmse;  // noisy full-history holdout
  double holdout_rmse = 0.0;               // noisy, full history
  double holdout_rmse_all_ticks = 0.0;     // noisy, every tick
  double holdout_rmse_clean = 0.0;         // noise-free, full history
};

class PredictorDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::pair<ApexPredictor, PredictorTrainReport> train_predictor(const PredictorConfig& cfg,
                                                               const PredictorWorld& world, std::uint64_t seed);

}  // namespace pingpong
