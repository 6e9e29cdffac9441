#pragma once

#include <memory>
#include <nlohmann/json.hpp>
#include <vector>

#include "pingpong/ppo.hpp"

namespace pingpong {

struct RangeRow {
  ServeRange range = ServeRange::Mixed;
  int n_serves = 0;
  double hit_rate = 0.0;
  double success_rate = 0.0;
  // Same metrics without the first serve after each reset.
  int n_serves_excl_first = 0;
  double hit_rate_excl_first = 0.0;
  double success_rate_excl_first = 0.0;
};

struct StrikePoint {
  ServeRange range = ServeRange::Mixed;
  Vec3 p = Vec3::Zero();
};

struct SpeedStats {
  int n = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
};

struct EvalReport {
  std::vector<RangeRow> rows;
  std::vector<StrikePoint> strikes;  // contact points of successful returns
  SpeedStats outbound_speed;         // over all hits
  nlohmann::json manifest;
};

struct EvalOptions {
  int n_envs = 16;
  int threads = 1;
  std::ostream* serve_log = nullptr;  // JSONL, one line per scored serve
};

// Frozen policy with mean actions; each environment plays a fixed quota of
// serves so the result does not depend on scheduling.
EvalReport evaluate(const Policy& policy, EnvParams params, const std::vector<ServeRange>& ranges, int n_serves,
                    std::uint64_t seed, std::shared_ptr<const ApexPredictor> predictor,
                    const EvalOptions& options = {});

SpeedStats speed_stats(std::vector<double> speeds);

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

}  // namespace pingpong
