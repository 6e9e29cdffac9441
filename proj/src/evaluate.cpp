#include "pingpong/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace pingpong {
namespace {

struct EnvTally {
  std::vector<ServeRecord> records;
};

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(sorted.size() - 1, lo + 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Plays `quota` serves on one environment with mean actions.
void play(const Policy& policy, ServeEnv& env, int quota, EnvTally& tally) {
  env.reset();
  while (static_cast<int>(tally.records.size()) < quota) {
    const Action a = mean_action(policy, env.actor_stack());
    StepResult r = env.step(a);
    if (r.resolved) tally.records.push_back(std::move(*r.resolved));
    if (r.done) env.reset();
  }
}

}  // namespace

SpeedStats speed_stats(std::vector<double> speeds) {
  SpeedStats s;
  s.n = static_cast<int>(speeds.size());
  if (speeds.empty()) return s;
  std::sort(speeds.begin(), speeds.end());
  s.mean = std::accumulate(speeds.begin(), speeds.end(), 0.0) / static_cast<double>(speeds.size());
  s.p50 = quantile(speeds, 0.5);
  s.p90 = quantile(speeds, 0.9);
  return s;
}

EvalReport evaluate(const Policy& policy, EnvParams params, const std::vector<ServeRange>& ranges, int n_serves,
                    std::uint64_t seed, std::shared_ptr<const ApexPredictor> predictor, const EvalOptions& options) {
  policy.audit();
  if (n_serves < 1) throw std::invalid_argument("evaluate: n_serves must be >= 1");
  if (ranges.empty()) throw std::invalid_argument("evaluate: no serve range given");
  if (options.n_envs < 1) throw std::invalid_argument("evaluate: n_envs must be >= 1");
  apply_variant(policy.variant, params);
  if (policy.history != params.env.history) {
    throw nn::ShapeError("evaluate: policy history does not match the environment config");
  }
  if (!params.env.use_predictor) predictor = nullptr;
  if (params.env.use_predictor && !predictor) throw std::invalid_argument("evaluate: policy needs a predictor");

  EvalReport report;
  std::vector<double> speeds;
  const int ne = std::min(options.n_envs, n_serves);

  for (std::size_t ri = 0; ri < ranges.size(); ++ri) {
    EnvParams p = params;
    p.env.range = ranges[ri];
    std::vector<ServeEnv> envs;
    envs.reserve(static_cast<std::size_t>(ne));
    for (int e = 0; e < ne; ++e) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(ri), static_cast<std::uint32_t>(e), 0x65u};
      std::array<std::uint32_t, 2> s{};
      seq.generate(s.begin(), s.end());
      envs.emplace_back(p, predictor, (static_cast<std::uint64_t>(s[0]) << 32) | s[1]);
    }
    std::vector<EnvTally> tallies(static_cast<std::size_t>(ne));
    const auto quota = [&](int e) { return n_serves / ne + (e < n_serves % ne ? 1 : 0); };
    if (options.threads <= 1) {
      for (int e = 0; e < ne; ++e) play(policy, envs[static_cast<std::size_t>(e)], quota(e), tallies[static_cast<std::size_t>(e)]);
    } else {
      std::vector<std::thread> pool;
      const int t = std::min(options.threads, ne);
      for (int k = 0; k < t; ++k) {
        pool.emplace_back([&, k] {
          for (int e = k; e < ne; e += t) {
            play(policy, envs[static_cast<std::size_t>(e)], quota(e), tallies[static_cast<std::size_t>(e)]);
          }
        });
      }
      for (auto& th : pool) th.join();
    }

    RangeRow row;
    row.range = ranges[ri];
    int hits = 0, successes = 0, hits_x = 0, successes_x = 0;
    for (const auto& tally : tallies) {
      for (const auto& rec : tally.records) {
        const ServeScore s = score_serve(rec, p.table);
        ++row.n_serves;
        hits += s.hit;
        successes += s.success;
        if (rec.index_in_episode > 0) {
          ++row.n_serves_excl_first;
          hits_x += s.hit;
          successes_x += s.success;
        }
        if (s.hit) speeds.push_back(rec.outbound_speed);
        if (s.success && rec.contact_point) report.strikes.push_back({ranges[ri], *rec.contact_point});
        if (options.serve_log) {
          nlohmann::json line = to_json(rec, p.table);
          line["range"] = to_string(ranges[ri]);
          *options.serve_log << line.dump() << '\n';
        }
      }
    }
    const auto rate = [](int k, int n) { return n > 0 ? static_cast<double>(k) / n : 0.0; };
    row.hit_rate = rate(hits, row.n_serves);
    row.success_rate = rate(successes, row.n_serves);
    row.hit_rate_excl_first = rate(hits_x, row.n_serves_excl_first);
    row.success_rate_excl_first = rate(successes_x, row.n_serves_excl_first);
    report.rows.push_back(row);
  }
  report.outbound_speed = speed_stats(std::move(speeds));
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"range_kind", to_string(row.range)},
                    {"n_serves", row.n_serves},
                    {"hit_rate", row.hit_rate},
                    {"success_rate", row.success_rate},
                    {"excluding_first_serve",
                     {{"n_serves", row.n_serves_excl_first},
                      {"hit_rate", row.hit_rate_excl_first},
                      {"success_rate", row.success_rate_excl_first}}}});
  }
  nlohmann::json strikes = nlohmann::json::array();
  for (const auto& s : r.strikes) {
    strikes.push_back({{"range", to_string(s.range)}, {"p", {s.p.x(), s.p.y(), s.p.z()}}});
  }
  return {{"rows", rows},
          {"strike_points", strikes},
          {"outbound_speed",
           {{"n", r.outbound_speed.n},
            {"mean", r.outbound_speed.mean},
            {"p50", r.outbound_speed.p50},
            {"p90", r.outbound_speed.p90}}},
          {"manifest", r.manifest}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  for (const auto& row : j.at("rows")) {
    RangeRow x;
    x.range = serve_range_from_string(row.at("range_kind").get<std::string>());
    x.n_serves = row.at("n_serves").get<int>();
    x.hit_rate = row.at("hit_rate").get<double>();
    x.success_rate = row.at("success_rate").get<double>();
    const auto& ex = row.at("excluding_first_serve");
    x.n_serves_excl_first = ex.at("n_serves").get<int>();
    x.hit_rate_excl_first = ex.at("hit_rate").get<double>();
    x.success_rate_excl_first = ex.at("success_rate").get<double>();
    r.rows.push_back(x);
  }
  for (const auto& s : j.at("strike_points")) {
    const auto p = s.at("p").get<std::vector<double>>();
    if (p.size() != 3) throw std::runtime_error("eval report: strike point needs three coordinates");
    r.strikes.push_back({serve_range_from_string(s.at("range").get<std::string>()), Vec3(p[0], p[1], p[2])});
  }
  const auto& os = j.at("outbound_speed");
  r.outbound_speed = {os.at("n").get<int>(), os.at("mean").get<double>(), os.at("p50").get<double>(),
                      os.at("p90").get<double>()};
  if (j.contains("manifest")) r.manifest = j.at("manifest");
  return r;
}

}  // namespace pingpong
