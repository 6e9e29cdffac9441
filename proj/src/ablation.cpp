#include "pingpong/ablation.hpp"

#include <fstream>
#include <iomanip>
#include <locale>
#include <sstream>

#include "pingpong/manifest.hpp"
#include "pingpong/report.hpp"

namespace pingpong {
namespace {

constexpr ServeRange kAllRanges[] = {ServeRange::Long, ServeRange::MidLong, ServeRange::Short, ServeRange::Mixed};

// A previous run counts only if it finished with the same identity.
bool finished_run_matches(const std::filesystem::path& dir, const nlohmann::json& identity, std::uint64_t seed,
                          int updates) {
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath) || !std::filesystem::exists(dir / "policy.json") ||
      !std::filesystem::exists(dir / "curves.csv")) {
    return false;
  }
  try {
    const nlohmann::json m = read_json(mpath);
    const nlohmann::json expect = make_manifest(identity, seed);
    return m.at("config_hash") == expect.at("config_hash") && m.at("code_hash") == expect.at("code_hash") &&
           m.at("seed").get<std::uint64_t>() == seed && m.at("update").get<int>() == updates &&
           static_cast<int>(read_curves_csv(dir / "curves.csv").size()) == updates;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

const VariantOutcome* AblationReport::find(Variant v) const {
  for (const auto& o : variants) {
    if (o.variant == v) return &o;
  }
  return nullptr;
}

double final_rate(const std::vector<CurveRow>& rows, int window, bool success) {
  if (rows.empty()) return 0.0;
  const std::size_t n = std::min(rows.size(), static_cast<std::size_t>(std::max(1, window)));
  double sum = 0.0;
  for (std::size_t i = rows.size() - n; i < rows.size(); ++i) sum += success ? rows[i].success_rate : rows[i].hit_rate;
  return sum / static_cast<double>(n);
}

std::optional<int> first_update_reaching(const std::vector<CurveRow>& rows, double level) {
  for (const auto& r : rows) {
    if (r.hit_rate >= level) return r.update;
  }
  return std::nullopt;
}

AblationReport run_ablation_suite(const AblationConfig& cfg, std::shared_ptr<const ApexPredictor> predictor,
                                  const AblationProgress& progress) {
  cfg.run.validate();
  if (cfg.out_dir.empty()) throw std::invalid_argument("ablation: out_dir required");
  std::filesystem::create_directories(cfg.out_dir);
  const nlohmann::json run_json = to_json(cfg.run);

  AblationReport report;
  for (const Variant v : cfg.variants) {
    VariantOutcome out;
    out.variant = v;
    const auto dir = cfg.out_dir / to_string(v);
    EnvParams params = cfg.run.env;
    apply_variant(v, params);
    const ApexPredictor* pred_for_hash = params.env.use_predictor ? predictor.get() : nullptr;
    const nlohmann::json identity = training_identity(cfg.run.ppo, v, run_json, pred_for_hash);
    try {
      if (cfg.reuse && finished_run_matches(dir, identity, cfg.seed, cfg.run.ppo.updates)) {
        out.curves = read_curves_csv(dir / "curves.csv");
        out.reused = true;
      } else {
        TrainOptions topt;
        topt.seed = cfg.seed;
        topt.out_dir = dir;
        topt.run_config = run_json;
        if (progress) topt.on_update = [&](const CurveRow& r) { progress(v, r); };
        out.curves = train(cfg.run.ppo, cfg.run.env, v, predictor, topt).curves;
      }
      out.train_seconds = read_json(dir / "manifest.json").value("train_seconds", 0.0);
      const Policy policy = load_policy(dir / "policy.json");
      std::vector<ServeRange> ranges{ServeRange::Mixed};
      if (v == Variant::Full) ranges.assign(std::begin(kAllRanges), std::end(kAllRanges));
      const std::uint64_t eval_seed = cfg.seed + 7919;
      EvalReport eval = evaluate(policy, cfg.run.env, ranges, cfg.eval_serves, eval_seed, predictor);
      eval.manifest = make_manifest(
          {{"training", identity}, {"eval_serves", cfg.eval_serves}, {"eval_seed", eval_seed}}, cfg.seed);
      write_json(dir / "eval.json", to_json(eval));
      out.eval = std::move(eval);
      out.final_hit = final_rate(out.curves, cfg.final_window, false);
      out.final_success = final_rate(out.curves, cfg.final_window, true);
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
    report.variants.push_back(std::move(out));
  }

  // Aligned curves: one row per update, two columns per variant.
  std::ofstream aligned(cfg.out_dir / "curves_aligned.csv");
  aligned.imbue(std::locale::classic());
  aligned << "update";
  std::size_t rows = 0;
  for (const auto& o : report.variants) {
    aligned << ',' << to_string(o.variant) << "_hit," << to_string(o.variant) << "_success";
    rows = std::max(rows, o.curves.size());
  }
  aligned << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    aligned << i + 1;
    for (const auto& o : report.variants) {
      if (i < o.curves.size()) {
        aligned << ',' << o.curves[i].hit_rate << ',' << o.curves[i].success_rate;
      } else {
        aligned << ",,";
      }
    }
    aligned << '\n';
  }

  std::vector<std::pair<std::string, std::vector<CurveRow>>> runs;
  for (const auto& o : report.variants) runs.emplace_back(to_string(o.variant), o.curves);
  write_text(cfg.out_dir / "hit_curves.svg", learning_curves_svg(runs, false));
  write_text(cfg.out_dir / "success_curves.svg", learning_curves_svg(runs, true));
  if (const VariantOutcome* full = report.find(Variant::Full); full && full->eval) {
    for (const ServeRange r : kAllRanges) {
      write_text(cfg.out_dir / ("strikes_" + to_string(r) + ".svg"),
                 strike_scatter_svg(*full->eval, r, cfg.run.env.table));
    }
  }
  write_json(cfg.out_dir / "summary.json", to_json(report, cfg));
  write_text(cfg.out_dir / "summary.md", summary_table(report));
  return report;
}

nlohmann::json to_json(const AblationReport& r, const AblationConfig& cfg) {
  nlohmann::json variants = nlohmann::json::array();
  for (const auto& o : r.variants) {
    nlohmann::json v{{"variant", to_string(o.variant)},
                     {"ok", o.ok},
                     {"reused", o.reused},
                     {"updates", o.curves.size()},
                     {"final_hit_rate", o.final_hit},
                     {"final_success_rate", o.final_success},
                     {"train_seconds", o.train_seconds}};
    if (!o.ok) v["error"] = o.error;
    if (o.eval) v["eval"] = to_json(*o.eval);
    variants.push_back(std::move(v));
  }
  return {{"variants", variants},
          {"final_window", cfg.final_window},
          {"manifest", make_manifest(to_json(cfg.run), cfg.seed)}};
}

std::string summary_table(const AblationReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << "| variant | updates | train min | final hit (train) | final success (train) | eval hit (mixed) | eval success (mixed) |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (const auto& o : r.variants) {
    out << "| " << to_string(o.variant) << " | ";
    if (!o.ok) {
      out << "failed: " << o.error << " | | | | | |\n";
      continue;
    }
    out << o.curves.size() << " | " << std::setprecision(1) << o.train_seconds / 60.0 << std::setprecision(3)
        << " | " << o.final_hit << " | " << o.final_success << " | ";
    const RangeRow* mixed = nullptr;
    if (o.eval) {
      for (const auto& row : o.eval->rows) {
        if (row.range == ServeRange::Mixed) mixed = &row;
      }
    }
    if (mixed) {
      out << mixed->hit_rate << " | " << mixed->success_rate << " |\n";
    } else {
      out << " | |\n";
    }
  }
  return out.str();
}

}  // namespace pingpong
