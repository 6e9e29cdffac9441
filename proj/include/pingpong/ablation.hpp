#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "pingpong/config.hpp"
#include "pingpong/evaluate.hpp"

namespace pingpong {

struct AblationConfig {
  RunConfig run;
  std::vector<Variant> variants = {Variant::Full, Variant::NoPredictor, Variant::NoHitGuidance,
                                   Variant::NoReturnGuidance};
  int eval_serves = 2000;   // per serve range
  int final_window = 100;   // curve rows averaged into the final rate
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;
  bool reuse = true;        // keep finished runs whose manifest matches
};

struct VariantOutcome {
  Variant variant = Variant::Full;
  bool ok = false;
  bool reused = false;
  std::string error;
  std::vector<CurveRow> curves;
  double final_hit = 0.0;
  double final_success = 0.0;
  double train_seconds = 0.0;  // as recorded when the run was trained
  std::optional<EvalReport> eval;
};

struct AblationReport {
  std::vector<VariantOutcome> variants;

  const VariantOutcome* find(Variant v) const;
};

// Mean over the last `window` rows.
double final_rate(const std::vector<CurveRow>& rows, int window, bool success);

// First update whose hit rate reaches `level`.
std::optional<int> first_update_reaching(const std::vector<CurveRow>& rows, double level);

using AblationProgress = std::function<void(Variant, const CurveRow&)>;

AblationReport run_ablation_suite(const AblationConfig& cfg, std::shared_ptr<const ApexPredictor> predictor,
                                  const AblationProgress& progress = {});

nlohmann::json to_json(const AblationReport& r, const AblationConfig& cfg);
std::string summary_table(const AblationReport& r);

}  // namespace pingpong
