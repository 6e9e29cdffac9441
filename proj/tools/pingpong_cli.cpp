#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pingpong/ablation.hpp"
#include "pingpong/config.hpp"
#include "pingpong/drag_calibration.hpp"
#include "pingpong/evaluate.hpp"
#include "pingpong/manifest.hpp"
#include "pingpong/report.hpp"

namespace fs = std::filesystem;
using namespace pingpong;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "runs/latest";
  std::string log_level = "info";
  std::vector<std::string> argv;

  std::uint64_t resolved_seed() const {
    if (seed) return *seed;
    if (const char* env = std::getenv("PINGPONG_SEED")) {
      try {
        std::size_t used = 0;
        const std::uint64_t s = std::stoull(env, &used);
        if (used == std::string(env).size()) return s;
      } catch (const std::exception&) {
      }
      throw CLI::ValidationError("PINGPONG_SEED", std::string("not an unsigned integer: ") + env);
    }
    return 1;
  }

  RunConfig run_config() const { return config.empty() ? RunConfig{} : load_config(config); }
};

void write_run_manifest(const Globals& g, const std::string& command, const RunConfig& cfg,
                        const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json m = make_manifest(to_json(cfg), g.resolved_seed());
  m["command"] = command;
  m["argv"] = g.argv;
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_json(fs::path(g.out) / "manifest.json", m);
}

std::shared_ptr<const ApexPredictor> predictor_for(const std::string& path, const RunConfig& cfg, bool needed,
                                                   std::uint64_t seed) {
  if (!needed) return nullptr;
  if (!path.empty()) return std::make_shared<ApexPredictor>(load_predictor(path, cfg.env.table));
  spdlog::info("no --predictor given; training one ({} pairs)", cfg.predictor.train_pairs);
  auto [model, report] = train_predictor(cfg.predictor, {cfg.env.table, cfg.env.ball, cfg.env.serve}, seed);
  spdlog::info("predictor holdout RMSE {:.4f} m", report.holdout_rmse);
  return std::make_shared<ApexPredictor>(std::move(model));
}

std::vector<ServeRange> parse_ranges(const std::string& s) {
  if (s == "all") return {ServeRange::Long, ServeRange::MidLong, ServeRange::Short, ServeRange::Mixed};
  return {serve_range_from_string(s)};
}

int cmd_simulate(const Globals& g, const std::string& range, int n, double horizon, double interval) {
  const RunConfig cfg = g.run_config();
  std::mt19937_64 rng(g.resolved_seed());
  const ServeRange r = serve_range_from_string(range);
  SimulateOptions opt;
  opt.sample_interval = interval;
  fs::create_directories(g.out);
  for (int i = 0; i < n; ++i) {
    const ServeSpec spec = sample_serve(r, rng, cfg.env.serve, cfg.env.table, cfg.env.ball);
    const Trajectory traj = simulate(launch_state(spec), cfg.env.ball, cfg.env.table, horizon,
                                     StopRule::after_n_bounces(2), opt);
    std::ostringstream name;
    name << "serve_" << std::setw(4) << std::setfill('0') << i;
    write_trajectory_csv(fs::path(g.out) / (name.str() + ".csv"), traj);
    write_events_json(fs::path(g.out) / (name.str() + "_events.json"), traj);
  }
  write_run_manifest(g, "simulate", cfg, {{"range", range}, {"n", n}, {"horizon", horizon}});
  spdlog::info("wrote {} trajectories to {}", n, g.out);
  return 0;
}

int cmd_calibrate(const Globals& g, const std::string& tracks_dir, double rate, int synthetic, double true_k,
                  double noise) {
  const RunConfig cfg = g.run_config();
  std::vector<SampledTrack> tracks;
  if (!tracks_dir.empty()) {
    tracks = load_tracks(tracks_dir, rate);
  } else {
    if (synthetic < 1) throw CLI::ValidationError("calibrate", "give --tracks or --synthetic N");
    tracks = synthetic_tracks(true_k, synthetic, 0.4, rate, noise, g.resolved_seed());
  }
  const DragFit fit = fit_drag(tracks, cfg.env.ball.gravity);
  const nlohmann::json out{{"k_hat", fit.k_hat},       {"k_raw", fit.k_raw},
                           {"clamped", fit.clamped},   {"residual_rms", fit.residual_rms},
                           {"n_samples", fit.n_samples_used}, {"per_track_k", fit.per_track_k},
                           {"n_tracks", tracks.size()}};
  write_json(fs::path(g.out) / "drag_fit.json", out);
  write_run_manifest(g, "calibrate", cfg,
                     {{"tracks", tracks_dir}, {"rate_hz", rate}, {"synthetic", synthetic}, {"true_k", true_k},
                      {"noise", noise}});
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_train_predictor(const Globals& g) {
  const RunConfig cfg = g.run_config();
  auto [model, report] = train_predictor(cfg.predictor, {cfg.env.table, cfg.env.ball, cfg.env.serve},
                                         g.resolved_seed());
  save_predictor(fs::path(g.out) / "predictor.json", model);
  const nlohmann::json rep{{"n_pairs", report.n_pairs},
                           {"epoch_rmse", report.epoch_rmse},
                           {"epoch_holdout_rmse", report.epoch_holdout_rmse},
                           {"holdout_rmse", report.holdout_rmse},
                           {"holdout_rmse_all_ticks", report.holdout_rmse_all_ticks},
                           {"holdout_rmse_clean", report.holdout_rmse_clean}};
  write_json(fs::path(g.out) / "predictor_report.json", rep);
  write_run_manifest(g, "train-predictor", cfg);
  spdlog::info("holdout RMSE {:.4f} m over {} training pairs", report.holdout_rmse, report.n_pairs);
  return 0;
}

int cmd_train(const Globals& g, const std::string& variant_name, const std::string& predictor_path,
              std::optional<int> updates, bool joint) {
  RunConfig cfg = g.run_config();
  if (updates) cfg.ppo.updates = *updates;
  if (joint) cfg.ppo.joint_predictor = true;
  cfg.validate();
  const Variant v = variant_from_string(variant_name);
  EnvParams probe = cfg.env;
  apply_variant(v, probe);
  const auto pred = predictor_for(predictor_path, cfg, probe.env.use_predictor, g.resolved_seed());
  if (pred) save_predictor(fs::path(g.out) / "predictor_initial.json", *pred);
  TrainOptions opt;
  opt.seed = g.resolved_seed();
  opt.out_dir = g.out;
  opt.run_config = to_json(cfg);
  opt.on_update = [&](const CurveRow& r) {
    if (r.update % 50 == 0 || r.update == cfg.ppo.updates) {
      spdlog::info("update {} hit {:.3f} success {:.3f} kl {:.4f}", r.update, r.hit_rate, r.success_rate, r.kl);
    }
  };
  train(cfg.ppo, cfg.env, v, pred, opt);
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& weights, const std::string& predictor_path,
                 const std::string& range, int n, bool log_serves) {
  const RunConfig cfg = g.run_config();
  const Policy policy = load_policy(weights);
  EnvParams probe = cfg.env;
  apply_variant(policy.variant, probe);
  std::shared_ptr<const ApexPredictor> pred;
  if (probe.env.use_predictor) {
    std::string path = predictor_path;
    if (path.empty()) {
      // A training run keeps its predictor next to the policy.
      for (const char* name : {"predictor.json", "predictor_initial.json"}) {
        const fs::path p = fs::path(weights).parent_path() / name;
        if (fs::exists(p)) {
          path = p.string();
          break;
        }
      }
    }
    if (path.empty()) throw std::runtime_error("evaluate: this policy needs --predictor");
    pred = std::make_shared<ApexPredictor>(load_predictor(path, cfg.env.table));
  }
  fs::create_directories(g.out);
  std::ofstream serve_log;
  EvalOptions opt;
  opt.threads = cfg.ppo.threads;
  if (log_serves) {
    serve_log.open(fs::path(g.out) / "serves.jsonl");
    opt.serve_log = &serve_log;
  }
  EvalReport report = evaluate(policy, cfg.env, parse_ranges(range), n, g.resolved_seed(), pred, opt);
  report.manifest = make_manifest(to_json(cfg), g.resolved_seed());
  report.manifest["weights"] = weights;
  report.manifest["range"] = range;
  report.manifest["n_serves"] = n;
  write_json(fs::path(g.out) / "eval.json", to_json(report));
  write_run_manifest(g, "evaluate", cfg, {{"weights", weights}, {"range", range}, {"n", n}});
  for (const auto& row : report.rows) {
    std::cout << to_string(row.range) << ": serves " << row.n_serves << ", hit " << row.hit_rate << ", success "
              << row.success_rate << '\n';
  }
  return 0;
}

int cmd_ablate(const Globals& g, const std::string& budget, const std::string& predictor_path, int eval_serves,
               bool fresh) {
  AblationConfig acfg;
  acfg.run = g.run_config();
  if (budget == "smoke") {
    acfg.run.ppo.n_envs = 4;
    acfg.run.ppo.updates = 5;
    acfg.run.ppo.actor_hidden = {32, 32};
    acfg.run.ppo.critic_hidden = {32, 32};
    acfg.run.predictor.train_pairs = 5000;
    acfg.run.predictor.epochs = 3;
    acfg.run.predictor.holdout_serves = 50;
    eval_serves = std::min(eval_serves, 40);
  } else if (budget != "desk") {
    throw CLI::ValidationError("--budget", "expected desk or smoke");
  }
  acfg.run.validate();
  acfg.seed = g.resolved_seed();
  acfg.out_dir = g.out;
  acfg.eval_serves = eval_serves;
  acfg.reuse = !fresh;
  const auto pred = predictor_for(predictor_path, acfg.run, true, g.resolved_seed());
  save_predictor(fs::path(g.out) / "predictor.json", *pred);
  const AblationReport r = run_ablation_suite(acfg, pred, [&](Variant v, const CurveRow& row) {
    if (row.update % 100 == 0) {
      spdlog::info("{} update {} hit {:.3f} success {:.3f}", to_string(v), row.update, row.hit_rate, row.success_rate);
    }
  });
  write_run_manifest(g, "ablate", acfg.run, {{"budget", budget}, {"eval_serves", eval_serves}});
  std::cout << summary_table(r);
  for (const auto& o : r.variants) {
    if (!o.ok) spdlog::error("variant {} failed: {}", to_string(o.variant), o.error);
  }
  return 0;
}

int cmd_report(const Globals& g, const std::vector<std::string>& curves, const std::string& eval_path) {
  if (curves.empty() && eval_path.empty()) throw CLI::ValidationError("report", "give --curves and/or --eval");
  const RunConfig cfg = g.run_config();
  fs::create_directories(g.out);
  if (!curves.empty()) {
    std::vector<std::pair<std::string, std::vector<CurveRow>>> runs;
    for (const auto& c : curves) {
      const fs::path p(c);
      const std::string name = p.parent_path().filename().string().empty() ? p.stem().string()
                                                                             : p.parent_path().filename().string();
      runs.emplace_back(name, read_curves_csv(p));
    }
    write_text(fs::path(g.out) / "hit_curves.svg", learning_curves_svg(runs, false));
    write_text(fs::path(g.out) / "success_curves.svg", learning_curves_svg(runs, true));
  }
  if (!eval_path.empty()) {
    const EvalReport r = eval_report_from_json(read_json(eval_path));
    for (const auto& row : r.rows) {
      write_text(fs::path(g.out) / ("strikes_" + to_string(row.range) + ".svg"),
                 strike_scatter_svg(r, row.range, cfg.env.table));
    }
  }
  write_run_manifest(g, "report", cfg, {{"curves", curves}, {"eval", eval_path}});
  spdlog::info("figures written to {}", g.out);
  return 0;
}

int cmd_predict(const Globals& g, const std::string& predictor_path, const std::string& history) {
  const RunConfig cfg = g.run_config();
  const ApexPredictor model = load_predictor(predictor_path, cfg.env.table);
  std::vector<Vec3> recent;
  if (fs::is_regular_file(history)) {
    for (const auto& row : read_positions_csv(history)) recent.push_back(row.p);
  } else {
    std::stringstream ss(history);
    std::string item;
    while (std::getline(ss, item, ';')) {
      std::stringstream is(item);
      is.imbue(std::locale::classic());
      double x, y, z;
      char c1, c2;
      if (!(is >> x >> c1 >> y >> c2 >> z) || c1 != ',' || c2 != ',') {
        throw CLI::ValidationError("--history", "expected a t,x,y,z CSV file or x,y,z;x,y,z;... got '" + item + "'");
      }
      recent.emplace_back(x, y, z);
    }
  }
  if (recent.empty()) throw CLI::ValidationError("--history", "no positions given");
  const Vec3 apex = predict(model, make_predictor_input(recent, model.history()));
  std::cout << nlohmann::json{{"apex", {apex.x(), apex.y(), apex.z()}}}.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Table tennis serve simulator, predictor and PPO trainer"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);
  app.add_option("--config", g.config, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Random seed (falls back to PINGPONG_SEED, then 1)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();

  std::function<int()> run;

  auto* sim = app.add_subcommand("simulate", "Sample serves and write trajectory CSVs with event logs");
  std::string sim_range = "mixed";
  int sim_n = 10;
  double sim_horizon = 2.0, sim_interval = 0.01;
  sim->add_option("--range", sim_range, "long, mid-long, short or mixed")->capture_default_str();
  sim->add_option("--n", sim_n, "Number of serves")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--horizon", sim_horizon, "Seconds per trajectory")->check(CLI::PositiveNumber);
  sim->add_option("--sample-interval", sim_interval, "Seconds between samples")->check(CLI::PositiveNumber);
  sim->callback([&] { run = [&] { return cmd_simulate(g, sim_range, sim_n, sim_horizon, sim_interval); }; });

  auto* cal = app.add_subcommand("calibrate", "Fit the drag coefficient from position tracks");
  std::string cal_tracks;
  double cal_rate = 150.0, cal_k = 0.112, cal_noise = 0.005;
  int cal_synth = 0;
  cal->add_option("--tracks", cal_tracks, "Directory of t,x,y,z CSV tracks")->check(CLI::ExistingDirectory);
  cal->add_option("--rate", cal_rate, "Sample rate in Hz")->check(CLI::PositiveNumber)->capture_default_str();
  cal->add_option("--synthetic", cal_synth, "Generate N synthetic tracks instead")->check(CLI::PositiveNumber);
  cal->add_option("--true-k", cal_k, "Drag coefficient of the synthetic tracks")->capture_default_str();
  cal->add_option("--noise", cal_noise, "Position noise of the synthetic tracks (m)")->capture_default_str();
  cal->callback([&] { run = [&] { return cmd_calibrate(g, cal_tracks, cal_rate, cal_synth, cal_k, cal_noise); }; });

  auto* tp = app.add_subcommand("train-predictor", "Train the apex predictor on simulated serves");
  tp->callback([&] { run = [&] { return cmd_train_predictor(g); }; });

  auto* tr = app.add_subcommand("train", "Train a policy with PPO");
  std::string tr_variant = "full", tr_pred;
  std::optional<int> tr_updates;
  bool tr_joint = false;
  tr->add_option("--variant", tr_variant, "full, no-predictor, no-hit-guidance or no-return-guidance")
      ->capture_default_str();
  tr->add_option("--predictor", tr_pred, "Predictor weights (trained first when absent)")->check(CLI::ExistingFile);
  tr->add_option("--updates", tr_updates, "Override the number of PPO updates")->check(CLI::PositiveNumber);
  tr->add_flag("--joint-predictor", tr_joint, "Keep training the predictor between policy updates");
  tr->callback([&] { run = [&] { return cmd_train(g, tr_variant, tr_pred, tr_updates, tr_joint); }; });

  auto* ev = app.add_subcommand("evaluate", "Evaluate a frozen policy with mean actions");
  std::string ev_weights, ev_pred, ev_range = "mixed";
  int ev_n = 1000;
  bool ev_log = false;
  ev->add_option("--weights", ev_weights, "policy.json from a training run")->required()->check(CLI::ExistingFile);
  ev->add_option("--predictor", ev_pred, "Predictor weights")->check(CLI::ExistingFile);
  ev->add_option("--range", ev_range, "long, mid-long, short, mixed or all")->capture_default_str();
  ev->add_option("--n", ev_n, "Serves per range")->check(CLI::PositiveNumber)->capture_default_str();
  ev->add_flag("--log-serves", ev_log, "Write one JSON line per serve");
  ev->callback([&] { run = [&] { return cmd_evaluate(g, ev_weights, ev_pred, ev_range, ev_n, ev_log); }; });

  auto* ab = app.add_subcommand("ablate", "Train and compare all four variants");
  std::string ab_budget = "desk", ab_pred;
  int ab_eval = 2000;
  bool ab_fresh = false;
  ab->add_option("--budget", ab_budget, "desk or smoke")->capture_default_str();
  ab->add_option("--predictor", ab_pred, "Predictor weights (trained first when absent)")->check(CLI::ExistingFile);
  ab->add_option("--eval-serves", ab_eval, "Held-out serves per range")->check(CLI::PositiveNumber);
  ab->add_flag("--fresh", ab_fresh, "Retrain even when a matching finished run exists");
  ab->callback([&] { run = [&] { return cmd_ablate(g, ab_budget, ab_pred, ab_eval, ab_fresh); }; });

  auto* rp = app.add_subcommand("report", "Render curves CSVs and eval JSON to SVG");
  std::vector<std::string> rp_curves;
  std::string rp_eval;
  rp->add_option("--curves", rp_curves, "curves.csv files")->check(CLI::ExistingFile);
  rp->add_option("--eval", rp_eval, "eval.json")->check(CLI::ExistingFile);
  rp->callback([&] { run = [&] { return cmd_report(g, rp_curves, rp_eval); }; });

  auto* pr = app.add_subcommand("predict", "Query the apex predictor");
  std::string pr_pred, pr_hist;
  pr->add_option("--weights,--predictor", pr_pred, "Predictor weights")->required()->check(CLI::ExistingFile);
  pr->add_option("--history", pr_hist, "Recent positions, oldest first: a t,x,y,z CSV or x,y,z;x,y,z;...")
      ->required();
  pr->callback([&] { run = [&] { return cmd_predict(g, pr_pred, pr_hist); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  spdlog::set_level(spdlog::level::from_str(g.log_level));
  try {
    (void)g.resolved_seed();
    return run();
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\nRun with --help for more information.\n";
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}
