#include "pingpong/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace pingpong {
namespace {

// Calls v(section, key, field) for every configurable field.
template <typename Cfg, typename V>
void visit_fields(Cfg& c, V&& v) {
  auto& t = c.env.table;
  v("table", "length", t.length);
  v("table", "width", t.width);
  v("table", "surface_height", t.surface_height);
  v("table", "net_height", t.net_height);
  v("table", "net_x", t.net_x);

  auto& b = c.env.ball;
  v("ball", "mass", b.mass);
  v("ball", "radius", b.radius);
  v("ball", "drag_coeff_k", b.drag_coeff_k);
  v("ball", "restitution_normal", b.restitution_normal);
  v("ball", "tangential_retention", b.tangential_retention);
  v("ball", "gravity", b.gravity);

  auto& s = c.env.serve;
  v("serve", "launch_x", s.launch_x);
  v("serve", "jitter_x", s.jitter_x);
  v("serve", "jitter_y", s.jitter_y);
  v("serve", "launch_clearance", s.launch_clearance);
  v("serve", "vy_lo", s.vy_lo);
  v("serve", "vy_hi", s.vy_hi);
  v("serve", "vz_lo", s.vz_lo);
  v("serve", "vz_hi", s.vz_hi);

  auto& a = c.env.agent;
  v("agent", "action_scale", a.action_scale);
  v("agent", "v_max", a.v_max);
  v("agent", "accel_cap", a.accel_cap);
  v("agent", "track_gain", a.track_gain);
  v("agent", "base_vel_scale", a.base_vel_scale);
  v("agent", "offset_lo", a.offset_lo);
  v("agent", "offset_hi", a.offset_hi);
  v("agent", "offset_nominal", a.offset_nominal);
  v("agent", "offset_scale", a.offset_scale);
  v("agent", "offset_tau", a.offset_tau);
  v("agent", "offset_speed_cap", a.offset_speed_cap);
  v("agent", "normal_nominal", a.normal_nominal);
  v("agent", "normal_scale", a.normal_scale);
  v("agent", "fall_speed", a.fall_speed);
  v("agent", "fall_time", a.fall_time);
  v("agent", "reach_x", a.reach_x);
  v("agent", "reach_y", a.reach_y);
  v("agent", "reset_depth", a.reset_depth);
  v("agent", "reset_half_width", a.reset_half_width);

  auto& k = c.env.contact;
  v("contact", "paddle_radius", k.paddle_radius);
  v("contact", "restitution", k.restitution);
  v("contact", "tangential_retention", k.tangential_retention);
  v("contact", "out_speed_cap", k.out_speed_cap);

  auto& r = c.env.reward;
  v("reward", "w_reach_ee", r.w_reach_ee);
  v("reward", "w_reach_base", r.w_reach_base);
  v("reward", "w_track_vel", r.w_track_vel);
  v("reward", "w_land", r.w_land);
  v("reward", "w_net", r.w_net);
  v("reward", "w_hit_bonus", r.w_hit_bonus);
  v("reward", "w_success_bonus", r.w_success_bonus);
  v("reward", "w_fall", r.w_fall);
  v("reward", "w_action_rate", r.w_action_rate);
  v("reward", "w_alive", r.w_alive);
  v("reward", "tol_pos_ee", r.tol_pos_ee);
  v("reward", "tol_pos_base", r.tol_pos_base);
  v("reward", "tol_vel", r.tol_vel);
  v("reward", "sigma_ee", r.sigma_ee);
  v("reward", "sigma_base", r.sigma_base);
  v("reward", "sigma_land", r.sigma_land);
  v("reward", "net_margin", r.net_margin);
  v("reward", "t_gate", r.t_gate);
  v("reward", "vel_gain", r.vel_gain);
  v("reward", "v_cap", r.v_cap);
  v("reward", "target_xy", r.target_xy);

  auto& e = c.env.env;
  v("env", "tick", e.tick);
  v("env", "substep", e.substep);
  v("env", "settle", e.settle);
  v("env", "serve_gap", e.serve_gap);
  v("env", "serves_per_episode", e.serves_per_episode);
  v("env", "serve_timeout", e.serve_timeout);
  v("env", "obs_noise", e.obs_noise);
  v("env", "history", e.history);
  v("env", "range", e.range);
  v("env", "use_predictor", e.use_predictor);

  auto& p = c.ppo;
  v("ppo", "n_envs", p.n_envs);
  v("ppo", "n_steps", p.n_steps);
  v("ppo", "gamma", p.gamma);
  v("ppo", "gae_lambda", p.gae_lambda);
  v("ppo", "clip_eps", p.clip_eps);
  v("ppo", "epochs", p.epochs);
  v("ppo", "minibatches", p.minibatches);
  v("ppo", "entropy_coef", p.entropy_coef);
  v("ppo", "value_coef", p.value_coef);
  v("ppo", "max_grad_norm", p.max_grad_norm);
  v("ppo", "action_std_init", p.action_std_init);
  v("ppo", "learning_rate", p.learning_rate);
  v("ppo", "kl_stop", p.kl_stop);
  v("ppo", "adaptive_lr", p.adaptive_lr);
  v("ppo", "desired_kl", p.desired_kl);
  v("ppo", "actor_hidden", p.actor_hidden);
  v("ppo", "critic_hidden", p.critic_hidden);
  v("ppo", "updates", p.updates);
  v("ppo", "metrics_window", p.metrics_window);
  v("ppo", "checkpoint_every", p.checkpoint_every);
  v("ppo", "joint_predictor", p.joint_predictor);
  v("ppo", "threads", p.threads);

  auto& q = c.predictor;
  v("predictor", "history", q.history);
  v("predictor", "hidden", q.hidden);
  v("predictor", "tick", q.tick);
  v("predictor", "noise_sigma", q.noise_sigma);
  v("predictor", "latency_prob", q.latency_prob);
  v("predictor", "train_pairs", q.train_pairs);
  v("predictor", "holdout_serves", q.holdout_serves);
  v("predictor", "epochs", q.epochs);
  v("predictor", "batch_size", q.batch_size);
  v("predictor", "learning_rate", q.learning_rate);
  v("predictor", "final_learning_rate", q.final_learning_rate);
  v("predictor", "range", q.range);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  double x = 0.0;
  if (!(in >> x) || !(in >> std::ws).eof()) throw ConfigError(where + ": expected a number, got '" + s + "'");
  return x;
}

long parse_long(const std::string& s, const std::string& where) {
  std::istringstream in(s);
  long x = 0;
  if (!(in >> x) || !(in >> std::ws).eof()) throw ConfigError(where + ": expected an integer, got '" + s + "'");
  return x;
}

struct Assign {
  const std::string& value;
  const std::string& where;

  void operator()(double& f) const { f = parse_double(value, where); }
  void operator()(int& f) const { f = static_cast<int>(parse_long(value, where)); }
  void operator()(long& f) const { f = parse_long(value, where); }
  void operator()(bool& f) const {
    if (value == "true" || value == "1") {
      f = true;
    } else if (value == "false" || value == "0") {
      f = false;
    } else {
      throw ConfigError(where + ": expected true or false, got '" + value + "'");
    }
  }
  void operator()(ServeRange& f) const {
    try {
      f = serve_range_from_string(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  template <int N>
  void operator()(Eigen::Matrix<double, N, 1>& f) const {
    const auto items = split_list(value);
    if (static_cast<int>(items.size()) != N) {
      throw ConfigError(where + ": expected " + std::to_string(N) + " comma-separated numbers");
    }
    for (int i = 0; i < N; ++i) f(i) = parse_double(items[static_cast<std::size_t>(i)], where);
  }
  void operator()(std::vector<int>& f) const {
    f.clear();
    for (const auto& item : split_list(value)) f.push_back(static_cast<int>(parse_long(item, where)));
  }
};

struct ToJson {
  nlohmann::json& out;

  template <typename T>
  void operator()(const char* sec, const char* key, const T& f) const {
    out[sec][key] = f;
  }
  void operator()(const char* sec, const char* key, const ServeRange& f) const { out[sec][key] = to_string(f); }
  template <int N>
  void operator()(const char* sec, const char* key, const Eigen::Matrix<double, N, 1>& f) const {
    out[sec][key] = std::vector<double>(f.data(), f.data() + N);
  }
};

struct FromJson {
  const nlohmann::json& in;

  template <typename T>
  void operator()(const char* sec, const char* key, T& f) const {
    if (!in.contains(sec) || !in.at(sec).contains(key)) return;
    const auto& j = in.at(sec).at(key);
    if constexpr (std::is_same_v<T, ServeRange>) {
      f = serve_range_from_string(j.get<std::string>());
    } else if constexpr (std::is_same_v<T, Vec2> || std::is_same_v<T, Vec3>) {
      const auto v = j.get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != f.size()) {
        throw ConfigError(std::string(sec) + "." + key + ": wrong vector length");
      }
      for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = v[static_cast<std::size_t>(i)];
    } else {
      f = j.get<T>();
    }
  }
};

}  // namespace

void RunConfig::validate() const {
  env.validate();
  ppo.validate();
  predictor.validate();
}

RunConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }

  RunConfig cfg;
  std::map<std::string, std::set<std::string>> known;
  visit_fields(cfg, [&](const char* sec, const char* key, auto&) { known[sec].insert(key); });

  for (const auto& [sec, body] : tree) {
    const auto ks = known.find(sec);
    if (ks == known.end()) {
      if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + sec + "' outside a section");
      throw ConfigError("config: unknown section [" + sec + "]");
    }
    for (const auto& [key, node] : body) {
      if (!ks->second.count(key)) throw ConfigError("config: unknown key '" + key + "' in [" + sec + "]");
    }
  }

  visit_fields(cfg, [&](const char* sec, const char* key, auto& field) {
    const auto node = tree.get_child_optional(boost::property_tree::ptree::path_type(std::string(sec) + "." + key));
    if (!node) return;
    const std::string where = std::string(sec) + "." + key;
    Assign{node->data(), where}(field);
  });

  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json out = nlohmann::json::object();
  visit_fields(cfg, ToJson{out});
  return out;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  visit_fields(cfg, FromJson{j});
  cfg.validate();
  return cfg;
}

}  // namespace pingpong
