#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "pingpong/apex_predictor.hpp"
#include "pingpong/ppo.hpp"
#include "pingpong/serve_env.hpp"

namespace pingpong {

struct RunConfig {
  EnvParams env;
  PpoConfig ppo;
  PredictorConfig predictor;

  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// INI text: [section] headers and key = value lines over the defaults.
// Unknown sections or keys are errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& cfg);
// Inverse of to_json; used to regenerate runs from report manifests.
RunConfig run_config_from_json(const nlohmann::json& j);

}  // namespace pingpong
