#pragma once

// Run configuration: one JSON file carrying every knob of a run. Unknown keys
// are rejected at every level; absent keys keep their defaults.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "fcca/eval.hpp"
#include "fcca/llm.hpp"
#include "fcca/ppo.hpp"
#include "fcca/sim.hpp"

namespace fcca::config {

inline constexpr const char* kBuiltinReward = "-goal_dist + 100*reached_goal";

struct BackendConfig {
  std::string kind = "http";  // "http" or "replay"
  llm::HttpConfig http;
  std::string replay_path;  // as written; resolved against the config directory
  std::string record_path;  // optional transcript of every exchange (http only)
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "fcca_out";
  std::string reward;  // .rdsl path for `train`; empty means the builtin reward
  sim::WorldConfig world = sim::make_preset("empty");             // train / eval
  sim::WorldConfig init_world = sim::make_preset("simple");       // reward initialization
  sim::WorldConfig tune_world = sim::make_preset("complex");      // reward tuning
  ppo::PpoConfig ppo;
  ppo::NetworkConfig network;
  ppo::TrainBudget training;
  ppo::TrainBudget tune_training;
  llm::TuneConfig tune;
  eval::EvalConfig eval;
  BackendConfig backend;
  // Directory the relative paths above are resolved against.
  std::filesystem::path base_dir = ".";

  std::filesystem::path resolve(const std::string& path) const;
  llm::LoopSettings loop_settings() const;
};

// Throws ConfigError naming the offending key.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

// Every field with its effective value. Paths appear as written, so the
// output does not depend on where the run happens.
nlohmann::ordered_json config_to_json(const RunConfig& config);

}  // namespace fcca::config
