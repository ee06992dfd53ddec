#include "fcca/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

namespace fcca::config {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Reads optional keys of one section and rejects any key it was not told about.
class Section {
 public:
  Section(const json& j, std::string name, std::initializer_list<const char*> keys) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
    for (const auto& [k, v] : j_.items()) {
      bool known = false;
      for (const char* allowed : keys) known = known || k == allowed;
      if (!known) throw ConfigError(name_ + ": unknown key '" + k + "'");
    }
  }

  template <class T>
  void read(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) const { return j_.contains(key) ? &j_.at(key) : nullptr; }

 private:
  const json& j_;
  std::string name_;
};

// json::get<std::size_t> silently wraps negative numbers.
template <class T>
void read_count(const Section& s, const char* key, T& out, const std::string& section) {
  std::int64_t v = static_cast<std::int64_t>(out);
  s.read(key, v);
  if (v < 0) throw ConfigError(section + "." + key + ": must be non-negative");
  out = static_cast<T>(v);
}

void read_ppo(const json& j, ppo::PpoConfig& c) {
  Section s(j, "ppo",
            {"gamma", "lam", "clip_eps", "epochs_per_batch", "learning_rate", "value_learning_rate", "minibatch_size",
             "value_loss_coeff", "entropy_coeff", "max_grad_norm", "episodes_per_batch", "advantage_normalization",
             "workers"});
  s.read("gamma", c.gamma);
  s.read("lam", c.lam);
  s.read("clip_eps", c.clip_eps);
  read_count(s, "epochs_per_batch", c.epochs_per_batch, "ppo");
  s.read("learning_rate", c.learning_rate);
  s.read("value_learning_rate", c.value_learning_rate);
  read_count(s, "minibatch_size", c.minibatch_size, "ppo");
  s.read("value_loss_coeff", c.value_loss_coeff);
  s.read("entropy_coeff", c.entropy_coeff);
  s.read("max_grad_norm", c.max_grad_norm);
  read_count(s, "episodes_per_batch", c.episodes_per_batch, "ppo");
  s.read("advantage_normalization", c.advantage_normalization);
  read_count(s, "workers", c.workers, "ppo");
}

void read_network(const json& j, ppo::NetworkConfig& c) {
  Section s(j, "network", {"policy_hidden", "value_hidden", "init_log_std"});
  read_count(s, "policy_hidden", c.policy_hidden, "network");
  read_count(s, "value_hidden", c.value_hidden, "network");
  s.read("init_log_std", c.init_log_std);
  if (c.policy_hidden == 0 || c.value_hidden == 0) throw ConfigError("network: hidden sizes must be positive");
  if (!(c.init_log_std >= -5.0 && c.init_log_std <= 2.0)) throw ConfigError("network: init_log_std must be in [-5, 2]");
}

void read_budget(const json& j, ppo::TrainBudget& c, const std::string& name) {
  Section s(j, name, {"max_batches", "min_batches", "stop_on_convergence"});
  read_count(s, "max_batches", c.max_batches, name);
  read_count(s, "min_batches", c.min_batches, name);
  s.read("stop_on_convergence", c.stop_on_convergence);
  if (c.max_batches == 0) throw ConfigError(name + ": max_batches must be positive");
  if (c.min_batches > c.max_batches) throw ConfigError(name + ": min_batches exceeds max_batches");
}

void read_tune(const json& j, llm::TuneConfig& c) {
  Section s(j, "tune", {"eta", "max_init_iterations", "tuning_iterations", "retry_limit"});
  s.read("eta", c.eta);
  read_count(s, "max_init_iterations", c.max_init_iterations, "tune");
  read_count(s, "tuning_iterations", c.tuning_iterations, "tune");
  read_count(s, "retry_limit", c.retry_limit, "tune");
  c.validate();
}

void read_eval(const json& j, eval::EvalConfig& c) {
  Section s(j, "eval", {"episodes", "seeds", "deterministic_policy", "hazard_margin", "workers"});
  read_count(s, "episodes", c.episodes, "eval");
  s.read("seeds", c.seeds);
  s.read("deterministic_policy", c.deterministic_policy);
  s.read("hazard_margin", c.hazard_margin);
  read_count(s, "workers", c.workers, "eval");
  c.validate();
}

void read_backend(const json& j, BackendConfig& c) {
  Section s(j, "backend",
            {"kind", "url", "model", "timeout_s", "max_retries", "token_env", "temperature", "replay_path",
             "record_path"});
  s.read("kind", c.kind);
  s.read("url", c.http.url);
  s.read("model", c.http.model);
  s.read("timeout_s", c.http.timeout_s);
  read_count(s, "max_retries", c.http.max_retries, "backend");
  s.read("token_env", c.http.token_env);
  s.read("temperature", c.http.temperature);
  s.read("replay_path", c.replay_path);
  s.read("record_path", c.record_path);
  if (c.kind != "http" && c.kind != "replay") throw ConfigError("backend.kind must be \"http\" or \"replay\"");
  if (c.kind == "replay" && c.replay_path.empty()) throw ConfigError("backend: replay needs replay_path");
  if (!(c.http.timeout_s > 0.0)) throw ConfigError("backend.timeout_s must be positive");
}

ojson budget_json(const ppo::TrainBudget& b) {
  ojson j;
  j["max_batches"] = b.max_batches;
  j["min_batches"] = b.min_batches;
  j["stop_on_convergence"] = b.stop_on_convergence;
  return j;
}

}  // namespace

std::filesystem::path RunConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

llm::LoopSettings RunConfig::loop_settings() const {
  llm::LoopSettings s;
  s.tune = tune;
  s.init_world = init_world;
  s.tune_world = tune_world;
  s.ppo = ppo;
  s.network = network;
  s.init_budget = training;
  s.tune_budget = tune_training;
  s.eval = eval;
  s.seed = seed;
  return s;
}

RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  Section s(j, "config",
            {"seed", "output_dir", "reward", "world", "init_world", "tune_world", "ppo", "network", "training",
             "tune_training", "tune", "eval", "backend"});
  RunConfig c;
  c.base_dir = base_dir;
  s.read("seed", c.seed);
  s.read("output_dir", c.output_dir);
  s.read("reward", c.reward);
  if (c.output_dir.empty()) throw ConfigError("config.output_dir must not be empty");
  if (const json* w = s.child("world")) c.world = sim::world_from_json(*w);
  if (const json* w = s.child("init_world")) c.init_world = sim::world_from_json(*w);
  if (const json* w = s.child("tune_world")) c.tune_world = sim::world_from_json(*w);
  if (const json* p = s.child("ppo")) read_ppo(*p, c.ppo);
  c.ppo.validate();
  if (const json* n = s.child("network")) read_network(*n, c.network);
  if (const json* b = s.child("training")) read_budget(*b, c.training, "training");
  if (const json* b = s.child("tune_training")) read_budget(*b, c.tune_training, "tune_training");
  if (const json* t = s.child("tune")) read_tune(*t, c.tune);
  if (const json* e = s.child("eval")) read_eval(*e, c.eval);
  if (const json* b = s.child("backend")) read_backend(*b, c.backend);
  if (c.init_world.num_agents != c.tune_world.num_agents)
    throw ConfigError("init_world and tune_world must have the same number of agents");
  if (!c.reward.empty() && !std::filesystem::is_regular_file(c.resolve(c.reward)))
    throw ConfigError("reward file not found: " + c.resolve(c.reward).string());
  if (c.backend.kind == "replay" && !std::filesystem::exists(c.resolve(c.backend.replay_path)))
    throw ConfigError("backend replay_path not found: " + c.resolve(c.backend.replay_path).string());
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

ojson config_to_json(const RunConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["reward"] = c.reward;
  j["world"] = sim::world_to_json(c.world);
  j["init_world"] = sim::world_to_json(c.init_world);
  j["tune_world"] = sim::world_to_json(c.tune_world);
  ojson p;
  p["gamma"] = c.ppo.gamma;
  p["lam"] = c.ppo.lam;
  p["clip_eps"] = c.ppo.clip_eps;
  p["epochs_per_batch"] = c.ppo.epochs_per_batch;
  p["learning_rate"] = c.ppo.learning_rate;
  p["value_learning_rate"] = c.ppo.value_learning_rate;
  p["minibatch_size"] = c.ppo.minibatch_size;
  p["value_loss_coeff"] = c.ppo.value_loss_coeff;
  p["entropy_coeff"] = c.ppo.entropy_coeff;
  p["max_grad_norm"] = c.ppo.max_grad_norm;
  p["episodes_per_batch"] = c.ppo.episodes_per_batch;
  p["advantage_normalization"] = c.ppo.advantage_normalization;
  p["workers"] = c.ppo.workers;
  j["ppo"] = std::move(p);
  ojson n;
  n["policy_hidden"] = c.network.policy_hidden;
  n["value_hidden"] = c.network.value_hidden;
  n["init_log_std"] = c.network.init_log_std;
  j["network"] = std::move(n);
  j["training"] = budget_json(c.training);
  j["tune_training"] = budget_json(c.tune_training);
  ojson t;
  t["eta"] = c.tune.eta;
  t["max_init_iterations"] = c.tune.max_init_iterations;
  t["tuning_iterations"] = c.tune.tuning_iterations;
  t["retry_limit"] = c.tune.retry_limit;
  j["tune"] = std::move(t);
  ojson e;
  e["episodes"] = c.eval.episodes;
  e["seeds"] = c.eval.seeds;
  e["deterministic_policy"] = c.eval.deterministic_policy;
  e["hazard_margin"] = c.eval.hazard_margin;
  e["workers"] = c.eval.workers;
  j["eval"] = std::move(e);
  ojson b;
  b["kind"] = c.backend.kind;
  b["url"] = c.backend.http.url;
  b["model"] = c.backend.http.model;
  b["timeout_s"] = c.backend.http.timeout_s;
  b["max_retries"] = c.backend.http.max_retries;
  b["token_env"] = c.backend.http.token_env;
  b["temperature"] = c.backend.http.temperature;
  b["replay_path"] = c.backend.replay_path;
  b["record_path"] = c.backend.record_path;
  j["backend"] = std::move(b);
  return j;
}

}  // namespace fcca::config
