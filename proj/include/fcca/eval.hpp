#pragma once

// Fixed-policy evaluation: runs episode batches and reduces their traces to
// the five task metrics fed back to the reward designer.

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fcca/ppo.hpp"
#include "fcca/sim.hpp"

namespace fcca::eval {

struct EvalConfig {
  std::size_t episodes = 20;                // per seed
  std::vector<std::uint64_t> seeds{0};
  bool deterministic_policy = true;
  double hazard_margin = 0.2;  // zone: center distance < radius sum + margin
  bool keep_traces = false;
  std::size_t workers = 0;

  void validate() const;
};

// Maps the current state to one action per agent. Must be safe to call
// concurrently; randomness comes only from the supplied generator.
using JointPolicy =
    std::function<std::vector<sim::Action>(const sim::WorldConfig&, const sim::EpisodeState&, Rng&)>;

JointPolicy team_policy(const ppo::Team& team, bool deterministic);
JointPolicy constant_policy(std::vector<sim::Action> actions);

struct EpisodeMetrics {
  bool success = false;
  bool collision = false;
  std::size_t steps = 0;
  std::size_t hazard_incidents = 0;
  double formation_error_mean = 0.0;  // over states s_0..s_T
  double formation_error_sum = 0.0;
  double total_time = 0.0;            // seconds
  double avg_acceleration = 0.0;      // m/s^2
};

// Reduces one complete trace (states s_0..s_T, consecutive t from 0).
// Throws InputError on a malformed trace.
EpisodeMetrics accumulate_metrics(std::span<const sim::TraceStep> trace, const sim::WorldConfig& world,
                                  const EvalConfig& config);

// Collision episodes are excluded from the formation means; everything else
// averages over all episodes. Aggregation does not depend on episode order.
struct EvalReport {
  double success_rate = 0.0;
  double hazard_incidents = 0.0;
  double formation_error_mean = 0.0;
  double formation_error_sum = 0.0;
  double total_time_mean = 0.0;
  double avg_acceleration = 0.0;
  std::size_t episodes = 0;
  std::vector<EpisodeMetrics> per_episode;
  std::vector<std::vector<sim::TraceStep>> traces;  // only with keep_traces
};

EvalReport aggregate(std::span<const EpisodeMetrics> episodes);

// Stable "key: value" lines in a fixed order; this text is what the reward
// designer sees.
std::string serialize_report(const EvalReport& report);
nlohmann::ordered_json report_to_json(const EvalReport& report);

EvalReport run_evaluation(const JointPolicy& policy, const sim::WorldConfig& world, const EvalConfig& config);

// Runs one episode and returns its full trace.
std::vector<sim::TraceStep> run_episode(const JointPolicy& policy, const sim::WorldConfig& world,
                                        std::uint64_t reset_seed, std::uint64_t action_seed);

}  // namespace fcca::eval
