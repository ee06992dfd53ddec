#include "fcca/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace fcca::eval {

void EvalConfig::validate() const {
  if (episodes == 0) throw ConfigError("eval: episodes must be positive");
  if (seeds.empty()) throw ConfigError("eval: at least one seed is required");
  if (!(hazard_margin >= 0.0)) throw ConfigError("eval: hazard_margin must be non-negative");
}

JointPolicy team_policy(const ppo::Team& team, bool deterministic) {
  return [&team, deterministic](const sim::WorldConfig& world, const sim::EpisodeState& state, Rng& rng) {
    std::vector<sim::Action> actions(state.agents.size());
    for (std::size_t i = 0; i < actions.size(); ++i) {
      const auto& policy = team.policies.at(i);
      actions[i] = policy.act(policy.encode_observation(sim::observe(world, state, i)), rng, deterministic).action;
    }
    return actions;
  };
}

JointPolicy constant_policy(std::vector<sim::Action> actions) {
  return [actions = std::move(actions)](const sim::WorldConfig&, const sim::EpisodeState&, Rng&) { return actions; };
}

EpisodeMetrics accumulate_metrics(std::span<const sim::TraceStep> trace, const sim::WorldConfig& world,
                                  const EvalConfig& config) {
  if (trace.empty()) throw InputError("trace is empty");
  const std::size_t n = trace.front().positions.size();
  const std::size_t m = trace.front().obstacle_positions.size();
  if (n == 0) throw InputError("trace has no agents");
  bool collided = false;
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto& s = trace[t];
    if (s.t != t) throw InputError("trace step " + std::to_string(t) + " has t = " + std::to_string(s.t));
    if (s.positions.size() != n || s.velocities.size() != n || s.obstacle_positions.size() != m)
      throw InputError("trace step " + std::to_string(t) + " changes the number of bodies");
    if (!std::isfinite(s.formation_error)) throw InputError("trace step " + std::to_string(t) + " is not finite");
    if ((s.collision || s.goal_reached || s.timeout) && t + 1 != trace.size())
      throw InputError("trace continues after a terminal step");
    collided = collided || s.collision;
  }

  EpisodeMetrics e;
  const auto& last = trace.back();
  e.steps = last.t;
  e.collision = collided;
  e.success = last.goal_reached && !collided;
  e.total_time = (e.success ? static_cast<double>(last.t) : static_cast<double>(world.max_steps)) * world.dt;

  const double zone = world.agent_radius + world.obstacle_radius + config.hazard_margin;
  std::vector<bool> inside(n * m, false);
  for (const auto& s : trace) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < m; ++k) {
        const bool now = distance(s.positions[i], s.obstacle_positions[k]) < zone;
        if (now && !inside[i * m + k]) ++e.hazard_incidents;
        inside[i * m + k] = now;
      }
    e.formation_error_sum += s.formation_error;
  }
  e.formation_error_mean = e.formation_error_sum / static_cast<double>(trace.size());

  if (trace.size() > 1) {
    double acc = 0.0;
    for (std::size_t t = 1; t < trace.size(); ++t)
      for (std::size_t i = 0; i < n; ++i)
        acc += norm(trace[t].velocities[i] - trace[t - 1].velocities[i]) / world.dt;
    e.avg_acceleration = acc / static_cast<double>((trace.size() - 1) * n);
  }
  return e;
}

namespace {

// Sorting first makes the sum independent of episode order.
double ordered_mean(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

EvalReport aggregate(std::span<const EpisodeMetrics> episodes) {
  EvalReport r;
  r.episodes = episodes.size();
  std::vector<double> success, hazards, time, accel, f_mean, f_sum;
  for (const auto& e : episodes) {
    success.push_back(e.success ? 1.0 : 0.0);
    hazards.push_back(static_cast<double>(e.hazard_incidents));
    time.push_back(e.total_time);
    accel.push_back(e.avg_acceleration);
    if (!e.collision) {
      f_mean.push_back(e.formation_error_mean);
      f_sum.push_back(e.formation_error_sum);
    }
  }
  r.success_rate = ordered_mean(success);
  r.hazard_incidents = ordered_mean(hazards);
  r.total_time_mean = ordered_mean(time);
  r.avg_acceleration = ordered_mean(accel);
  r.formation_error_mean = ordered_mean(f_mean);
  r.formation_error_sum = ordered_mean(f_sum);
  r.per_episode.assign(episodes.begin(), episodes.end());
  return r;
}

std::string serialize_report(const EvalReport& r) {
  const std::pair<const char*, double> rows[] = {
      {"success_rate", r.success_rate},
      {"hazard_incidents", r.hazard_incidents},
      {"formation_error_mean", r.formation_error_mean},
      {"formation_error_sum", r.formation_error_sum},
      {"total_time_mean", r.total_time_mean},
      {"avg_acceleration", r.avg_acceleration},
  };
  std::string out;
  char buf[96];
  for (const auto& [key, value] : rows) {
    std::snprintf(buf, sizeof buf, "%s: %.6f\n", key, value);
    out += buf;
  }
  return out;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["success_rate"] = r.success_rate;
  j["hazard_incidents"] = r.hazard_incidents;
  j["formation_error_mean"] = r.formation_error_mean;
  j["formation_error_sum"] = r.formation_error_sum;
  j["total_time_mean"] = r.total_time_mean;
  j["avg_acceleration"] = r.avg_acceleration;
  j["episodes"] = r.episodes;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& e : r.per_episode)
    per.push_back({{"success", e.success},
                   {"collision", e.collision},
                   {"steps", e.steps},
                   {"hazard_incidents", e.hazard_incidents},
                   {"formation_error_mean", e.formation_error_mean},
                   {"formation_error_sum", e.formation_error_sum},
                   {"total_time", e.total_time},
                   {"avg_acceleration", e.avg_acceleration}});
  j["per_episode"] = std::move(per);
  return j;
}

std::vector<sim::TraceStep> run_episode(const JointPolicy& policy, const sim::WorldConfig& world,
                                        std::uint64_t reset_seed, std::uint64_t action_seed) {
  sim::EpisodeState state = sim::reset(world, reset_seed);
  Rng rng(action_seed);
  std::vector<sim::TraceStep> trace;
  trace.push_back(sim::make_trace_step(world, state, sim::termination_check(state, world)));
  while (!state.done) {
    const auto actions = policy(world, state, rng);
    const sim::StepOutcome outcome = sim::step(world, state, actions);
    trace.push_back(sim::make_trace_step(world, state, outcome.flags));
  }
  return trace;
}

EvalReport run_evaluation(const JointPolicy& policy, const sim::WorldConfig& world, const EvalConfig& config) {
  config.validate();
  world.validate();
  const std::size_t per_seed = config.episodes;
  const std::size_t total = per_seed * config.seeds.size();
  std::vector<EpisodeMetrics> metrics(total);
  std::vector<std::vector<sim::TraceStep>> traces(config.keep_traces ? total : 0);
  ppo::parallel_for(total, config.workers, [&](std::size_t idx) {
    const std::uint64_t seed = config.seeds[idx / per_seed];
    const std::size_t episode = idx % per_seed;
    auto trace = run_episode(policy, world, derive_seed(seed, {0xe7a1, episode, 0}),
                             derive_seed(seed, {0xe7a1, episode, 1}));
    metrics[idx] = accumulate_metrics(trace, world, config);
    if (config.keep_traces) traces[idx] = std::move(trace);
  });
  EvalReport report = aggregate(metrics);
  report.traces = std::move(traces);
  return report;
}

}  // namespace fcca::eval
