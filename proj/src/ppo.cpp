#include "fcca/ppo.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <memory>
#include <mutex>
#include <numeric>
#include <thread>

namespace fcca::ppo {

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo: gamma must be in (0, 1]");
  if (!(lam >= 0.0 && lam <= 1.0)) throw ConfigError("ppo: lam must be in [0, 1]");
  if (!(clip_eps > 0.0)) throw ConfigError("ppo: clip_eps must be positive");
  if (epochs_per_batch == 0) throw ConfigError("ppo: epochs_per_batch must be positive");
  if (!(learning_rate > 0.0) || !(value_learning_rate > 0.0))
    throw ConfigError("ppo: learning rates must be positive");
  if (minibatch_size == 0) throw ConfigError("ppo: minibatch_size must be positive");
  if (!(value_loss_coeff >= 0.0) || !(entropy_coeff >= 0.0))
    throw ConfigError("ppo: loss coefficients must be non-negative");
  if (episodes_per_batch == 0) throw ConfigError("ppo: episodes_per_batch must be positive");
}

// ---- advantage estimation ---------------------------------------------------

std::vector<double> compute_td_errors(std::span<const double> rewards, std::span<const double> values,
                                      std::span<const bool> dones, double gamma) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1) throw InputError("compute_td_errors: values must have one more entry than rewards");
  if (dones.size() != n) throw InputError("compute_td_errors: dones and rewards differ in length");
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = dones[t] ? 0.0 : values[t + 1];
    delta[t] = rewards[t] + gamma * next - values[t];
  }
  return delta;
}

std::vector<double> compute_gae(std::span<const double> deltas, double gamma, double lam,
                                std::span<const bool> dones) {
  if (dones.size() != deltas.size()) throw InputError("compute_gae: dones and deltas differ in length");
  std::vector<double> adv(deltas.size());
  double running = 0.0;
  for (std::size_t t = deltas.size(); t-- > 0;) {
    running = deltas[t] + (dones[t] ? 0.0 : gamma * lam * running);
    adv[t] = running;
  }
  return adv;
}

// ---- losses -----------------------------------------------------------------

SurrogateResult ppo_policy_loss(std::span<const double> new_logp, std::span<const double> old_logp,
                                std::span<const double> advantages, double clip_eps) {
  const std::size_t n = new_logp.size();
  if (old_logp.size() != n || advantages.size() != n)
    throw InputError("ppo_policy_loss: input lengths differ");
  SurrogateResult out;
  out.d_new_logp.assign(n, 0.0);
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ratio = std::exp(new_logp[i] - old_logp[i]);
    if (!std::isfinite(ratio))
      throw Error("ppo_policy_loss: non-finite probability ratio at sample " + std::to_string(i) +
                  " (new log-prob " + std::to_string(new_logp[i]) + ", old " + std::to_string(old_logp[i]) + ")");
    const double a = advantages[i];
    const double unclipped = ratio * a;
    const double bounded = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * a;
    if (unclipped <= bounded) {
      out.loss -= unclipped * inv_n;
      out.d_new_logp[i] = -unclipped * inv_n;
    } else {
      out.loss -= bounded * inv_n;
      ++clipped;
    }
  }
  out.clip_fraction = static_cast<double>(clipped) * inv_n;
  return out;
}

MseResult value_loss(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw InputError("value_loss: input lengths differ");
  MseResult out;
  out.d_pred.assign(predictions.size(), 0.0);
  if (predictions.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    out.loss += e * e * inv_n;
    out.d_pred[i] = 2.0 * e * inv_n;
  }
  return out;
}

PolicyLossTerms policy_loss_and_grad(nn::PolicyNet& policy, const PolicySamples& samples, double clip_eps,
                                     double entropy_coeff) {
  const std::size_t n = samples.observations.size();
  if (static_cast<std::size_t>(samples.pre_squash.cols()) != n || samples.old_log_prob.size() != n ||
      samples.advantages.size() != n)
    throw InputError("policy_loss_and_grad: sample arrays are misaligned");
  nn::PolicyCache cache;
  const nn::Matrix mean = policy.forward_mean(samples.observations, &cache);
  const Eigen::Vector2d log_std = policy.log_std();
  const Eigen::Vector2d inv_var = (-2.0 * log_std).array().exp();
  const double max_speed = policy.arch().max_speed;

  std::vector<double> new_logp(n);
  for (std::size_t b = 0; b < n; ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    const Eigen::Vector2d z = samples.pre_squash.col(col);
    new_logp[b] = nn::gaussian_log_prob(z, mean.col(col), log_std) - nn::squash_log_det(z, max_speed);
  }
  const SurrogateResult sr = ppo_policy_loss(new_logp, samples.old_log_prob, samples.advantages, clip_eps);

  nn::Matrix d_mean(2, static_cast<Eigen::Index>(n));
  Eigen::Vector2d d_log_std = Eigen::Vector2d::Zero();
  for (std::size_t b = 0; b < n; ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    const double g = sr.d_new_logp[b];
    for (int d = 0; d < 2; ++d) {
      const double diff = samples.pre_squash(d, col) - mean(d, col);
      d_mean(d, col) = g * diff * inv_var[d];
      d_log_std[d] += g * (diff * diff * inv_var[d] - 1.0);
    }
  }
  PolicyLossTerms terms;
  terms.surrogate = sr.loss;
  terms.entropy = nn::gaussian_entropy(log_std);
  terms.total = sr.loss - entropy_coeff * terms.entropy;
  terms.clip_fraction = sr.clip_fraction;
  d_log_std.array() -= entropy_coeff;
  policy.backward(cache, d_mean, d_log_std);
  return terms;
}

double value_loss_and_grad(nn::ValueNet& value, const nn::Matrix& states, std::span<const double> targets,
                           double value_coeff) {
  nn::MlpCache cache;
  const nn::Matrix pred = value.forward(states, &cache);
  const MseResult mse = value_loss(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                                   targets);
  nn::Matrix d(1, pred.cols());
  for (Eigen::Index i = 0; i < pred.cols(); ++i) d(0, i) = value_coeff * mse.d_pred[static_cast<std::size_t>(i)];
  value.backward(cache, d);
  return mse.loss;
}

// ---- global state and rewards ----------------------------------------------

std::size_t global_state_dim(std::size_t num_agents) { return 4 * num_agents + 2 + 5 * kGlobalObstacleSlots; }

nn::Vector global_state(const sim::WorldConfig& config, const sim::EpisodeState& state) {
  const std::size_t n = state.agents.size();
  nn::Vector g = nn::Vector::Zero(static_cast<Eigen::Index>(global_state_dim(n)));
  const auto slots = config.goal_slots(state.goal);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = state.agents[i];
    const Vec2 d = slots[i] - a.position;
    g[k++] = d.x;
    g[k++] = d.y;
    g[k++] = a.velocity.x;
    g[k++] = a.velocity.y;
  }
  g[k++] = sim::current_formation_error(config, state);
  g[k++] = static_cast<double>(state.t) / static_cast<double>(config.max_steps);

  const Vec2 c = formation::centroid(state.agent_positions());
  std::vector<std::size_t> order(state.obstacles.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return distance(state.obstacles[l].position, c) < distance(state.obstacles[r].position, c);
  });
  for (std::size_t s = 0; s < std::min(order.size(), kGlobalObstacleSlots); ++s) {
    const auto& o = state.obstacles[order[s]];
    const Vec2 p = o.position - c;
    const Vec2 v = (o.position - o.previous_position) * (1.0 / config.dt);
    g[k++] = p.x;
    g[k++] = p.y;
    g[k++] = v.x;
    g[k++] = v.y;
    g[k++] = 1.0;
  }
  return g;
}

dsl::EvalContext build_reward_context(const sim::WorldConfig& config, const sim::EpisodeState& state,
                                      const sim::StepOutcome& outcome, std::size_t agent) {
  const auto& a = state.agents.at(agent);
  const Vec2 to_slot = config.goal_slots(state.goal)[agent] - a.position;
  const Vec2 local = rotate_into(to_slot, a.heading);
  dsl::EvalContext ctx;
  ctx.goal_dist = norm(to_slot);
  ctx.goal_dx = local.x;
  ctx.goal_dy = local.y;
  ctx.speed = norm(a.velocity);
  ctx.heading = a.heading;
  ctx.formation_error = sim::current_formation_error(config, state);
  ctx.min_obstacle_dist = sim::kNoObstacleDistance;
  std::size_t visible = 0;
  for (const auto& o : state.obstacles) {
    const Vec2 rel = o.position - a.position;
    const double d = norm(rel);
    if (d > config.sensing_radius) continue;
    ++visible;
    if (d < ctx.min_obstacle_dist) {
      ctx.min_obstacle_dist = d;
      const Vec2 v_obs = (o.position - o.previous_position) * (1.0 / config.dt);
      ctx.nearest_obstacle_closing_speed = d > 0.0 ? -dot(rel, v_obs - a.velocity) / d : 0.0;
    }
  }
  ctx.num_visible_obstacles = static_cast<double>(visible);
  ctx.accel = agent < outcome.acceleration.size() ? outcome.acceleration[agent] : 0.0;
  ctx.time_frac = static_cast<double>(state.t) / static_cast<double>(config.max_steps);
  ctx.reached_goal = outcome.flags.termination == sim::Termination::GoalReached ? 1.0 : 0.0;
  ctx.collision =
      agent < outcome.flags.agent_collision.size() && outcome.flags.agent_collision[agent] ? 1.0 : 0.0;
  return ctx;
}

double shared_reward(const dsl::RewardProgram& program, const sim::WorldConfig& config,
                     const sim::EpisodeState& state, const sim::StepOutcome& outcome) {
  double sum = 0.0;
  for (std::size_t i = 0; i < state.agents.size(); ++i)
    sum += dsl::evaluate(program, build_reward_context(config, state, outcome, i));
  return sum / static_cast<double>(state.agents.size());
}

// ---- team -------------------------------------------------------------------

Team Team::create(const sim::WorldConfig& world, const NetworkConfig& net, const PpoConfig& ppo,
                  std::uint64_t seed) {
  Team team;
  const nn::PolicyArch arch{net.policy_hidden, net.init_log_std, world.max_speed_agent};
  for (std::size_t i = 0; i < world.num_agents; ++i) {
    Rng rng(derive_seed(seed, {0x901c, i}));
    team.policies.emplace_back(arch, rng);
    team.policy_adam.emplace_back(team.policies.back().param_count(), nn::AdamConfig{.lr = ppo.learning_rate});
  }
  Rng rng(derive_seed(seed, {0x7a1e}));
  team.value = nn::ValueNet(global_state_dim(world.num_agents), net.value_hidden, rng);
  team.value_adam = nn::AdamState(team.value.params().size(), nn::AdamConfig{.lr = ppo.value_learning_rate});
  return team;
}

std::string Team::architecture() const {
  std::string s = "agents=" + std::to_string(policies.size());
  if (!policies.empty()) s += ";" + policies.front().descriptor();
  s += ";" + value.descriptor();
  return s;
}

nn::Checkpoint Team::to_checkpoint() const {
  nn::Checkpoint c;
  c.architecture = architecture();
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const auto p = policies[i].params();
    c.blocks.push_back({"policy" + std::to_string(i), {p.begin(), p.end()}, policy_adam[i]});
  }
  const auto v = value.params();
  c.blocks.push_back({"value", {v.begin(), v.end()}, value_adam});
  return c;
}

namespace {
void load_block(const nn::CheckpointBlock& block, const std::string& name, std::span<double> params,
                nn::AdamState& adam) {
  if (block.name != name)
    throw nn::CheckpointShapeError("checkpoint block '" + block.name + "' where '" + name + "' was expected");
  if (block.params.size() != params.size())
    throw nn::CheckpointShapeError("checkpoint block '" + name + "' has " + std::to_string(block.params.size()) +
                                   " parameters, network has " + std::to_string(params.size()));
  std::copy(block.params.begin(), block.params.end(), params.begin());
  adam = block.adam;
}
}  // namespace

void Team::load_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.architecture != architecture())
    throw nn::CheckpointShapeError("checkpoint architecture '" + ckpt.architecture + "' does not match '" +
                                   architecture() + "'");
  if (ckpt.blocks.size() != policies.size() + 1)
    throw nn::CheckpointShapeError("checkpoint has " + std::to_string(ckpt.blocks.size()) + " blocks, expected " +
                                   std::to_string(policies.size() + 1));
  for (std::size_t i = 0; i < policies.size(); ++i)
    load_block(ckpt.blocks[i], "policy" + std::to_string(i), policies[i].params(), policy_adam[i]);
  load_block(ckpt.blocks.back(), "value", value.params(), value_adam);
}

// ---- rollouts ---------------------------------------------------------------

EpisodeRollout collect_episode(const Team& team, const sim::WorldConfig& world,
                               const dsl::RewardProgram& program, std::uint64_t reset_seed,
                               std::uint64_t action_seed) {
  const std::size_t n = world.num_agents;
  if (team.policies.size() != n) throw InputError("collect_episode: one policy per agent is required");
  EpisodeRollout out;
  sim::EpisodeState state = sim::reset(world, reset_seed);
  Rng rng(action_seed);
  std::vector<sim::Action> actions(n);
  while (!state.done) {
    TeamStep ts;
    ts.state = global_state(world, state);
    ts.value = team.value.value(ts.state);
    for (std::size_t i = 0; i < n; ++i) {
      ts.observations.push_back(sim::observe(world, state, i));
      const nn::PolicySample s = team.policies[i].act(team.policies[i].encode_observation(ts.observations[i]), rng);
      ts.pre_squash.push_back(s.pre_squash);
      ts.log_prob.push_back(s.log_prob);
      actions[i] = s.action;
    }
    const sim::StepOutcome outcome = sim::step(world, state, actions);
    ts.reward = shared_reward(program, world, state, outcome);
    out.episode_reward += ts.reward;
    out.steps.push_back(std::move(ts));
  }
  out.termination = state.termination;
  out.terminal = state.termination != sim::Termination::Timeout;
  out.bootstrap_value = out.terminal ? 0.0 : team.value.value(global_state(world, state));
  return out;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (i < failed_index) {
            failed_index = i;
            failure = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---- training ---------------------------------------------------------------

namespace {

// Fisher-Yates on raw generator output, independent of the standard
// library's distributions.
void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

template <class Fn>
void for_each_minibatch(std::size_t n, std::size_t size, Rng& rng, Fn&& fn) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  shuffle(perm, rng);
  for (std::size_t lo = 0; lo < n; lo += size) {
    const std::size_t hi = std::min(n, lo + size);
    fn(std::span<const std::size_t>(perm.data() + lo, hi - lo));
  }
}

struct Sample {
  const TeamStep* step;
  double advantage;
  double target;
};

}  // namespace

BatchStats train_iteration(Team& team, const sim::WorldConfig& world, const dsl::RewardProgram& program,
                           const PpoConfig& config, std::uint64_t seed, std::size_t batch_index) {
  config.validate();
  const std::size_t n_agents = team.policies.size();
  std::vector<EpisodeRollout> episodes(config.episodes_per_batch);
  parallel_for(episodes.size(), config.workers, [&](std::size_t e) {
    episodes[e] = collect_episode(team, world, program, derive_seed(seed, {batch_index, e, 0}),
                                  derive_seed(seed, {batch_index, e, 1}));
  });

  BatchStats stats;
  stats.batch = batch_index;
  stats.episodes = episodes.size();
  std::vector<Sample> samples;
  std::size_t successes = 0;
  double total_reward = 0.0;
  double total_length = 0.0;
  for (const auto& ep : episodes) {
    total_reward += ep.episode_reward;
    total_length += static_cast<double>(ep.steps.size());
    if (ep.termination == sim::Termination::GoalReached) ++successes;
    const std::size_t t_len = ep.steps.size();
    if (t_len == 0) continue;
    std::vector<double> rewards(t_len), values(t_len + 1);
    // std::vector<bool> has no contiguous storage to view as a span.
    auto dones = std::make_unique<bool[]>(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      rewards[t] = ep.steps[t].reward;
      values[t] = ep.steps[t].value;
    }
    values[t_len] = ep.bootstrap_value;
    dones[t_len - 1] = ep.terminal;
    const std::span<const bool> dspan(dones.get(), t_len);
    const auto delta = compute_td_errors(rewards, values, dspan, config.gamma);
    const auto adv = compute_gae(delta, config.gamma, config.lam, dspan);
    for (std::size_t t = 0; t < t_len; ++t) samples.push_back({&ep.steps[t], adv[t], adv[t] + values[t]});
  }
  const auto n_episodes = static_cast<double>(episodes.size());
  stats.mean_reward = total_reward / n_episodes;
  stats.train_success_rate = static_cast<double>(successes) / n_episodes;
  stats.mean_episode_length = total_length / n_episodes;

  const std::size_t n = samples.size();
  std::vector<double> adv(n);
  for (std::size_t i = 0; i < n; ++i) adv[i] = samples[i].advantage;
  if (config.advantage_normalization && n > 0) {
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    // A constant advantage carries no ranking information: centering leaves zeros.
    const double scale = sd > 1e-8 ? 1.0 / sd : 0.0;
    for (double& a : adv) a = (a - mean) * scale;
  }

  Rng rng(derive_seed(seed, {batch_index, 0x5407}));
  double sum_policy = 0.0, sum_entropy = 0.0, sum_value = 0.0, sum_clip = 0.0;
  std::size_t policy_updates = 0, value_updates = 0;
  for (std::size_t epoch = 0; epoch < config.epochs_per_batch && n > 0; ++epoch) {
    for (std::size_t k = 0; k < n_agents; ++k) {
      auto& policy = team.policies[k];
      for_each_minibatch(n, config.minibatch_size, rng, [&](std::span<const std::size_t> idx) {
        PolicySamples ps;
        std::vector<sim::Observation> obs;
        obs.reserve(idx.size());
        ps.pre_squash.resize(2, static_cast<Eigen::Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) {
          const Sample& s = samples[idx[j]];
          obs.push_back(s.step->observations[k]);
          ps.pre_squash.col(static_cast<Eigen::Index>(j)) = s.step->pre_squash[k];
          ps.old_log_prob.push_back(s.step->log_prob[k]);
          ps.advantages.push_back(adv[idx[j]]);
        }
        ps.observations = nn::ObservationBatch::from(obs);
        policy.zero_grad();
        const PolicyLossTerms terms = policy_loss_and_grad(policy, ps, config.clip_eps, config.entropy_coeff);
        nn::clip_grad_norm(policy.grads(), config.max_grad_norm);
        nn::adam_step(policy.params(), policy.grads(), team.policy_adam[k]);
        sum_policy += terms.surrogate;
        sum_entropy += terms.entropy;
        sum_clip += terms.clip_fraction;
        ++policy_updates;
      });
    }
    for_each_minibatch(n, config.minibatch_size, rng, [&](std::span<const std::size_t> idx) {
      nn::Matrix states(samples[idx[0]].step->state.size(), static_cast<Eigen::Index>(idx.size()));
      std::vector<double> targets(idx.size());
      for (std::size_t j = 0; j < idx.size(); ++j) {
        states.col(static_cast<Eigen::Index>(j)) = samples[idx[j]].step->state;
        targets[j] = samples[idx[j]].target;
      }
      team.value.zero_grad();
      sum_value += value_loss_and_grad(team.value, states, targets, config.value_loss_coeff);
      nn::clip_grad_norm(team.value.grads(), config.max_grad_norm);
      nn::adam_step(team.value.params(), team.value.grads(), team.value_adam);
      ++value_updates;
    });
  }
  if (policy_updates > 0) {
    const auto u = static_cast<double>(policy_updates);
    stats.policy_loss = sum_policy / u;
    stats.entropy = sum_entropy / u;
    stats.clip_fraction = sum_clip / u;
  } else if (!team.policies.empty()) {
    stats.entropy = nn::gaussian_entropy(team.policies.front().log_std());
  }
  if (value_updates > 0) stats.value_loss = sum_value / static_cast<double>(value_updates);
  stats.total_loss =
      stats.policy_loss - config.entropy_coeff * stats.entropy + config.value_loss_coeff * stats.value_loss;
  return stats;
}

std::string metrics_line(const BatchStats& s) {
  nlohmann::ordered_json j;
  j["batch"] = s.batch;
  j["mean_reward"] = s.mean_reward;
  j["policy_loss"] = s.policy_loss;
  j["value_loss"] = s.value_loss;
  j["entropy"] = s.entropy;
  j["total_loss"] = s.total_loss;
  j["converged"] = s.converged;
  j["episodes"] = s.episodes;
  j["train_success_rate"] = s.train_success_rate;
  j["mean_episode_length"] = s.mean_episode_length;
  j["clip_fraction"] = s.clip_fraction;
  return j.dump();
}

BatchStats parse_metrics_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    BatchStats s;
    s.batch = j.at("batch").get<std::size_t>();
    s.mean_reward = j.at("mean_reward").get<double>();
    s.policy_loss = j.at("policy_loss").get<double>();
    s.value_loss = j.at("value_loss").get<double>();
    s.entropy = j.at("entropy").get<double>();
    s.converged = j.at("converged").get<bool>();
    s.total_loss = j.value("total_loss", 0.0);
    s.episodes = j.value("episodes", std::size_t{0});
    s.train_success_rate = j.value("train_success_rate", 0.0);
    s.mean_episode_length = j.value("mean_episode_length", 0.0);
    s.clip_fraction = j.value("clip_fraction", 0.0);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed metrics record: ") + e.what());
  }
}

ConvergenceTracker::ConvergenceTracker(std::size_t window, double rel_tol, std::size_t patience)
    : window_(window), rel_tol_(rel_tol), patience_(patience) {
  if (window_ == 0 || patience_ == 0) throw ConfigError("convergence window and patience must be positive");
}

bool ConvergenceTracker::update(double total_loss) {
  current_.push_back(total_loss);
  if (current_.size() < window_) return converged_;
  double mean = 0.0;
  for (double x : current_) mean += x;
  mean /= static_cast<double>(current_.size());
  current_.clear();
  if (previous_mean_) {
    const double rel = std::fabs(mean - *previous_mean_) / std::max(std::fabs(*previous_mean_), 1e-12);
    streak_ = rel < rel_tol_ ? streak_ + 1 : 0;
    if (streak_ >= patience_) converged_ = true;
  }
  previous_mean_ = mean;
  return converged_;
}

TrainSummary train(Team& team, const sim::WorldConfig& world, const dsl::RewardProgram& program,
                   const PpoConfig& config, const TrainBudget& budget, std::uint64_t seed, std::size_t first_batch,
                   const std::function<bool(const BatchStats&)>& on_batch) {
  TrainSummary summary;
  ConvergenceTracker tracker;
  for (std::size_t b = 0; b < budget.max_batches; ++b) {
    BatchStats stats = train_iteration(team, world, program, config, seed, first_batch + b);
    stats.converged = tracker.update(stats.total_loss);
    summary.history.push_back(stats);
    summary.batches = b + 1;
    summary.converged = stats.converged;
    const bool keep_going = !on_batch || on_batch(stats);
    if (!keep_going) break;
    if (stats.converged && budget.stop_on_convergence && summary.batches >= budget.min_batches) break;
  }
  return summary;
}

}  // namespace fcca::ppo
