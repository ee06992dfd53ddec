#pragma once

// Multi-agent PPO with centralized training and decentralized execution: each
// agent owns a policy over its local observation, a single critic sees the
// global state, and every agent is trained on the same team reward.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcca/dsl.hpp"
#include "fcca/nn.hpp"
#include "fcca/sim.hpp"

namespace fcca::ppo {

struct PpoConfig {
  double gamma = 0.99;
  double lam = 0.95;
  double clip_eps = 0.2;
  std::size_t epochs_per_batch = 15;
  double learning_rate = 3e-4;        // policies
  double value_learning_rate = 1e-3;  // critic
  std::size_t minibatch_size = 256;
  double value_loss_coeff = 0.5;
  double entropy_coeff = 0.01;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  std::size_t episodes_per_batch = 20;
  bool advantage_normalization = true;
  std::size_t workers = 0;  // rollout threads; 0 = hardware concurrency

  void validate() const;
};

// ---- advantage estimation ---------------------------------------------------

// delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t). `values` carries
// one extra trailing entry (the bootstrap value after the last step).
std::vector<double> compute_td_errors(std::span<const double> rewards, std::span<const double> values,
                                      std::span<const bool> dones, double gamma);

// A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}, computed backwards.
std::vector<double> compute_gae(std::span<const double> deltas, double gamma, double lam,
                                std::span<const bool> dones);

// ---- losses -----------------------------------------------------------------

struct SurrogateResult {
  double loss = 0.0;                // -mean(min(r A, clip(r) A))
  std::vector<double> d_new_logp;  // dLoss/dnew_logp per sample
  double clip_fraction = 0.0;      // share of samples on the constant branch
};

// Throws InputError on length mismatch and Error on a non-finite ratio.
SurrogateResult ppo_policy_loss(std::span<const double> new_logp, std::span<const double> old_logp,
                                std::span<const double> advantages, double clip_eps);

struct MseResult {
  double loss = 0.0;
  std::vector<double> d_pred;
};
MseResult value_loss(std::span<const double> predictions, std::span<const double> targets);

// Samples of one agent's policy collected under the old parameters.
struct PolicySamples {
  nn::ObservationBatch observations;
  nn::Matrix pre_squash;  // 2 x B
  std::vector<double> old_log_prob;
  std::vector<double> advantages;
};

struct PolicyLossTerms {
  double surrogate = 0.0;
  double entropy = 0.0;
  double total = 0.0;  // surrogate - entropy_coeff * entropy
  double clip_fraction = 0.0;
};

// Evaluates the clipped surrogate minus the entropy bonus and accumulates its
// gradient into policy.grads().
PolicyLossTerms policy_loss_and_grad(nn::PolicyNet& policy, const PolicySamples& samples, double clip_eps,
                                     double entropy_coeff);

// value_coeff * MSE(V(states), targets); accumulates into value.grads() and
// returns the unscaled MSE.
double value_loss_and_grad(nn::ValueNet& value, const nn::Matrix& states, std::span<const double> targets,
                           double value_coeff);

// ---- global state and rewards ----------------------------------------------

inline constexpr std::size_t kGlobalObstacleSlots = 8;

// Per agent (slot - position, velocity), then formation error and time
// fraction, then the kGlobalObstacleSlots obstacles nearest the team centroid
// as (dx, dy, vx, vy, present) relative to the centroid.
std::size_t global_state_dim(std::size_t num_agents);
nn::Vector global_state(const sim::WorldConfig& config, const sim::EpisodeState& state);

// Reward context of `agent` after a step that produced `outcome`.
dsl::EvalContext build_reward_context(const sim::WorldConfig& config, const sim::EpisodeState& state,
                                      const sim::StepOutcome& outcome, std::size_t agent);

// Team reward: mean over agents of the program evaluated on each agent's
// context. DomainError propagates.
double shared_reward(const dsl::RewardProgram& program, const sim::WorldConfig& config,
                     const sim::EpisodeState& state, const sim::StepOutcome& outcome);

// ---- team -------------------------------------------------------------------

struct NetworkConfig {
  std::size_t policy_hidden = 128;
  std::size_t value_hidden = 256;
  double init_log_std = -2.5;
};

struct Team {
  std::vector<nn::PolicyNet> policies;
  nn::ValueNet value;
  std::vector<nn::AdamState> policy_adam;
  nn::AdamState value_adam;

  static Team create(const sim::WorldConfig& world, const NetworkConfig& net, const PpoConfig& ppo,
                     std::uint64_t seed);

  std::string architecture() const;
  nn::Checkpoint to_checkpoint() const;
  // Throws nn::CheckpointShapeError when the checkpoint does not fit.
  void load_checkpoint(const nn::Checkpoint& ckpt);
};

// ---- rollouts and training --------------------------------------------------

struct TeamStep {
  std::vector<sim::Observation> observations;  // per agent, before acting
  std::vector<Eigen::Vector2d> pre_squash;
  std::vector<double> log_prob;
  nn::Vector state;  // global state before acting
  double value = 0.0;
  double reward = 0.0;
};

struct EpisodeRollout {
  std::vector<TeamStep> steps;
  double bootstrap_value = 0.0;  // V(s_T) for timeouts, 0 for terminal endings
  bool terminal = false;
  sim::Termination termination = sim::Termination::None;
  double episode_reward = 0.0;
};

EpisodeRollout collect_episode(const Team& team, const sim::WorldConfig& world,
                               const dsl::RewardProgram& program, std::uint64_t reset_seed,
                               std::uint64_t action_seed);

struct BatchStats {
  std::size_t batch = 0;
  double mean_reward = 0.0;  // mean episode return (undiscounted shared reward)
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total_loss = 0.0;
  bool converged = false;
  std::size_t episodes = 0;
  double train_success_rate = 0.0;
  double mean_episode_length = 0.0;
  double clip_fraction = 0.0;
};

// One metrics record: a single JSON object on one line.
std::string metrics_line(const BatchStats& stats);
BatchStats parse_metrics_line(std::string_view line);

// Collects one batch of episodes and runs the PPO update. The batch's episode
// seeds depend only on (seed, batch_index, episode), never on scheduling.
BatchStats train_iteration(Team& team, const sim::WorldConfig& world, const dsl::RewardProgram& program,
                           const PpoConfig& config, std::uint64_t seed, std::size_t batch_index);

// Loss convergence: the total loss is averaged over consecutive
// non-overlapping windows; the run has converged once `patience` successive
// windows each moved less than `rel_tol` relative to the window before.
class ConvergenceTracker {
 public:
  explicit ConvergenceTracker(std::size_t window = 10, double rel_tol = 0.02, std::size_t patience = 3);
  bool update(double total_loss);
  bool converged() const { return converged_; }

 private:
  std::size_t window_;
  double rel_tol_;
  std::size_t patience_;
  std::vector<double> current_;
  std::optional<double> previous_mean_;
  std::size_t streak_ = 0;
  bool converged_ = false;
};

struct TrainBudget {
  std::size_t max_batches = 100;
  std::size_t min_batches = 0;
  bool stop_on_convergence = true;
};

struct TrainSummary {
  std::size_t batches = 0;
  bool converged = false;
  std::vector<BatchStats> history;
};

// Runs batches from `first_batch` until convergence or the cap. `on_batch`
// sees each batch's stats; returning false stops early.
TrainSummary train(Team& team, const sim::WorldConfig& world, const dsl::RewardProgram& program,
                   const PpoConfig& config, const TrainBudget& budget, std::uint64_t seed,
                   std::size_t first_batch = 0,
                   const std::function<bool(const BatchStats&)>& on_batch = {});

// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace fcca::ppo
