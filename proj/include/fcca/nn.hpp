#pragma once

// Small dense networks with hand-written reverse mode, Adam, and the
// policy/value architectures used for training.
//
// Every network keeps its parameters in one flat vector (with a matching
// gradient vector); MlpLayout describes where each layer lives inside it.
// Batches are column-major: one column per sample.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcca/error.hpp"
#include "fcca/random.hpp"
#include "fcca/sim.hpp"

namespace fcca::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Plain n-d array of doubles; used for parameter blocks that cross module
// boundaries (checkpoints, tests).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);
  std::size_t size() const { return data.size(); }
};

// Flat parameter storage. A fixed base alignment keeps Eigen's vectorized
// kernels on the same code path every run, so results are bit-reproducible.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

struct MlpSpec {
  std::vector<std::size_t> widths;  // input, hidden..., output
  bool activate_output = false;     // ReLU on the last layer too
};

struct MlpCache {
  std::vector<Matrix> activations;  // [0] = input, [l+1] = output of layer l
};

class MlpLayout {
 public:
  MlpLayout() = default;
  MlpLayout(MlpSpec spec, std::size_t base);

  const MlpSpec& spec() const { return spec_; }
  std::size_t base() const { return base_; }
  std::size_t param_count() const { return count_; }
  std::size_t layers() const { return spec_.widths.size() - 1; }
  std::size_t input_dim() const { return spec_.widths.front(); }
  std::size_t output_dim() const { return spec_.widths.back(); }

  // He-normal weights, zero biases; the last layer's weights are multiplied
  // by output_scale.
  void init(std::span<double> params, Rng& rng, double output_scale) const;

  // For tests: W = I (requires square layers), b = 0.
  void init_identity(std::span<double> params) const;

  Matrix forward(std::span<const double> params, const Matrix& x, MlpCache* cache) const;

  // Accumulates dLoss/dparams into grads and returns dLoss/dinput.
  Matrix backward(std::span<const double> params, std::span<double> grads, const MlpCache& cache,
                  const Matrix& upstream) const;

  Eigen::Map<const Matrix> weight(std::span<const double> params, std::size_t layer) const;
  Eigen::Map<const Vector> bias(std::span<const double> params, std::size_t layer) const;

 private:
  MlpSpec spec_;
  std::size_t base_ = 0;
  std::size_t count_ = 0;
  std::vector<std::size_t> w_offset_;
  std::vector<std::size_t> b_offset_;
};

// Self-contained MLP owning its parameters.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpSpec spec);

  const MlpLayout& layout() const { return layout_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }
  void zero_grad();

  Matrix forward(const Matrix& x, MlpCache* cache = nullptr) const;
  Matrix backward(const MlpCache& cache, const Matrix& upstream);

 private:
  MlpLayout layout_;
  ParamVector params_;
  ParamVector grads_;
};

// ---- optimizer --------------------------------------------------------------

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg);
};

// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

// Scales grads so their global L2 norm is at most max_norm; returns the
// norm before scaling.
double clip_grad_norm(std::span<double> grads, double max_norm);

// ---- policy -----------------------------------------------------------------

struct PolicyArch {
  std::size_t hidden = 128;
  double init_log_std = -2.5;
  double max_speed = 1.25;
};

inline constexpr std::size_t kAgentFeatures = 5;     // g_x, g_y, v, theta, f
inline constexpr std::size_t kObstacleFeatures = 4;  // p_ox, p_oy, v_ox, v_oy
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Observations of B samples packed for a batched forward pass. Obstacle rows
// of sample b are columns [segments[b], segments[b+1]) of `obstacles`.
struct ObservationBatch {
  Matrix agent;      // kAgentFeatures x B
  Matrix obstacles;  // kObstacleFeatures x M
  std::vector<std::size_t> segments;  // B + 1 entries

  std::size_t size() const { return segments.empty() ? 0 : segments.size() - 1; }
  static ObservationBatch from(std::span<const sim::Observation> observations);
};

Vector agent_features(const sim::AgentObservation& o);

struct PolicyCache {
  MlpCache obstacle;
  MlpCache agent;
  MlpCache trunk;
  MlpCache head;
  std::vector<std::size_t> segments;
};

struct PolicySample {
  sim::Action action;
  Eigen::Vector2d pre_squash;  // Gaussian sample before squashing
  double log_prob = 0.0;       // in action space (includes the squash Jacobian)
  double entropy = 0.0;        // of the pre-squash Gaussian
};

// Per-obstacle MLP (mean-pooled) and agent MLP, concatenated, then a ReLU
// trunk and a linear Gaussian-mean head. State-independent log-std.
class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(PolicyArch arch, Rng& init_rng);

  const PolicyArch& arch() const { return arch_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }
  void zero_grad();
  std::string descriptor() const;

  // Concatenation of the pooled obstacle features and the agent features.
  Vector encode_observation(const sim::AgentObservation& agent,
                            std::span<const sim::ObstacleObservation> obstacles) const;
  Vector encode_observation(const sim::Observation& obs) const {
    return encode_observation(obs.agent, obs.obstacles);
  }

  Eigen::Vector2d mean(const Vector& features) const;
  Eigen::Vector2d log_std() const;  // clamped to [kLogStdMin, kLogStdMax]

  // Samples (or, deterministically, takes the mean) in pre-squash space.
  PolicySample act(const Vector& features, Rng& rng, bool deterministic = false) const;
  double log_prob(const Vector& features, const Eigen::Vector2d& pre_squash) const;

  // Batched path used by the PPO update.
  Matrix forward_mean(const ObservationBatch& batch, PolicyCache* cache) const;
  // Accumulates gradients given dLoss/dmean (2 x B) and dLoss/dlog_std.
  void backward(const PolicyCache& cache, const Matrix& d_mean, const Eigen::Vector2d& d_log_std);

 private:
  PolicyArch arch_;
  MlpLayout obstacle_;
  MlpLayout agent_;
  MlpLayout trunk_;
  MlpLayout head_;
  std::size_t log_std_offset_ = 0;
  ParamVector params_;
  ParamVector grads_;
};

// Squashing: speed = max_speed * sigmoid(z0), heading = pi * tanh(z1).
sim::Action squash(const Eigen::Vector2d& z, double max_speed);
// log |d action / d z|
double squash_log_det(const Eigen::Vector2d& z, double max_speed);
// Sum over the two dimensions of log N(z; mean, exp(log_std)^2).
double gaussian_log_prob(const Eigen::Vector2d& z, const Eigen::Vector2d& mean,
                         const Eigen::Vector2d& log_std);
double gaussian_entropy(const Eigen::Vector2d& log_std);

// Centralized critic over the global state encoding.
class ValueNet {
 public:
  ValueNet() = default;
  ValueNet(std::size_t input_dim, std::size_t hidden, Rng& init_rng);

  std::size_t input_dim() const { return mlp_.layout().input_dim(); }
  std::span<double> params() { return mlp_.params(); }
  std::span<const double> params() const { return mlp_.params(); }
  std::span<double> grads() { return mlp_.grads(); }
  void zero_grad() { mlp_.zero_grad(); }
  std::string descriptor() const;

  double value(const Vector& state) const;
  Matrix forward(const Matrix& states, MlpCache* cache) const { return mlp_.forward(states, cache); }
  void backward(const MlpCache& cache, const Matrix& d_values) { mlp_.backward(cache, d_values); }

 private:
  Mlp mlp_;
};

// ---- checkpoints ------------------------------------------------------------

class CheckpointError : public Error {
 public:
  using Error::Error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointBlock {
  std::string name;
  std::vector<double> params;
  AdamState adam;
};

struct Checkpoint {
  std::string architecture;
  std::vector<CheckpointBlock> blocks;
};

// Layout: "FCCACKPT", u32 version, u32-length architecture text, u32 block
// count, then per block: u32-length name, u64 count + f64 params, u64 Adam
// step, f64 lr/beta1/beta2/eps, u64 count + f64 m, f64 v. Little-endian.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);

}  // namespace fcca::nn
