#include "fcca/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

namespace fcca::nn {

// ---- Tensor -----------------------------------------------------------------

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(product(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (data.size() != product(shape)) throw ShapeError("tensor data length does not match shape");
}

// ---- MlpLayout --------------------------------------------------------------

MlpLayout::MlpLayout(MlpSpec spec, std::size_t base) : spec_(std::move(spec)), base_(base) {
  if (spec_.widths.size() < 2) throw ShapeError("MLP needs at least one layer");
  for (std::size_t w : spec_.widths)
    if (w == 0) throw ShapeError("MLP widths must be positive");
  std::size_t off = base_;
  for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
    w_offset_.push_back(off);
    off += spec_.widths[l] * spec_.widths[l + 1];
    b_offset_.push_back(off);
    off += spec_.widths[l + 1];
  }
  count_ = off - base_;
}

Eigen::Map<const Matrix> MlpLayout::weight(std::span<const double> p, std::size_t l) const {
  return {p.data() + w_offset_[l], static_cast<Eigen::Index>(spec_.widths[l + 1]),
          static_cast<Eigen::Index>(spec_.widths[l])};
}

Eigen::Map<const Vector> MlpLayout::bias(std::span<const double> p, std::size_t l) const {
  return {p.data() + b_offset_[l], static_cast<Eigen::Index>(spec_.widths[l + 1])};
}

void MlpLayout::init(std::span<double> p, Rng& rng, double output_scale) const {
  for (std::size_t l = 0; l < layers(); ++l) {
    const double std_dev = std::sqrt(2.0 / static_cast<double>(spec_.widths[l]));
    const double scale = l + 1 == layers() ? output_scale : 1.0;
    const std::size_t nw = spec_.widths[l] * spec_.widths[l + 1];
    for (std::size_t i = 0; i < nw; ++i) p[w_offset_[l] + i] = scale * std_dev * standard_normal(rng);
    for (std::size_t i = 0; i < spec_.widths[l + 1]; ++i) p[b_offset_[l] + i] = 0.0;
  }
}

void MlpLayout::init_identity(std::span<double> p) const {
  for (std::size_t l = 0; l < layers(); ++l) {
    if (spec_.widths[l] != spec_.widths[l + 1]) throw ShapeError("identity init needs square layers");
    const std::size_t n = spec_.widths[l];
    for (std::size_t i = 0; i < n * n; ++i) p[w_offset_[l] + i] = (i % (n + 1) == 0) ? 1.0 : 0.0;
    for (std::size_t i = 0; i < n; ++i) p[b_offset_[l] + i] = 0.0;
  }
}

Matrix MlpLayout::forward(std::span<const double> p, const Matrix& x, MlpCache* cache) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim())
    throw ShapeError("MLP input has " + std::to_string(x.rows()) + " rows, expected " +
                     std::to_string(input_dim()));
  if (cache) {
    cache->activations.clear();
    cache->activations.reserve(layers() + 1);
    cache->activations.push_back(x);
  }
  Matrix h = x;
  for (std::size_t l = 0; l < layers(); ++l) {
    Matrix z = weight(p, l) * h;
    z.colwise() += bias(p, l);
    if (l + 1 < layers() || spec_.activate_output) z = z.cwiseMax(0.0);
    h = std::move(z);
    if (cache) cache->activations.push_back(h);
  }
  return h;
}

Matrix MlpLayout::backward(std::span<const double> p, std::span<double> grads, const MlpCache& cache,
                           const Matrix& upstream) const {
  if (cache.activations.size() != layers() + 1) throw ShapeError("MLP cache does not match layout");
  if (static_cast<std::size_t>(upstream.rows()) != output_dim() ||
      upstream.cols() != cache.activations.back().cols())
    throw ShapeError("MLP upstream gradient shape mismatch");
  Matrix g = upstream;
  for (std::size_t l = layers(); l-- > 0;) {
    if (l + 1 < layers() || spec_.activate_output)
      g = (cache.activations[l + 1].array() > 0.0).select(g, 0.0);
    const Matrix& in = cache.activations[l];
    Eigen::Map<Matrix> dw(grads.data() + w_offset_[l], static_cast<Eigen::Index>(spec_.widths[l + 1]),
                          static_cast<Eigen::Index>(spec_.widths[l]));
    Eigen::Map<Vector> db(grads.data() + b_offset_[l], static_cast<Eigen::Index>(spec_.widths[l + 1]));
    dw.noalias() += g * in.transpose();
    db += g.rowwise().sum();
    g = weight(p, l).transpose() * g;
  }
  return g;
}

// ---- Mlp --------------------------------------------------------------------

Mlp::Mlp(MlpSpec spec)
    : layout_(std::move(spec), 0), params_(layout_.param_count(), 0.0), grads_(layout_.param_count(), 0.0) {}

void Mlp::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

Matrix Mlp::forward(const Matrix& x, MlpCache* cache) const { return layout_.forward(params_, x, cache); }

Matrix Mlp::backward(const MlpCache& cache, const Matrix& upstream) {
  return layout_.backward(params_, grads_, cache, upstream);
}

// ---- Adam -------------------------------------------------------------------

AdamState::AdamState(std::size_t n, AdamConfig cfg) : config(cfg), m(n, 0.0), v(n, 0.0) {}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s) {
  if (params.size() != grads.size() || params.size() != s.m.size() || params.size() != s.v.size())
    throw ShapeError("adam_step: parameter/gradient/state sizes differ");
  ++s.step;
  const auto& c = s.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * grads[i];
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
    const double m_hat = s.m[i] / bc1;
    const double v_hat = s.v[i] / bc2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

double clip_grad_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double n = std::sqrt(sq);
  if (max_norm > 0.0 && n > max_norm) {
    const double s = max_norm / n;
    for (double& g : grads) g *= s;
  }
  return n;
}

// ---- policy -----------------------------------------------------------------

namespace {

double softplus(double x) { return std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0); }

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

Vector agent_features(const sim::AgentObservation& o) {
  Vector v(kAgentFeatures);
  v << o.g_x, o.g_y, o.v, o.theta, o.f;
  return v;
}

ObservationBatch ObservationBatch::from(std::span<const sim::Observation> observations) {
  ObservationBatch b;
  const auto n = static_cast<Eigen::Index>(observations.size());
  std::size_t total = 0;
  for (const auto& o : observations) total += o.obstacles.size();
  b.agent.resize(kAgentFeatures, n);
  b.obstacles.resize(kObstacleFeatures, static_cast<Eigen::Index>(total));
  b.segments.reserve(observations.size() + 1);
  b.segments.push_back(0);
  Eigen::Index col = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = observations[static_cast<std::size_t>(i)];
    b.agent.col(i) = agent_features(o.agent);
    for (const auto& ob : o.obstacles) {
      b.obstacles.col(col++) << ob.p_ox, ob.p_oy, ob.v_ox, ob.v_oy;
    }
    b.segments.push_back(static_cast<std::size_t>(col));
  }
  return b;
}

sim::Action squash(const Eigen::Vector2d& z, double max_speed) {
  return {max_speed / (1.0 + std::exp(-z[0])), std::numbers::pi * std::tanh(z[1])};
}

double squash_log_det(const Eigen::Vector2d& z, double max_speed) {
  const double speed = std::log(max_speed) - softplus(-z[0]) - softplus(z[0]);
  const double heading = std::log(std::numbers::pi) + 2.0 * (std::numbers::ln2 - z[1] - softplus(-2.0 * z[1]));
  return speed + heading;
}

double gaussian_log_prob(const Eigen::Vector2d& z, const Eigen::Vector2d& mean, const Eigen::Vector2d& log_std) {
  double lp = 0.0;
  for (int d = 0; d < 2; ++d) {
    const double u = (z[d] - mean[d]) * std::exp(-log_std[d]);
    lp += -0.5 * u * u - log_std[d] - 0.5 * kLog2Pi;
  }
  return lp;
}

double gaussian_entropy(const Eigen::Vector2d& log_std) {
  return log_std.sum() + 2.0 * 0.5 * (1.0 + kLog2Pi);
}

PolicyNet::PolicyNet(PolicyArch arch, Rng& rng) : arch_(arch) {
  const std::size_t h = arch_.hidden;
  obstacle_ = MlpLayout({{kObstacleFeatures, h}, true}, 0);
  agent_ = MlpLayout({{kAgentFeatures, h}, true}, obstacle_.base() + obstacle_.param_count());
  trunk_ = MlpLayout({{2 * h, h}, true}, agent_.base() + agent_.param_count());
  head_ = MlpLayout({{h, 2}, false}, trunk_.base() + trunk_.param_count());
  log_std_offset_ = head_.base() + head_.param_count();
  params_.assign(log_std_offset_ + 2, 0.0);
  grads_.assign(params_.size(), 0.0);
  obstacle_.init(params_, rng, 1.0);
  agent_.init(params_, rng, 1.0);
  trunk_.init(params_, rng, 1.0);
  head_.init(params_, rng, 0.01);
  params_[log_std_offset_] = arch_.init_log_std;
  params_[log_std_offset_ + 1] = arch_.init_log_std;
}

void PolicyNet::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

std::string PolicyNet::descriptor() const {
  std::ostringstream os;
  os << "policy(hidden=" << arch_.hidden << ",obstacle=" << kObstacleFeatures << ",agent=" << kAgentFeatures
     << ",params=" << params_.size() << ")";
  return os.str();
}

Eigen::Vector2d PolicyNet::log_std() const {
  return {std::clamp(params_[log_std_offset_], kLogStdMin, kLogStdMax),
          std::clamp(params_[log_std_offset_ + 1], kLogStdMin, kLogStdMax)};
}

Vector PolicyNet::encode_observation(const sim::AgentObservation& agent,
                                     std::span<const sim::ObstacleObservation> obstacles) const {
  const std::size_t h = arch_.hidden;
  Vector features = Vector::Zero(static_cast<Eigen::Index>(2 * h));
  if (!obstacles.empty()) {
    Matrix o(kObstacleFeatures, static_cast<Eigen::Index>(obstacles.size()));
    for (std::size_t k = 0; k < obstacles.size(); ++k)
      o.col(static_cast<Eigen::Index>(k)) << obstacles[k].p_ox, obstacles[k].p_oy, obstacles[k].v_ox,
          obstacles[k].v_oy;
    const Matrix hidden = obstacle_.forward(params_, o, nullptr);
    features.head(static_cast<Eigen::Index>(h)) = hidden.rowwise().mean();
  }
  features.tail(static_cast<Eigen::Index>(h)) = agent_.forward(params_, agent_features(agent), nullptr);
  return features;
}

Eigen::Vector2d PolicyNet::mean(const Vector& features) const {
  if (static_cast<std::size_t>(features.size()) != 2 * arch_.hidden)
    throw ShapeError("policy features have the wrong length");
  const Matrix t = trunk_.forward(params_, features, nullptr);
  const Matrix m = head_.forward(params_, t, nullptr);
  return {m(0, 0), m(1, 0)};
}

PolicySample PolicyNet::act(const Vector& features, Rng& rng, bool deterministic) const {
  const Eigen::Vector2d mu = mean(features);
  const Eigen::Vector2d ls = log_std();
  PolicySample s;
  s.pre_squash = mu;
  if (!deterministic) {
    for (int d = 0; d < 2; ++d) s.pre_squash[d] += std::exp(ls[d]) * standard_normal(rng);
  }
  s.action = squash(s.pre_squash, arch_.max_speed);
  s.log_prob = gaussian_log_prob(s.pre_squash, mu, ls) - squash_log_det(s.pre_squash, arch_.max_speed);
  s.entropy = gaussian_entropy(ls);
  if (!std::isfinite(s.log_prob) || !std::isfinite(s.action.speed) || !std::isfinite(s.action.heading))
    throw Error("policy produced a non-finite sample");
  return s;
}

double PolicyNet::log_prob(const Vector& features, const Eigen::Vector2d& z) const {
  return gaussian_log_prob(z, mean(features), log_std()) - squash_log_det(z, arch_.max_speed);
}

Matrix PolicyNet::forward_mean(const ObservationBatch& batch, PolicyCache* cache) const {
  const auto h = static_cast<Eigen::Index>(arch_.hidden);
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (batch.agent.cols() != n) throw ShapeError("observation batch is inconsistent");
  Matrix concat = Matrix::Zero(2 * h, n);
  if (batch.obstacles.cols() > 0) {
    const Matrix hidden = obstacle_.forward(params_, batch.obstacles, cache ? &cache->obstacle : nullptr);
    for (Eigen::Index b = 0; b < n; ++b) {
      const auto lo = static_cast<Eigen::Index>(batch.segments[static_cast<std::size_t>(b)]);
      const auto hi = static_cast<Eigen::Index>(batch.segments[static_cast<std::size_t>(b) + 1]);
      if (hi > lo) concat.col(b).head(h) = hidden.middleCols(lo, hi - lo).rowwise().mean();
    }
  } else if (cache) {
    cache->obstacle.activations.clear();
  }
  concat.bottomRows(h) = agent_.forward(params_, batch.agent, cache ? &cache->agent : nullptr);
  const Matrix t = trunk_.forward(params_, concat, cache ? &cache->trunk : nullptr);
  if (cache) cache->segments = batch.segments;
  return head_.forward(params_, t, cache ? &cache->head : nullptr);
}

void PolicyNet::backward(const PolicyCache& cache, const Matrix& d_mean, const Eigen::Vector2d& d_log_std) {
  const auto h = static_cast<Eigen::Index>(arch_.hidden);
  const Matrix d_trunk = head_.backward(params_, grads_, cache.head, d_mean);
  const Matrix d_concat = trunk_.backward(params_, grads_, cache.trunk, d_trunk);
  agent_.backward(params_, grads_, cache.agent, d_concat.bottomRows(h));
  if (!cache.obstacle.activations.empty()) {
    const Eigen::Index m = cache.obstacle.activations.front().cols();
    Matrix d_hidden(h, m);
    const std::size_t n = cache.segments.size() - 1;
    for (std::size_t b = 0; b < n; ++b) {
      const auto lo = static_cast<Eigen::Index>(cache.segments[b]);
      const auto hi = static_cast<Eigen::Index>(cache.segments[b + 1]);
      if (hi == lo) continue;
      const Vector share = d_concat.col(static_cast<Eigen::Index>(b)).head(h) / static_cast<double>(hi - lo);
      for (Eigen::Index c = lo; c < hi; ++c) d_hidden.col(c) = share;
    }
    obstacle_.backward(params_, grads_, cache.obstacle, d_hidden);
  }
  for (int d = 0; d < 2; ++d) {
    const double raw = params_[log_std_offset_ + static_cast<std::size_t>(d)];
    if (raw > kLogStdMin && raw < kLogStdMax) grads_[log_std_offset_ + static_cast<std::size_t>(d)] += d_log_std[d];
  }
}

// ---- value ------------------------------------------------------------------

ValueNet::ValueNet(std::size_t input_dim, std::size_t hidden, Rng& rng)
    : mlp_(MlpSpec{{input_dim, hidden, hidden, 1}, false}) {
  mlp_.layout().init(mlp_.params(), rng, 0.0);
}

std::string ValueNet::descriptor() const {
  const auto& w = mlp_.layout().spec().widths;
  std::ostringstream os;
  os << "value(";
  for (std::size_t i = 0; i < w.size(); ++i) os << (i ? "-" : "") << w[i];
  os << ")";
  return os.str();
}

double ValueNet::value(const Vector& state) const { return mlp_.forward(state)(0, 0); }

// ---- checkpoint -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'C', 'C', 'A', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    for (double d : v) f64(d);
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const std::uint64_t n = u64();
    if (n > (in_.size() - pos_) / 8) throw CheckpointTruncatedError("checkpoint truncated (parameter block)");
    std::vector<double> v(n);
    for (auto& d : v) d = f64();
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointTruncatedError("checkpoint truncated");
  }
  std::uint64_t le(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(ckpt.architecture);
  w.u32(static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& b : ckpt.blocks) {
    if (b.adam.m.size() != b.params.size() || b.adam.v.size() != b.params.size())
      throw ShapeError("checkpoint block '" + b.name + "': Adam state does not match parameters");
    w.str(b.name);
    w.doubles(b.params);
    w.u64(b.adam.step);
    w.f64(b.adam.config.lr);
    w.f64(b.adam.config.beta1);
    w.f64(b.adam.config.beta2);
    w.f64(b.adam.config.eps);
    w.doubles(b.adam.m);
    w.doubles(b.adam.v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  const auto magic = r.bytes(sizeof kMagic);
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) throw CheckpointError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.architecture = r.str();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    CheckpointBlock b;
    b.name = r.str();
    b.params = r.doubles();
    b.adam.step = r.u64();
    b.adam.config.lr = r.f64();
    b.adam.config.beta1 = r.f64();
    b.adam.config.beta2 = r.f64();
    b.adam.config.eps = r.f64();
    b.adam.m = r.doubles();
    b.adam.v = r.doubles();
    if (b.adam.m.size() != b.params.size() || b.adam.v.size() != b.params.size())
      throw CheckpointShapeError("checkpoint block '" + b.name + "': Adam state does not match parameters");
    c.blocks.push_back(std::move(b));
  }
  if (!r.at_end()) throw CheckpointError("trailing bytes after checkpoint");
  return c;
}

}  // namespace fcca::nn
