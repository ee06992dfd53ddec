#include "fcca/formation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fcca::formation {

FormationGraph::FormationGraph(std::vector<Vec2> positions)
    : FormationGraph(positions, complete_edges(positions.size())) {}

FormationGraph::FormationGraph(std::vector<Vec2> positions, std::vector<Edge> edges)
    : positions_(std::move(positions)) {
  if (positions_.size() < 2) throw InputError("formation graph needs at least 2 nodes");
  for (auto& [a, b] : edges) {
    if (a >= positions_.size() || b >= positions_.size())
      throw InputError("edge index out of range");
    if (a == b) throw InputError("self-loop edge");
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw InputError("duplicate edge");
  edges_ = std::move(edges);
}

std::vector<Edge> FormationGraph::complete_edges(std::size_t n) {
  std::vector<Edge> edges;
  edges.reserve(n * (n > 0 ? n - 1 : 0) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  return edges;
}

WeightMatrix::WeightMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols()) throw InputError("weight matrix must be square");
}

WeightMatrix edge_weights(const FormationGraph& graph) {
  const auto& p = graph.positions();
  for (const Vec2& v : p)
    if (!is_finite(v)) throw InputError("non-finite agent position");
  const auto n = static_cast<Eigen::Index>(graph.size());
  Matrix w = Matrix::Zero(n, n);
  for (const auto& [i, j] : graph.edges()) {
    const double d2 = squared_norm(p[i] - p[j]);
    w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d2;
    w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = d2;
  }
  return WeightMatrix(std::move(w));
}

NormalizedLaplacian normalized_laplacian(const WeightMatrix& weights) {
  const Matrix& a = weights.entries();
  const Eigen::Index n = a.rows();
  Eigen::VectorXd inv_sqrt_deg(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double deg = a.row(i).sum();
    if (!(deg > 0.0))
      throw DegenerateFormationError("node " + std::to_string(i) +
                                     " has zero degree (coincident agents)");
    inv_sqrt_deg(i) = 1.0 / std::sqrt(deg);
  }
  Matrix l(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      // Same product order for (i,j) and (j,i) keeps the result exactly symmetric.
      const double lo = std::min(inv_sqrt_deg(i), inv_sqrt_deg(j));
      const double hi = std::max(inv_sqrt_deg(i), inv_sqrt_deg(j));
      l(i, j) = (i == j ? 1.0 : 0.0) - a(i, j) * lo * hi;
    }
  }
  // A has a zero diagonal, so the diagonal of L-hat is exactly 1.
  return NormalizedLaplacian(std::move(l));
}

double formation_error(const NormalizedLaplacian& current, const NormalizedLaplacian& desired) {
  if (current.size() != desired.size())
    throw InputError("formation_error: dimension mismatch (" + std::to_string(current.size()) +
                     " vs " + std::to_string(desired.size()) + ")");
  return (current.entries() - desired.entries()).squaredNorm();
}

FormationSpec::FormationSpec(std::vector<Vec2> desired_positions)
    : desired_(std::move(desired_positions)),
      laplacian_(Matrix()) {
  for (std::size_t i = 0; i < desired_.size(); ++i)
    for (std::size_t j = i + 1; j < desired_.size(); ++j)
      if (desired_[i] == desired_[j])
        throw InputError("desired formation positions must be pairwise distinct");
  laplacian_ = normalized_laplacian(edge_weights(FormationGraph(desired_)));
}

std::vector<Vec2> FormationSpec::centered_offsets() const {
  const Vec2 c = centroid(desired_);
  std::vector<Vec2> out;
  out.reserve(desired_.size());
  for (const Vec2& p : desired_) out.push_back(p - c);
  return out;
}

double FormationSpec::error(std::span<const Vec2> positions) const {
  FormationGraph g(std::vector<Vec2>(positions.begin(), positions.end()));
  return formation_error(normalized_laplacian(edge_weights(g)), laplacian_);
}

Vec2 centroid(std::span<const Vec2> points) {
  Vec2 c;
  for (const Vec2& p : points) c += p;
  if (!points.empty()) c *= 1.0 / static_cast<double>(points.size());
  return c;
}

}  // namespace fcca::formation
