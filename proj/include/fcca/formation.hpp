#pragma once

// Similarity-invariant formation descriptors.
//
// Agents are nodes of an undirected graph; each edge carries the squared
// distance between its endpoints. The symmetric normalized Laplacian of that
// weighted graph does not change under translation, rotation, reflection or
// uniform scaling of the positions, so the squared Frobenius distance between
// the current and desired normalized Laplacians measures shape deviation only.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "fcca/error.hpp"
#include "fcca/geometry.hpp"

namespace fcca::formation {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Every node of a weighted graph must have at least one positive-weight edge
// for the normalization to exist.
class DegenerateFormationError : public Error {
 public:
  using Error::Error;
};

using Edge = std::pair<std::size_t, std::size_t>;

class FormationGraph {
 public:
  // Complete graph on positions.size() nodes.
  explicit FormationGraph(std::vector<Vec2> positions);
  FormationGraph(std::vector<Vec2> positions, std::vector<Edge> edges);

  const std::vector<Vec2>& positions() const { return positions_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t size() const { return positions_.size(); }
  bool is_complete() const { return edges_.size() == size() * (size() - 1) / 2; }

  static std::vector<Edge> complete_edges(std::size_t n);

 private:
  std::vector<Vec2> positions_;
  std::vector<Edge> edges_;  // normalized so that first < second, sorted
};

// Symmetric, zero diagonal, nonnegative; nonzero only on edges.
class WeightMatrix {
 public:
  explicit WeightMatrix(Matrix entries);
  const Matrix& entries() const { return entries_; }
  std::size_t size() const { return static_cast<std::size_t>(entries_.rows()); }
  double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }

 private:
  Matrix entries_;
};

class NormalizedLaplacian {
 public:
  explicit NormalizedLaplacian(Matrix entries) : entries_(std::move(entries)) {}
  const Matrix& entries() const { return entries_; }
  std::size_t size() const { return static_cast<std::size_t>(entries_.rows()); }
  double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }

 private:
  Matrix entries_;
};

WeightMatrix edge_weights(const FormationGraph& graph);

// I - D^-1/2 A D^-1/2 with D = diag(row sums of A).
NormalizedLaplacian normalized_laplacian(const WeightMatrix& weights);

// Squared Frobenius norm of the difference.
double formation_error(const NormalizedLaplacian& current, const NormalizedLaplacian& desired);

// Desired shape plus its cached normalized Laplacian (complete graph).
class FormationSpec {
 public:
  explicit FormationSpec(std::vector<Vec2> desired_positions);

  const std::vector<Vec2>& desired_positions() const { return desired_; }
  const NormalizedLaplacian& desired_laplacian() const { return laplacian_; }
  std::size_t size() const { return desired_.size(); }

  // Offsets of each desired position from the desired centroid.
  std::vector<Vec2> centered_offsets() const;

  // Formation error of `positions` (complete graph) against the desired shape.
  double error(std::span<const Vec2> positions) const;

 private:
  std::vector<Vec2> desired_;
  NormalizedLaplacian laplacian_;
};

Vec2 centroid(std::span<const Vec2> points);

}  // namespace fcca::formation
