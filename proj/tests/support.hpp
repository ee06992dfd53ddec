#pragma once

// Shared helpers for the test binaries: seeded generators and numeric checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fcca/geometry.hpp"
#include "fcca/random.hpp"

namespace fcca::test {

inline std::vector<Vec2> random_positions(Rng& rng, std::size_t n, double extent = 5.0) {
  std::vector<Vec2> p(n);
  for (auto& v : p) v = {uniform(rng, -extent, extent), uniform(rng, -extent, extent)};
  return p;
}

inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi_inclusive) {
  return lo + static_cast<std::size_t>(rng() % (hi_inclusive - lo + 1));
}

// |a - b| / max(1, |a|, |b|): relative for large values, absolute near zero.
inline double scaled_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central differences of f with respect to every entry of x.
inline std::vector<double> central_differences(std::span<double> x, const std::function<double()>& f,
                                               double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace fcca::test
