#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace fcca {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to fan one master seed out into independent
// streams keyed by (worker, batch, episode, ...).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(master);
  for (std::uint64_t k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

// Uniform double in [lo, hi) built from raw 53 bits, so the sequence does not
// depend on the standard library's distribution implementation.
inline double uniform(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

// Standard normal via Box-Muller on `uniform`, for the same reason.
inline double standard_normal(Rng& rng) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  double u1 = uniform(rng, 0.0, 1.0);
  while (u1 <= 0.0) u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace fcca
