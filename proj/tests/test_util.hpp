#pragma once

#include <cmath>
#include <random>

#include "rafnl/cube.hpp"

namespace rafnl::testing {

inline Cube random_cube(std::mt19937_64& rng, Index r, Index c, Index b, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Cube x(r, c, b);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

inline Matrix random_matrix(std::mt19937_64& rng, Index r, Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Smooth band-limited test cube with random phases per band.
inline Cube smooth_cube(std::mt19937_64& rng, Index r, Index c, Index b) {
  std::uniform_real_distribution<double> ph(0.0, 6.283185307179586), fr(0.5, 2.0);
  Cube x(r, c, b);
  for (Index k = 0; k < b; ++k) {
    const double p1 = ph(rng), p2 = ph(rng), f1 = fr(rng), f2 = fr(rng);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) {
        const double u = static_cast<double>(j) / static_cast<double>(c), v = static_cast<double>(i) / static_cast<double>(r);
        x(i, j, k) = 0.5 + 0.2 * std::sin(6.283185307179586 * f1 * u + p1) * std::cos(6.283185307179586 * f2 * v + p2) +
                     0.1 * std::cos(6.283185307179586 * (u + v) + p2);
      }
  }
  return x;
}

inline double rel_diff(const Cube& a, const Cube& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

}  // namespace rafnl::testing
