#pragma once

#include "sagopt/core.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sagopt::testing {

// Central differences with h_j = 1e-5 * max(1, |x_j|).
template <class F>
Vector central_difference(F&& f, const Vector& x) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(x(j)));
    xp(j) = x(j) + h;
    const double fp = f(xp);
    xp(j) = x(j) - h;
    const double fm = f(xp);
    xp(j) = x(j);
    g(j) = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double rel_error(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

inline Vector random_point(std::mt19937_64& rng, Eigen::Index p, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector x(p);
  for (Eigen::Index j = 0; j < p; ++j) x(j) = u(rng);
  return x;
}

// Largest |a - b| / max(1, |b|) over entries.
inline double max_rel_diff(const Vector& a, const Vector& b) {
  double m = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    m = std::max(m, std::abs(a(j) - b(j)) / std::max(1.0, std::abs(b(j))));
  }
  return m;
}

}  // namespace sagopt::testing
