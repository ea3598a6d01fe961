#pragma once

// Random instance generators shared by the unit and acceptance tests.

#include <cstdint>
#include <random>

#include "screenkhorn/core.hpp"
#include "screenkhorn/screened_dual.hpp"
#include "screenkhorn/screening.hpp"

namespace testing_support {

using screenkhorn::CostMatrix;
using screenkhorn::DiscreteMeasure;
using screenkhorn::Index;
using screenkhorn::Matrix;
using screenkhorn::Vector;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  Index integer(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  DiscreteMeasure measure(Index n) {
    Vector w(n);
    for (Index i = 0; i < n; ++i) w[i] = uniform(0.05, 1.0);
    return DiscreteMeasure(w);
  }

  /// Euclidean distances between two random planar clouds, scaled so the largest entry is 1.
  CostMatrix cloud_cost(Index n, Index m) {
    Matrix x(n, 2), y(m, 2);
    for (Index i = 0; i < n; ++i) x.row(i) << normal(), normal();
    for (Index j = 0; j < m; ++j) y.row(j) << 1.5 + normal(), 1.5 + normal();
    Matrix c(n, m);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < m; ++j) c(i, j) = (x.row(i) - y.row(j)).norm();
    }
    return CostMatrix(c / c.maxCoeff());
  }

  /// Symmetric cost on n shared points (zero diagonal), scaled to max entry 1.
  CostMatrix symmetric_cost(Index n) {
    Matrix x(n, 2);
    for (Index i = 0; i < n; ++i) x.row(i) << normal(), normal();
    Matrix c(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) c(i, j) = (x.row(i) - x.row(j)).norm();
    }
    return CostMatrix(c / c.maxCoeff());
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Central difference of f along every coordinate of x.
template <class F>
Vector central_difference(F&& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Index k = 0; k < x.size(); ++k) {
    Vector xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Screened objective evaluated from scratch on full-length potentials with a
/// plain double loop: sum_ij e^{u_i} K_ij e^{v_j} - kappa <u, mu> - <v, nu>/kappa,
/// where the screened coordinates of (u, v) are pinned to their thresholds.
inline double naive_screened_objective(const screenkhorn::GibbsKernel& kernel, const DiscreteMeasure& mu,
                                       const DiscreteMeasure& nu, const screenkhorn::ScreeningResult& sr,
                                       const Vector& u_active, const Vector& v_active) {
  Vector u = Vector::Constant(kernel.rows(), std::log(sr.epsilon / sr.kappa));
  Vector v = Vector::Constant(kernel.cols(), std::log(sr.epsilon * sr.kappa));
  for (std::size_t k = 0; k < sr.active_rows.size(); ++k) u[sr.active_rows[k]] = u_active[static_cast<Index>(k)];
  for (std::size_t k = 0; k < sr.active_cols.size(); ++k) v[sr.active_cols[k]] = v_active[static_cast<Index>(k)];
  double total = 0.0;
  for (Index i = 0; i < kernel.rows(); ++i) {
    for (Index j = 0; j < kernel.cols(); ++j) total += std::exp(u[i]) * kernel(i, j) * std::exp(v[j]);
  }
  for (Index i = 0; i < kernel.rows(); ++i) total -= sr.kappa * mu[i] * u[i];
  for (Index j = 0; j < kernel.cols(); ++j) total -= nu[j] * v[j] / sr.kappa;
  return total;
}

}  // namespace testing_support
