#pragma once

// Bound-constrained minimization of smooth convex functions and the
// Restricted Sinkhorn warm start for the screened dual.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "screenkhorn/core.hpp"
#include "screenkhorn/screened_dual.hpp"

namespace screenkhorn {

struct SolverConfig {
  /// Stop once max_i |projected gradient_i| <= pg_tolerance.
  double pg_tolerance = 1e-6;
  long max_iterations = 100000;
  long max_evaluations = 100000;
  /// Number of (s, y) correction pairs kept by the quasi-Newton model.
  int history_size = 10;

  void validate() const {
    if (!(pg_tolerance > 0.0) || max_iterations < 1 || max_evaluations < 1 || history_size < 1) {
      throw ParameterError("solver configuration values must all be positive");
    }
  }
};

enum class SolverStatus {
  kConverged,
  kMaxIterations,
  kMaxEvaluations,
  kLineSearchFailure,
};

inline const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::kConverged: return "converged";
    case SolverStatus::kMaxIterations: return "max_iterations";
    case SolverStatus::kMaxEvaluations: return "max_evaluations";
    case SolverStatus::kLineSearchFailure: return "line_search_failure";
  }
  return "unknown";
}

struct SolverReport {
  Vector solution;
  double objective_value = 0.0;
  double projected_gradient_inf_norm = 0.0;
  long iterations = 0;
  long evaluations = 0;
  bool converged = false;
  SolverStatus status = SolverStatus::kMaxIterations;
};

/// Gradient with the components that point out of the box zeroed: at a lower
/// bound a positive gradient is dropped, at an upper bound a negative one.
inline Vector projected_gradient(const Vector& x, const Vector& grad, const Vector& lower, const Vector& upper) {
  Vector pg = grad;
  for (Index i = 0; i < x.size(); ++i) {
    if ((x[i] <= lower[i] && grad[i] > 0.0) || (x[i] >= upper[i] && grad[i] < 0.0)) pg[i] = 0.0;
  }
  return pg;
}

inline Vector project_onto_box(const Vector& x, const Vector& lower, const Vector& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

namespace detail {

struct CorrectionPair {
  Vector s;
  Vector y;
};

// Two-loop recursion applied to the coordinates where `free` is 1; the others
// are left out of every inner product and come back as zero.
inline Vector lbfgs_direction(const Vector& grad, const Vector& free, const std::deque<CorrectionPair>& history) {
  Vector q = grad.cwiseProduct(free);
  const std::size_t count = history.size();
  std::vector<double> alpha(count, 0.0), rho(count, 0.0);
  double gamma = 1.0;
  bool have_gamma = false;
  for (std::size_t k = count; k-- > 0;) {
    const Vector s = history[k].s.cwiseProduct(free);
    const Vector y = history[k].y.cwiseProduct(free);
    const double sy = s.dot(y);
    if (!(sy > 0.0)) continue;
    rho[k] = 1.0 / sy;
    alpha[k] = rho[k] * s.dot(q);
    q -= alpha[k] * y;
    if (!have_gamma) {
      gamma = sy / y.squaredNorm();
      have_gamma = true;
    }
  }
  Vector r = gamma * q;
  for (std::size_t k = 0; k < count; ++k) {
    if (rho[k] == 0.0) continue;
    const Vector s = history[k].s.cwiseProduct(free);
    const Vector y = history[k].y.cwiseProduct(free);
    const double beta = rho[k] * y.dot(r);
    r += (alpha[k] - beta) * s;
  }
  return -r;
}

}  // namespace detail

/// Minimizes a smooth convex function over the box lower <= x <= upper.
///
/// `fg(x, grad)` returns f(x) and writes the gradient. Each iteration builds
/// an eps-active set (coordinates within eps_k of a bound whose gradient
/// pushes outward), takes steepest-descent components there and limited-memory
/// quasi-Newton components on the remaining free coordinates, then backtracks
/// along the projection arc x(a) = P(x + a d) until the Armijo condition
/// f(x(a)) <= f(x) + 1e-4 g^T (x(a) - x) holds, halving a each time. If the
/// quasi-Newton direction fails the line search the memory is cleared and a
/// projected gradient step is tried; if that also fails the report is returned
/// with status kLineSearchFailure.
template <class ValueAndGradient>
SolverReport minimize(ValueAndGradient&& fg, const Vector& lower, const Vector& upper, const Vector& start,
                      const SolverConfig& config = {}) {
  config.validate();
  detail::require_same(lower.size(), start.size(), "lower bound length");
  detail::require_same(upper.size(), start.size(), "upper bound length");
  for (Index i = 0; i < start.size(); ++i) {
    if (!(lower[i] <= upper[i])) {
      throw InfeasibleBoundsError("coordinate " + std::to_string(i) + " has an empty box", lower[i], upper[i]);
    }
  }

  constexpr double kArmijo = 1e-4;
  constexpr double kShrink = 0.5;
  constexpr int kMaxBacktracks = 60;
  constexpr double kActiveWidth = 1e-3;

  SolverReport report;
  Vector x = project_onto_box(start, lower, upper);
  Vector g(x.size());
  double f = fg(x, g);
  report.evaluations = 1;
  std::deque<detail::CorrectionPair> history;

  Vector x_new(x.size()), g_new(x.size());
  for (;;) {
    const Vector pg = projected_gradient(x, g, lower, upper);
    report.projected_gradient_inf_norm = pg.size() ? pg.lpNorm<Eigen::Infinity>() : 0.0;
    if (report.projected_gradient_inf_norm <= config.pg_tolerance) {
      report.converged = true;
      report.status = SolverStatus::kConverged;
      break;
    }
    if (report.iterations >= config.max_iterations) {
      report.status = SolverStatus::kMaxIterations;
      break;
    }
    if (report.evaluations >= config.max_evaluations) {
      report.status = SolverStatus::kMaxEvaluations;
      break;
    }

    const double width =
        std::min(kActiveWidth, (project_onto_box(x - g, lower, upper) - x).lpNorm<Eigen::Infinity>());
    Vector free = Vector::Ones(x.size());
    for (Index i = 0; i < x.size(); ++i) {
      if ((x[i] <= lower[i] + width && g[i] > 0.0) || (x[i] >= upper[i] - width && g[i] < 0.0)) free[i] = 0.0;
    }

    bool accepted = false;
    bool out_of_budget = false;
    bool tried_steepest = false;
    for (int attempt = 0; attempt < 2 && !accepted && !out_of_budget; ++attempt) {
      const bool use_memory = attempt == 0 && !history.empty();
      if (!use_memory && tried_steepest) break;
      tried_steepest = !use_memory;
      Vector d = -g;
      if (use_memory) {
        const Vector qn = detail::lbfgs_direction(g, free, history);
        if (qn.dot(g.cwiseProduct(free)) < 0.0) {
          d = qn - g.cwiseProduct(Vector::Ones(x.size()) - free);
        }
      }
      double step = 1.0;
      if (!use_memory) {
        // Unit-length first step when no curvature information is available.
        const double dn = d.lpNorm<Eigen::Infinity>();
        if (dn > 0.0) step = std::min(1.0, 1.0 / dn);
      }
      for (int bt = 0; bt < kMaxBacktracks; ++bt) {
        if (report.evaluations >= config.max_evaluations) {
          out_of_budget = true;
          break;
        }
        x_new = project_onto_box(x + step * d, lower, upper);
        const double decrease = g.dot(x_new - x);
        if (!(decrease < 0.0)) {
          step *= kShrink;
          continue;
        }
        double f_new;
        try {
          f_new = fg(x_new, g_new);
        } catch (const NumericRangeError&) {
          // Overshot into an overflow region; treat as a rejected trial.
          ++report.evaluations;
          step *= kShrink;
          continue;
        }
        ++report.evaluations;
        if (f_new <= f + kArmijo * decrease) {
          accepted = true;
          Vector s = x_new - x;
          Vector y = g_new - g;
          if (s.dot(y) > 1e-12 * y.squaredNorm()) {
            history.push_back({std::move(s), std::move(y)});
            if (static_cast<int>(history.size()) > config.history_size) history.pop_front();
          }
          x.swap(x_new);
          g.swap(g_new);
          f = f_new;
          break;
        }
        step *= kShrink;
      }
      if (!accepted) history.clear();
    }
    if (out_of_budget) {
      report.status = SolverStatus::kMaxEvaluations;
      break;
    }
    if (!accepted) {
      report.status = SolverStatus::kLineSearchFailure;
      break;
    }
    ++report.iterations;
  }

  report.solution = std::move(x);
  report.objective_value = f;
  return report;
}

/// Fixed scaling sweeps on the active block, used to warm-start the screened solve.
///
/// With f_u = eps kappa s and f_v = (eps/kappa) t, each of the `iters` sweeps does
///   b = nu_J ./ (kappa (K_IJ^T a + f_v)),   a = kappa mu_I ./ (K_IJ b + f_u).
/// Inputs and outputs are scaling vectors (a = e^u, b = e^v).
inline std::pair<Vector, Vector> restricted_sinkhorn(const ScreenedDualProblem& p, const Vector& a0,
                                                     const Vector& b0, int iters = 3) {
  detail::require_same(a0.size(), p.n_active(), "a0 length");
  detail::require_same(b0.size(), p.m_active(), "b0 length");
  if (!(a0.array() > 0.0).all() || !(b0.array() > 0.0).all() || !a0.allFinite() || !b0.allFinite()) {
    throw InputError("restricted_sinkhorn needs strictly positive finite starting scalings");
  }
  if (iters < 1) throw ParameterError("restricted_sinkhorn needs iters >= 1");
  const double kap = p.kappa();
  const Vector fu_bar = p.epsilon() * kap * p.row_cross();
  const Vector fv_bar = (p.epsilon() / kap) * p.col_cross();
  const Matrix& k = p.kernel_block();

  Vector a = a0, b = b0;
  for (int t = 0; t < iters; ++t) {
    const Vector fv = k.transpose() * a + fv_bar;
    b = p.nu_active().cwiseQuotient(kap * fv);
    const Vector fu = k * b + fu_bar;
    a = (kap * p.mu_active()).cwiseQuotient(fu);
  }
  if (!a.allFinite() || !b.allFinite() || !(a.array() > 0.0).all() || !(b.array() > 0.0).all()) {
    throw NumericRangeError("restricted_sinkhorn left the positive double range");
  }
  return {std::move(a), std::move(b)};
}

}  // namespace screenkhorn
