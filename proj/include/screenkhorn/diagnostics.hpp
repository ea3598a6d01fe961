#pragma once

// Metrics and computable certificates for screened solutions: marginal
// violations, the d_rho divergence and generalized Pinsker inequality, the
// explicit marginal-violation and screened-marginal-norm bounds, omega_kappa,
// and an independent projected-gradient oracle for small screened problems.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "screenkhorn/box_solver.hpp"
#include "screenkhorn/core.hpp"
#include "screenkhorn/screened_dual.hpp"
#include "screenkhorn/screenkhorn.hpp"

namespace screenkhorn {

/// An instantiated inequality `empirical <= bound`.
struct Certificate {
  std::string name;
  double empirical_value = 0.0;
  double bound_value = 0.0;
  bool satisfied = false;

  static Certificate make(std::string name, double empirical, double bound) {
    const bool ok = empirical <= bound * (1.0 + 1e-9) + 1e-12;
    return {std::move(name), empirical, bound, ok};
  }
};

struct MarginalViolations {
  double row_l1 = 0.0;  // ||mu - P 1||_1
  double col_l1 = 0.0;  // ||nu - P^T 1||_1
};

inline MarginalViolations marginal_violations(const Vector& row_marginal, const Vector& col_marginal,
                                              const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  detail::require_same(row_marginal.size(), mu.size(), "row marginal vs mu");
  detail::require_same(col_marginal.size(), nu.size(), "col marginal vs nu");
  return {(mu.weights() - row_marginal).lpNorm<1>(), (nu.weights() - col_marginal).lpNorm<1>()};
}

inline MarginalViolations marginal_violations(const TransportPlan& plan, const DiscreteMeasure& mu,
                                              const DiscreteMeasure& nu) {
  return marginal_violations(plan.row_marginal(), plan.col_marginal(), mu, nu);
}

/// d_rho(gamma, beta) = sum_i beta_i - gamma_i + gamma_i log(gamma_i / beta_i), >= 0.
inline double rho_distance(const Vector& gamma, const Vector& beta) {
  detail::require_same(gamma.size(), beta.size(), "rho_distance operand lengths");
  double total = 0.0;
  for (Index i = 0; i < gamma.size(); ++i) {
    const double a = gamma[i], b = beta[i];
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
      throw InputError("rho_distance needs strictly positive finite entries (index " + std::to_string(i) + ")");
    }
    total += b - a + a * std::log(a / b);
  }
  return total;
}

/// ||gamma - beta||_1 <= sqrt(7 (||gamma||_1 ^ ||beta||_1) d_rho(gamma, beta)).
inline Certificate pinsker_check(const Vector& gamma, const Vector& beta) {
  const double d = rho_distance(gamma, beta);
  const double mass = std::min(gamma.lpNorm<1>(), beta.lpNorm<1>());
  return Certificate::make("generalized_pinsker", (gamma - beta).lpNorm<1>(), std::sqrt(7.0 * mass * std::max(d, 0.0)));
}

/// c_z = z - log z - 1.
inline double c_z(double z) { return z - std::log(z) - 1.0; }

/// |1 - kappa| ||mu_sc||_1 + |1 - 1/kappa| ||nu_sc||_1 + |1 - kappa| + |1 - 1/kappa|.
inline double omega_kappa(double kappa, const Vector& row_marginal, const Vector& col_marginal) {
  const double a = std::abs(1.0 - kappa);
  const double b = std::abs(1.0 - 1.0 / kappa);
  return a * row_marginal.lpNorm<1>() + b * col_marginal.lpNorm<1>() + a + b;
}

inline double omega_kappa(const ScreenkhornResult& result) {
  return omega_kappa(result.screening.kappa, result.row_marginal, result.col_marginal);
}

/// Largest excursion of the free potentials (u_I, v_J) outside the computed box; zero means contained.
inline Certificate containment_certificate(const ScreenkhornResult& result) {
  double excess = 0.0;
  const BoxBounds& b = result.bounds;
  for (const Index i : result.screening.active_rows) {
    const double u = result.potentials.u[i];
    excess = std::max({excess, b.u_lower - u, u - b.u_upper});
  }
  for (const Index j : result.screening.active_cols) {
    const double v = result.potentials.v[j];
    excess = std::max({excess, b.v_lower - v, v - b.v_upper});
  }
  if (!std::isfinite(excess)) excess = std::numeric_limits<double>::infinity();
  return {"box_containment", excess, 0.0, excess <= 0.0};
}

/// Which form of the marginal-violation bound to instantiate.
enum class ViolationBound {
  /// Pinsker's factor 7 applied to the whole d_rho bound, as the derivation yields.
  kDerived,
  /// The closing display of the derivation, where the first term carries no factor 7.
  kAsDisplayed,
};

namespace detail {

// Everything the explicit bounds need, gathered from a converged result.
struct BoundInputs {
  double n, m, nb, mb;
  double eps, kappa, k_min;
  double mu_max, mu_min, nu_max, nu_min;  // over all atoms
  double mu_max_active, mu_min_active;    // over I
  double nu_max_active, nu_min_active;    // over J
  double mu_active_mass, nu_active_mass;  // ||mu_I||_1, ||nu_J||_1
};

inline BoundInputs gather(const ScreenkhornResult& result, const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (!result.converged()) {
    throw PreconditionError("certificates need a converged screened solution; solver status is " +
                            std::string(to_string(result.solver_report.status)));
  }
  const ScreeningResult& sr = result.screening;
  require_same(sr.n(), mu.size(), "screening rows vs mu");
  require_same(sr.m(), nu.size(), "screening cols vs nu");
  BoundInputs in{};
  in.n = static_cast<double>(sr.n());
  in.m = static_cast<double>(sr.m());
  in.nb = static_cast<double>(sr.active_rows.size());
  in.mb = static_cast<double>(sr.active_cols.size());
  in.eps = sr.epsilon;
  in.kappa = sr.kappa;
  in.k_min = result.k_min;
  in.mu_max = mu.weights().maxCoeff();
  in.mu_min = mu.weights().minCoeff();
  in.nu_max = nu.weights().maxCoeff();
  in.nu_min = nu.weights().minCoeff();
  in.mu_max_active = 0.0;
  in.mu_min_active = std::numeric_limits<double>::infinity();
  for (const Index i : sr.active_rows) {
    in.mu_max_active = std::max(in.mu_max_active, mu[i]);
    in.mu_min_active = std::min(in.mu_min_active, mu[i]);
    in.mu_active_mass += mu[i];
  }
  in.nu_max_active = 0.0;
  in.nu_min_active = std::numeric_limits<double>::infinity();
  for (const Index j : sr.active_cols) {
    in.nu_max_active = std::max(in.nu_max_active, nu[j]);
    in.nu_min_active = std::min(in.nu_min_active, nu[j]);
    in.nu_active_mass += nu[j];
  }
  return in;
}

}  // namespace detail

/// Explicit bound on ||mu - mu_sc||_1^2 obtained by combining d_rho(mu, mu_sc)
/// with the generalized Pinsker inequality:
///
///   7 [ n_b c_kappa max mu
///       + (n - n_b) ( m_b max nu / (n kappa K_min) + (m - m_b) eps^2 - min mu
///                     + max mu log( kappa (n - n_b + 1) max mu / (m_b K_min min_J nu)
///                                   + n_b kappa^2 (max mu)^2 / (m m_b eps^2 K_min^2 min_J nu) ) ) ]
///
/// The bracket bounds d_rho(mu, mu_sc); ||mu||_1 ^ ||mu_sc||_1 <= 1 is dropped.
inline Certificate violation_certificate_rows(const ScreenkhornResult& result, const DiscreteMeasure& mu,
                                              const DiscreteMeasure& nu,
                                              ViolationBound form = ViolationBound::kDerived) {
  const detail::BoundInputs in = detail::gather(result, mu, nu);
  const double kmin = in.k_min, eps2 = in.eps * in.eps, kap = in.kappa;
  const double screened = in.n - in.nb;
  double tail = 0.0;
  if (screened > 0.0) {
    const double log_arg =
        kap * (screened + 1.0) * in.mu_max / (in.mb * kmin * in.nu_min_active) +
        in.nb * kap * kap * in.mu_max * in.mu_max / (in.m * in.mb * eps2 * kmin * kmin * in.nu_min_active);
    tail = screened * (in.mb * in.nu_max / (in.n * kap * kmin) + (in.m - in.mb) * eps2 - in.mu_min +
                       in.mu_max * std::log(log_arg));
  }
  const double head = in.nb * c_z(kap) * in.mu_max;
  const double bound = form == ViolationBound::kDerived ? 7.0 * (head + tail) : head + 7.0 * tail;
  const double violation = (mu.weights() - result.row_marginal).lpNorm<1>();
  return Certificate::make("marginal_violation_rows", violation * violation, bound);
}

/// Column counterpart of violation_certificate_rows, with kappa replaced by 1/kappa:
///
///   7 [ m_b c_{1/kappa} max nu
///       + (m - m_b) ( n_b kappa max mu / (m K_min) + (n - n_b) eps^2 - min nu
///                     + max nu log( (m - m_b + 1) max nu / (n_b kappa K_min min_I mu)
///                                   + m_b (max nu)^2 / (n n_b eps^2 kappa^2 K_min^2 min_I mu) ) ) ]
inline Certificate violation_certificate_cols(const ScreenkhornResult& result, const DiscreteMeasure& mu,
                                              const DiscreteMeasure& nu,
                                              ViolationBound form = ViolationBound::kDerived) {
  const detail::BoundInputs in = detail::gather(result, mu, nu);
  const double kmin = in.k_min, eps2 = in.eps * in.eps, kap = in.kappa;
  const double screened = in.m - in.mb;
  double tail = 0.0;
  if (screened > 0.0) {
    const double log_arg =
        (screened + 1.0) * in.nu_max / (in.nb * kap * kmin * in.mu_min_active) +
        in.mb * in.nu_max * in.nu_max / (in.n * in.nb * eps2 * kap * kap * kmin * kmin * in.mu_min_active);
    tail = screened * (in.nb * kap * in.mu_max / (in.m * kmin) + (in.n - in.nb) * eps2 - in.nu_min +
                       in.nu_max * std::log(log_arg));
  }
  const double head = in.mb * c_z(1.0 / kap) * in.nu_max;
  const double bound = form == ViolationBound::kDerived ? 7.0 * (head + tail) : head + 7.0 * tail;
  const double violation = (nu.weights() - result.col_marginal).lpNorm<1>();
  return Certificate::make("marginal_violation_cols", violation * violation, bound);
}

/// Bounds on the l1 mass of the screened marginals:
///   ||mu_sc||_1 <= kappa ||mu_I||_1 + (n - n_b) ( m_b max_J nu / (n kappa K_min) + (m - m_b) eps^2 )
///   ||nu_sc||_1 <= ||nu_J||_1 / kappa + (m - m_b) ( n_b kappa max_I mu / (m K_min) + (n - n_b) eps^2 )
///
/// Both rest on mu_sc_i = kappa mu_i on I and nu_sc_j = nu_j / kappa on J, which
/// holds for free coordinates at an exact minimizer. The returned solution is
/// stationary only up to the projected-gradient tolerance: on I the gradient is
/// exactly mu_sc_i - kappa mu_i, so each bound gets n_b (resp. m_b) times the final
/// projected-gradient inf-norm added. Coordinates resting on a lower bound with
/// an inward gradient are not covered by that allowance.
inline std::pair<Certificate, Certificate> marginal_norm_certificates(const ScreenkhornResult& result,
                                                                      const DiscreteMeasure& mu,
                                                                      const DiscreteMeasure& nu) {
  const detail::BoundInputs in = detail::gather(result, mu, nu);
  const double eps2 = in.eps * in.eps, kap = in.kappa, kmin = in.k_min;
  const double pg = result.solver_report.projected_gradient_inf_norm;
  const double row_bound =
      kap * in.mu_active_mass +
      (in.n - in.nb) * (in.mb * in.nu_max_active / (in.n * kap * kmin) + (in.m - in.mb) * eps2) + in.nb * pg;
  // The column gradient is nu_sc_j - nu_j / kappa.
  const double col_bound =
      in.nu_active_mass / kap +
      (in.m - in.mb) * (in.nb * kap * in.mu_max_active / (in.m * kmin) + (in.n - in.nb) * eps2) + in.mb * pg;
  return {Certificate::make("screened_row_mass", result.row_marginal.lpNorm<1>(), row_bound),
          Certificate::make("screened_col_mass", result.col_marginal.lpNorm<1>(), col_bound)};
}

/// R = ||C||_inf / eta + log((n v m)^2 / (n m c_{mu nu}^{7/2})) with c_{mu nu} = min_I mu ^ min_J nu.
inline double objective_gap_scale(const ScreenkhornResult& result, const CostMatrix& cost, double eta,
                                  const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  const detail::BoundInputs in = detail::gather(result, mu, nu);
  const double c_mu_nu = std::min(in.mu_min_active, in.nu_min_active);
  const double big = std::max(in.n, in.m);
  return cost.max_entry() / eta + std::log(big * big / (in.n * in.m * std::pow(c_mu_nu, 3.5)));
}

/// R (||mu - mu_sc||_1 + ||nu - nu_sc||_1 + omega_kappa). Reported only; the constant in front is unknown.
inline double objective_gap_indicator(const ScreenkhornResult& result, const CostMatrix& cost, double eta,
                                      const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  const MarginalViolations viol = marginal_violations(result.row_marginal, result.col_marginal, mu, nu);
  return objective_gap_scale(result, cost, eta, mu, nu) * (viol.row_l1 + viol.col_l1 + omega_kappa(result));
}

struct OracleOptions {
  double tolerance = 1e-8;
  long max_iterations = 10'000'000;
  static constexpr Index kMaxDimension = 64;
};

/// Projected gradient descent on a small screened problem, used as ground truth in tests.
///
/// Each step tries a Barzilai-Borwein length (1 on the first step), projects
/// x - a g onto the box and backtracks by halving until
/// f(x_new) <= f(x) + 1e-4 g^T (x_new - x). Runs until the projected gradient
/// inf-norm is below `tolerance`; hitting the iteration cap throws OracleFailure.
/// `upper` may hold +infinity. Shares no code with minimize().
inline Vector oracle_solve(const ScreenedDualProblem& p, const Vector& lower, const Vector& upper,
                           const OracleOptions& options = {}) {
  const Index dim = p.dimension();
  if (dim > OracleOptions::kMaxDimension) {
    throw PreconditionError("oracle_solve is limited to |I| + |J| <= 64, got " + std::to_string(dim));
  }
  detail::require_same(lower.size(), dim, "oracle lower bound length");
  detail::require_same(upper.size(), dim, "oracle upper bound length");

  auto clamp = [&](const Vector& z) {
    Vector out = z;
    for (Index i = 0; i < dim; ++i) out[i] = std::min(std::max(z[i], lower[i]), upper[i]);
    return out;
  };
  auto stationarity = [&](const Vector& x, const Vector& g) {
    double worst = 0.0;
    for (Index i = 0; i < dim; ++i) {
      const bool blocked = (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0);
      if (!blocked) worst = std::max(worst, std::abs(g[i]));
    }
    return worst;
  };

  Vector x(dim);
  for (Index i = 0; i < dim; ++i) x[i] = std::isfinite(lower[i]) ? lower[i] : std::min(0.0, upper[i]);
  Vector g(dim), g_new(dim);
  double f = p.value_and_gradient(x, g);
  double step = 1.0;
  for (long it = 0; it < options.max_iterations; ++it) {
    if (stationarity(x, g) < options.tolerance) return x;
    Vector x_new;
    double f_new = 0.0;
    bool moved = false;
    for (int bt = 0; bt < 200; ++bt) {
      x_new = clamp(x - step * g);
      const double decrease = g.dot(x_new - x);
      if (decrease >= 0.0) break;
      bool finite = true;
      try {
        f_new = p.value_and_gradient(x_new, g_new);
      } catch (const NumericRangeError&) {
        finite = false;
      }
      if (finite && f_new <= f + 1e-4 * decrease) {
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) {
      throw OracleFailure("oracle_solve: no descent possible at projected-gradient norm " +
                          std::to_string(stationarity(x, g)));
    }
    const Vector s = x_new - x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    step = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-12, 1e12) : 1.0;
    x = std::move(x_new);
    g = g_new;
    f = f_new;
  }
  throw OracleFailure("oracle_solve: iteration cap reached at projected-gradient norm " +
                      std::to_string(stationarity(x, g)));
}

}  // namespace screenkhorn
