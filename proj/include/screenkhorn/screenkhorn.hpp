#pragma once

// End-to-end Screenkhorn: screening, box bounds, Restricted Sinkhorn warm
// start, bound-constrained solve on (u_I, v_J), and reassembly of the full
// potentials and the screened plan.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <utility>

#include "screenkhorn/box_solver.hpp"
#include "screenkhorn/core.hpp"
#include "screenkhorn/screened_dual.hpp"
#include "screenkhorn/screening.hpp"

namespace screenkhorn {

struct ScreenkhornOptions {
  SolverConfig solver;
  BoundsVariant bounds = BoundsVariant::kAlgorithm;
  int restricted_sinkhorn_iters = 3;
  /// When false only the marginals of B(u, v) are computed, not the n x m plan.
  bool materialize_plan = true;
};

struct ScreenkhornTimings {
  double kernel = 0.0;     // Gibbs kernel construction (zero when a kernel is passed in)
  double screening = 0.0;  // step 1: ratios, (eps, kappa), active sets, restricted blocks, bounds
  double solve = 0.0;      // step 2: warm start and bound-constrained solve
  double total = 0.0;      // kernel + screening + solve; plan assembly excluded
};

struct ScreenkhornResult {
  /// Full-length potentials; screened coordinates hold log(eps/kappa) and log(eps kappa) exactly.
  DualPotentials potentials;
  /// B(u_sc, v_sc); empty when materialize_plan is off.
  std::optional<TransportPlan> plan;
  /// mu_sc = B 1_m and nu_sc = B^T 1_n.
  Vector row_marginal;
  Vector col_marginal;
  ScreeningResult screening;
  BoxBounds bounds;
  /// Restricted kernel minimum K_min over I x J.
  double k_min = 0.0;
  SolverReport solver_report;
  ScreenkhornTimings timings;

  bool converged() const { return solver_report.converged; }
  double wall_time() const { return timings.total; }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Re-throws the in-flight library error with the failing step prefixed, keeping its type.
[[noreturn]] inline void rethrow_with_step(const std::string& step) {
  const std::string prefix = "screenkhorn " + step + ": ";
  try {
    throw;
  } catch (const InfeasibleBoundsError& e) {
    throw InfeasibleBoundsError(prefix + e.what(), e.lower(), e.upper());
  } catch (const DegenerateScreeningError& e) {
    throw DegenerateScreeningError(prefix + e.what());
  } catch (const NumericRangeError& e) {
    throw NumericRangeError(prefix + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(prefix + e.what());
  } catch (const ParameterError& e) {
    throw ParameterError(prefix + e.what());
  } catch (const InputError& e) {
    throw InputError(prefix + e.what());
  }
}

}  // namespace detail

/// Initial point for the bounded solve: Restricted Sinkhorn from a = eps/kappa, b = eps kappa,
/// mapped to the log domain and clamped into the box.
inline Vector warm_start(const ScreenedDualProblem& p, const BoxBounds& box, int iters = 3) {
  const Vector a0 = Vector::Constant(p.n_active(), p.epsilon() / p.kappa());
  const Vector b0 = Vector::Constant(p.m_active(), p.epsilon() * p.kappa());
  const auto [a, b] = restricted_sinkhorn(p, a0, b0, iters);
  Vector theta(p.dimension());
  theta << a.array().log().matrix(), b.array().log().matrix();
  const auto [lower, upper] = box.expand(p.n_active(), p.m_active());
  return project_onto_box(theta, lower, upper);
}

/// Screenkhorn on a precomputed Gibbs kernel.
inline ScreenkhornResult screenkhorn(const GibbsKernel& kernel, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                     const Budget& budget, const ScreenkhornOptions& options = {}) {
  const auto t0 = detail::Clock::now();

  std::optional<ScreenedDualProblem> problem;
  BoxBounds box{};
  ScreeningResult sr;
  try {
    sr = screen(mu, nu, kernel, budget);
    problem.emplace(build_problem(mu, nu, kernel, sr));
    box = box_bounds(*problem, options.bounds);
  } catch (const Error&) {
    detail::rethrow_with_step("step 1 (screening)");
  }
  const double screening_time = detail::seconds_since(t0);

  const auto t1 = detail::Clock::now();
  SolverReport report;
  try {
    const Vector start = warm_start(*problem, box, options.restricted_sinkhorn_iters);
    const auto [lower, upper] = box.expand(problem->n_active(), problem->m_active());
    const ScreenedDualProblem& p = *problem;
    report = minimize([&p](const Vector& theta, Vector& grad) { return p.value_and_gradient(theta, grad); }, lower,
                      upper, start, options.solver);
  } catch (const Error&) {
    detail::rethrow_with_step("step 2 (bounded solve)");
  }
  const double solve_time = detail::seconds_since(t1);

  const Vector& theta = report.solution;
  DualPotentials pot = problem->expand(theta.head(problem->n_active()), theta.tail(problem->m_active()));

  ScreenkhornResult result{std::move(pot), std::nullopt, Vector(), Vector(), std::move(sr), box,
                           problem->k_min(), std::move(report), {}};
  result.timings.screening = screening_time;
  result.timings.solve = solve_time;
  result.timings.total = screening_time + solve_time;
  try {
    if (options.materialize_plan) {
      result.plan.emplace(plan_from_potentials(result.potentials, kernel));
      result.row_marginal = result.plan->row_marginal();
      result.col_marginal = result.plan->col_marginal();
    } else {
      std::tie(result.row_marginal, result.col_marginal) = plan_marginals(result.potentials, kernel);
    }
  } catch (const Error&) {
    detail::rethrow_with_step("plan assembly");
  }
  return result;
}

/// Screenkhorn(C, eta, mu, nu, n_b, m_b). Timings include building the Gibbs kernel.
inline ScreenkhornResult screenkhorn(const CostMatrix& cost, double eta, const DiscreteMeasure& mu,
                                     const DiscreteMeasure& nu, const Budget& budget,
                                     const ScreenkhornOptions& options = {}) {
  const auto t0 = detail::Clock::now();
  std::optional<GibbsKernel> kernel;
  try {
    kernel.emplace(gibbs_kernel(cost, eta));
  } catch (const Error&) {
    detail::rethrow_with_step("kernel");
  }
  const double kernel_time = detail::seconds_since(t0);
  ScreenkhornResult result = screenkhorn(*kernel, mu, nu, budget, options);
  result.timings.kernel = kernel_time;
  result.timings.total += kernel_time;
  return result;
}

/// n_b = max(1, round(factor n)), m_b = max(1, round(factor m)) for factor in (0, 1].
inline Budget decimation_to_budget(Index n, Index m, double factor) {
  if (!(factor > 0.0) || !(factor <= 1.0)) {
    throw ParameterError("budget factor must lie in (0, 1], got " + std::to_string(factor));
  }
  if (n < 1 || m < 1) throw ParameterError("problem sizes must be >= 1");
  const auto scaled = [factor](Index size) {
    return std::max<Index>(1, static_cast<Index>(std::llround(factor * static_cast<double>(size))));
  };
  return Budget(scaled(n), scaled(m));
}

}  // namespace screenkhorn
