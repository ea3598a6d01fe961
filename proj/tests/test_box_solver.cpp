#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "screenkhorn/box_solver.hpp"
#include "screenkhorn/diagnostics.hpp"
#include "screenkhorn/screenkhorn.hpp"
#include "support.hpp"

namespace sk = screenkhorn;
using sk::Index;
using sk::Matrix;
using sk::Vector;

namespace {

auto quadratic(const Vector& center) {
  return [center](const Vector& x, Vector& g) {
    g = 2.0 * (x - center);
    return (x - center).squaredNorm();
  };
}

}  // namespace

TEST(ProjectedGradient, ZeroesOutwardComponentsOnly) {
  Vector x(4), g(4), lo = Vector::Zero(4), hi = Vector::Ones(4);
  x << 0.0, 0.0, 1.0, 0.5;
  g << 2.0, -2.0, -3.0, 4.0;
  Vector want(4);
  want << 0.0, -2.0, 0.0, 4.0;
  EXPECT_EQ(sk::projected_gradient(x, g, lo, hi), want);
}

TEST(Minimize, QuadraticWithActiveUpperBound) {
  const auto r = sk::minimize(quadratic(Vector::Constant(1, 2.0)), Vector::Zero(1), Vector::Ones(1),
                              Vector::Constant(1, 0.3));
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.solution[0], 1.0);
  EXPECT_EQ(r.projected_gradient_inf_norm, 0.0);
}

TEST(Minimize, InteriorQuadratic) {
  Vector c(3);
  c << 0.2, -0.7, 0.5;
  sk::SolverConfig cfg;
  cfg.pg_tolerance = 1e-10;
  const auto r = sk::minimize(quadratic(c), Vector::Constant(3, -1.0), Vector::Ones(3), Vector::Zero(3), cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.solution - c).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(Minimize, IllConditionedQuadraticWithMixedActiveSet) {
  // f = sum_i w_i (x_i - c_i)^2 with weights spanning four decades.
  const Index n = 12;
  Vector w(n), c(n);
  for (Index i = 0; i < n; ++i) {
    w[i] = std::pow(10.0, 4.0 * static_cast<double>(i) / (n - 1));
    c[i] = (i % 3 == 0) ? 2.0 : (i % 3 == 1 ? -2.0 : 0.25);
  }
  auto fg = [&](const Vector& x, Vector& g) {
    g = 2.0 * w.cwiseProduct(x - c);
    return w.dot((x - c).cwiseAbs2());
  };
  sk::SolverConfig cfg;
  cfg.pg_tolerance = 1e-9;
  const auto r = sk::minimize(fg, Vector::Constant(n, -1.0), Vector::Ones(n), Vector::Zero(n), cfg);
  ASSERT_TRUE(r.converged);
  for (Index i = 0; i < n; ++i) {
    const double want = std::clamp(c[i], -1.0, 1.0);
    EXPECT_NEAR(r.solution[i], want, 1e-9) << i;
  }
}

TEST(Minimize, IteratesStayFeasible) {
  Vector c(2);
  c << 5.0, -5.0;
  const Vector lo = Vector::Constant(2, -1.0), hi = Vector::Constant(2, 1.0);
  auto fg = [&](const Vector& x, Vector& g) {
    EXPECT_TRUE((x.array() >= lo.array()).all() && (x.array() <= hi.array()).all());
    g = 2.0 * (x - c);
    return (x - c).squaredNorm();
  };
  EXPECT_TRUE(sk::minimize(fg, lo, hi, Vector::Constant(2, 3.0)).converged);
}

TEST(Minimize, ReportsCapsAndValidatesInput) {
  Vector c(5);
  c << 0.1, 0.2, 0.3, 0.4, 0.5;
  sk::SolverConfig cfg;
  cfg.max_iterations = 1;
  cfg.pg_tolerance = 1e-14;
  auto fg = [&](const Vector& x, Vector& g) {
    const Vector d = x - c;
    g = 4.0 * d.array().cube().matrix();
    return d.array().pow(4).sum();
  };
  const auto r = sk::minimize(fg, Vector::Constant(5, -1.0), Vector::Ones(5), Vector::Zero(5), cfg);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.status, sk::SolverStatus::kMaxIterations);
  EXPECT_EQ(r.iterations, 1);

  cfg = {};
  cfg.max_evaluations = 2;
  cfg.pg_tolerance = 1e-14;
  const auto r2 = sk::minimize(fg, Vector::Constant(5, -1.0), Vector::Ones(5), Vector::Zero(5), cfg);
  EXPECT_EQ(r2.status, sk::SolverStatus::kMaxEvaluations);

  EXPECT_THROW(sk::minimize(fg, Vector::Ones(5), Vector::Zero(5), Vector::Zero(5)), sk::InfeasibleBoundsError);
  EXPECT_THROW(sk::minimize(fg, Vector::Zero(4), Vector::Ones(5), Vector::Zero(5)), sk::ShapeError);
  cfg = {};
  cfg.pg_tolerance = 0.0;
  EXPECT_THROW(sk::minimize(fg, Vector::Zero(5), Vector::Ones(5), Vector::Zero(5), cfg), sk::ParameterError);
}

TEST(Minimize, ScreenedDualMatchesOracle) {
  testing_support::Rng rng(97);
  int compared = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto mu = rng.measure(6), nu = rng.measure(6);
    const auto k = sk::gibbs_kernel(rng.cloud_cost(6, 6), rng.uniform(0.5, 2.0));
    const auto sr = sk::screen(mu, nu, k, sk::Budget(rng.integer(1, 6), rng.integer(1, 6)));
    const auto p = sk::build_problem(mu, nu, k, sr);
    const auto box = sk::box_bounds(p);
    const auto [lo, hi] = box.expand(p.n_active(), p.m_active());
    sk::SolverConfig cfg;
    cfg.pg_tolerance = 1e-9;
    const auto r = sk::minimize([&](const Vector& x, Vector& g) { return p.value_and_gradient(x, g); }, lo, hi,
                                sk::warm_start(p, box), cfg);
    ASSERT_TRUE(r.converged);
    const Vector x = sk::oracle_solve(p, lo, hi);
    Vector g;
    EXPECT_NEAR(r.objective_value, p.value_and_gradient(x, g), 1e-6) << "trial " << trial;
    ++compared;
  }
  EXPECT_EQ(compared, 20);
}

TEST(RestrictedSinkhorn, ZeroCostHandIteration) {
  // C = 0, mu = nu = (1/2, 1/2), full budget, kappa = 1, started from a0 = b0 = sqrt(1/2):
  // b = 0.5 / (2 sqrt(1/2)) = sqrt(1/2)/2 and a = 0.5 / (2 b) = sqrt(1/2), then fixed.
  const auto k = sk::gibbs_kernel(sk::CostMatrix(Matrix::Zero(2, 2)), 1.0);
  const auto u2 = sk::DiscreteMeasure::uniform(2);
  const auto p = sk::build_problem(u2, u2, k, sk::screen(u2, u2, k, sk::Budget(2, 2)));
  const double s = std::sqrt(0.5);
  for (int iters = 1; iters <= 3; ++iters) {
    const auto [a, b] = sk::restricted_sinkhorn(p, Vector::Constant(2, s), Vector::Constant(2, s), iters);
    EXPECT_NEAR(b[0], s / 2.0, 1e-15);
    EXPECT_NEAR(b[1], s / 2.0, 1e-15);
    EXPECT_NEAR(a[0], s, 1e-15);
    EXPECT_NEAR(a[1], s, 1e-15);
    EXPECT_NEAR(a[0] * b[1], 0.25, 1e-15);
  }
}

TEST(RestrictedSinkhorn, FullBudgetUnitKappaIsPlainSinkhorn) {
  testing_support::Rng rng(101);
  const Index n = 6;
  const auto mu = rng.measure(n);
  const auto k = sk::gibbs_kernel(rng.symmetric_cost(n), 1.0);
  const auto sr = sk::screen(mu, mu, k, sk::Budget(n, n));
  ASSERT_EQ(sr.kappa, 1.0);
  const auto p = sk::build_problem(mu, mu, k, sr);
  const Vector a0 = Vector::Ones(n);
  const auto [a, b] = sk::restricted_sinkhorn(p, a0, a0, 3);
  Vector ra = a0, rb;
  for (int t = 0; t < 3; ++t) {
    rb = mu.weights().cwiseQuotient(k.entries().transpose() * ra);
    ra = mu.weights().cwiseQuotient(k.entries() * rb);
  }
  EXPECT_LT((a - ra).lpNorm<Eigen::Infinity>(), 1e-14);
  EXPECT_LT((b - rb).lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(RestrictedSinkhorn, PositiveOutputAndInputChecks) {
  testing_support::Rng rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = rng.integer(2, 10), m = rng.integer(2, 10);
    const auto mu = rng.measure(n), nu = rng.measure(m);
    const auto k = sk::gibbs_kernel(rng.cloud_cost(n, m), 1.0);
    const auto p = sk::build_problem(mu, nu, k, sk::screen(mu, nu, k, sk::Budget(rng.integer(1, n), rng.integer(1, m))));
    const auto [a, b] = sk::restricted_sinkhorn(p, Vector::Constant(p.n_active(), p.epsilon() / p.kappa()),
                                                Vector::Constant(p.m_active(), p.epsilon() * p.kappa()));
    EXPECT_TRUE((a.array() > 0.0).all());
    EXPECT_TRUE((b.array() > 0.0).all());
    EXPECT_THROW(sk::restricted_sinkhorn(p, Vector::Zero(p.n_active()), Vector::Ones(p.m_active())), sk::InputError);
  }
}

TEST(BoxBounds, WholeLineKminKeepsTheBoxNonEmpty) {
  // One active row on a zero-diagonal symmetric cost makes the I x J kernel
  // minimum 1, which pulls u_upper below the floor log(eps / kappa).
  testing_support::Rng rng(191);
  int empty_default = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = rng.integer(4, 30);
    const auto mu = rng.measure(n);
    const auto k = sk::gibbs_kernel(rng.symmetric_cost(n), rng.uniform(0.5, 2.0));
    const auto p = sk::build_problem(mu, mu, k, sk::screen(mu, mu, k, sk::Budget(1, 1)));
    EXPECT_EQ(p.k_min(), 1.0);
    EXPECT_LE(p.k_min_rows(), p.k_min());
    EXPECT_LE(p.k_min_cols(), p.k_min());
    try {
      sk::box_bounds(p);
    } catch (const sk::InfeasibleBoundsError&) {
      ++empty_default;
    }
    const auto box = sk::box_bounds(p, sk::BoundsVariant::kWholeLineKmin);
    EXPECT_LE(std::log(p.epsilon() / p.kappa()), box.u_upper);
    EXPECT_LE(std::log(p.epsilon() * p.kappa()), box.v_upper);
    // The box has to contain the minimizer over the floors alone.
    Vector lo(2), hi = Vector::Constant(2, std::numeric_limits<double>::infinity());
    lo << std::log(p.epsilon() / p.kappa()), std::log(p.epsilon() * p.kappa());
    const Vector x = sk::oracle_solve(p, lo, hi);
    EXPECT_LE(x[0], box.u_upper + 1e-9);
    EXPECT_LE(x[1], box.v_upper + 1e-9);
    EXPECT_GE(x[0], box.u_lower - 1e-9);
    EXPECT_GE(x[1], box.v_lower - 1e-9);
  }
  EXPECT_GT(empty_default, 0);
}
