#pragma once

// The screened dual problem: the (eps, kappa)-constrained Sinkhorn dual with
// every screened coordinate fixed at its threshold, restricted to the free
// variables (u_I, v_J), plus the box bounds that enclose its minimizer.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "screenkhorn/core.hpp"
#include "screenkhorn/screening.hpp"

namespace screenkhorn {

/// Psi_{eps,kappa}(u, v) = (e^u)^T K_IJ e^v + eps kappa (e^u)^T s + (eps/kappa) t^T e^v
///                         - kappa mu_I^T u - kappa^{-1} nu_J^T v + Xi
///
/// where s_i = sum_{j not in J} K_ij, t_j = sum_{i not in I} K_ij and
/// Xi = eps^2 sum_{I^c x J^c} K_ij - kappa log(eps/kappa) sum_{I^c} mu_i
///      - kappa^{-1} log(eps kappa) sum_{J^c} nu_j.
///
/// Immutable once built; evaluation is reentrant.
class ScreenedDualProblem {
 public:
  const Matrix& kernel_block() const { return kernel_block_; }
  const Vector& row_cross() const { return row_cross_; }
  const Vector& col_cross() const { return col_cross_; }
  double xi_const() const { return xi_const_; }
  double epsilon() const { return screening_.epsilon; }
  double kappa() const { return screening_.kappa; }
  const Vector& mu_active() const { return mu_active_; }
  const Vector& nu_active() const { return nu_active_; }
  double k_min() const { return k_min_; }
  /// Kernel minimum over the whole active rows, I x [m].
  double k_min_rows() const { return k_min_rows_; }
  /// Kernel minimum over the whole active columns, [n] x J.
  double k_min_cols() const { return k_min_cols_; }
  Index n() const { return screening_.n(); }
  Index m() const { return screening_.m(); }
  Index n_active() const { return kernel_block_.rows(); }
  Index m_active() const { return kernel_block_.cols(); }
  Index dimension() const { return n_active() + m_active(); }
  const ScreeningResult& screening() const { return screening_; }

  double objective(const Vector& u, const Vector& v) const {
    check_lengths(u, v);
    const Vector a = detail::checked_exp(u, "u_I");
    const Vector b = detail::checked_exp(v, "v_J");
    const double ek = epsilon() * kappa();
    const double e_over_k = epsilon() / kappa();
    const Vector kb = kernel_block_ * b;
    const double value = a.dot(kb + ek * row_cross_) + e_over_k * col_cross_.dot(b) - kappa() * mu_active_.dot(u) -
                         nu_active_.dot(v) / kappa() + xi_const_;
    if (!std::isfinite(value)) throw NumericRangeError("screened objective overflows double range");
    return value;
  }

  std::pair<Vector, Vector> gradient(const Vector& u, const Vector& v) const {
    Vector gu, gv;
    value_and_gradient(u, v, gu, gv);
    return {std::move(gu), std::move(gv)};
  }

  /// Objective and gradient in one pass (two block mat-vecs).
  double value_and_gradient(const Vector& u, const Vector& v, Vector& grad_u, Vector& grad_v) const {
    check_lengths(u, v);
    const Vector a = detail::checked_exp(u, "u_I");
    const Vector b = detail::checked_exp(v, "v_J");
    const double ek = epsilon() * kappa();
    const double e_over_k = epsilon() / kappa();
    const Vector fu = kernel_block_ * b + ek * row_cross_;
    const Vector fv = kernel_block_.transpose() * a + e_over_k * col_cross_;
    grad_u = a.cwiseProduct(fu) - kappa() * mu_active_;
    grad_v = b.cwiseProduct(fv) - nu_active_ / kappa();
    const double value = a.dot(fu) + e_over_k * col_cross_.dot(b) - kappa() * mu_active_.dot(u) -
                         nu_active_.dot(v) / kappa() + xi_const_;
    if (!std::isfinite(value) || !grad_u.allFinite() || !grad_v.allFinite()) {
      throw NumericRangeError("screened objective or gradient overflows double range");
    }
    return value;
  }

  /// Same as value_and_gradient on the stacked variable theta = (u_I, v_J).
  double value_and_gradient(const Vector& theta, Vector& grad) const {
    detail::require_same(theta.size(), dimension(), "theta length");
    Vector gu, gv;
    const double value =
        value_and_gradient(theta.head(n_active()), theta.tail(m_active()), gu, gv);
    grad.resize(dimension());
    grad << gu, gv;
    return value;
  }

  /// Full-length potentials: free coordinates from (u_I, v_J), screened ones at log(eps/kappa), log(eps kappa).
  DualPotentials expand(const Vector& u_active, const Vector& v_active) const {
    check_lengths(u_active, v_active);
    Vector u = Vector::Constant(n(), screening_.u_screened());
    Vector v = Vector::Constant(m(), screening_.v_screened());
    for (Index k = 0; k < n_active(); ++k) u[screening_.active_rows[static_cast<std::size_t>(k)]] = u_active[k];
    for (Index k = 0; k < m_active(); ++k) v[screening_.active_cols[static_cast<std::size_t>(k)]] = v_active[k];
    return DualPotentials(std::move(u), std::move(v));
  }

 private:
  friend ScreenedDualProblem build_problem(const DiscreteMeasure&, const DiscreteMeasure&, const GibbsKernel&,
                                           const ScreeningResult&);
  ScreenedDualProblem() = default;

  void check_lengths(const Vector& u, const Vector& v) const {
    detail::require_same(u.size(), n_active(), "u_I length");
    detail::require_same(v.size(), m_active(), "v_J length");
  }

  Matrix kernel_block_;
  Vector row_cross_;
  Vector col_cross_;
  double xi_const_ = 0.0;
  Vector mu_active_;
  Vector nu_active_;
  double k_min_ = 0.0;
  double k_min_rows_ = 0.0;
  double k_min_cols_ = 0.0;
  ScreeningResult screening_;
};

/// Extracts K_IJ, the cross sums s, t, the constant Xi and K_min in one pass over K.
inline ScreenedDualProblem build_problem(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                         const GibbsKernel& kernel, const ScreeningResult& sr) {
  detail::check_measures(mu, nu, kernel);
  detail::require_same(sr.n(), kernel.rows(), "screening rows vs kernel rows");
  detail::require_same(sr.m(), kernel.cols(), "screening cols vs kernel cols");
  detail::require_nonempty(sr);
  if (!(sr.epsilon > 0.0) || !(sr.kappa > 0.0)) throw ParameterError("epsilon and kappa must be > 0");

  const auto& rows_in = sr.active_rows;
  const auto& rows_out = sr.inactive_rows;
  const auto& cols_in = sr.active_cols;
  const auto& cols_out = sr.inactive_cols;
  const Matrix& k = kernel.entries();

  ScreenedDualProblem p;
  p.screening_ = sr;
  p.kernel_block_.resize(static_cast<Index>(rows_in.size()), static_cast<Index>(cols_in.size()));
  p.row_cross_ = Vector::Zero(static_cast<Index>(rows_in.size()));
  p.col_cross_ = Vector::Zero(static_cast<Index>(cols_in.size()));
  double corner = 0.0;
  double row_min = std::numeric_limits<double>::infinity(), col_min = row_min;

  for (std::size_t cj = 0; cj < cols_in.size(); ++cj) {
    const Index j = cols_in[cj];
    for (std::size_t ri = 0; ri < rows_in.size(); ++ri) {
      p.kernel_block_(static_cast<Index>(ri), static_cast<Index>(cj)) = k(rows_in[ri], j);
    }
    double t = 0.0;
    for (const Index i : rows_out) {
      t += k(i, j);
      col_min = std::min(col_min, k(i, j));
    }
    p.col_cross_[static_cast<Index>(cj)] = t;
  }
  for (const Index j : cols_out) {
    for (std::size_t ri = 0; ri < rows_in.size(); ++ri) {
      p.row_cross_[static_cast<Index>(ri)] += k(rows_in[ri], j);
      row_min = std::min(row_min, k(rows_in[ri], j));
    }
    for (const Index i : rows_out) corner += k(i, j);
  }

  p.mu_active_.resize(static_cast<Index>(rows_in.size()));
  p.nu_active_.resize(static_cast<Index>(cols_in.size()));
  for (std::size_t ri = 0; ri < rows_in.size(); ++ri) p.mu_active_[static_cast<Index>(ri)] = mu[rows_in[ri]];
  for (std::size_t cj = 0; cj < cols_in.size(); ++cj) p.nu_active_[static_cast<Index>(cj)] = nu[cols_in[cj]];

  double mu_out = 0.0, nu_out = 0.0;
  for (const Index i : rows_out) mu_out += mu[i];
  for (const Index j : cols_out) nu_out += nu[j];

  const double eps = sr.epsilon, kap = sr.kappa;
  p.xi_const_ = eps * eps * corner - kap * std::log(eps / kap) * mu_out - std::log(eps * kap) * nu_out / kap;
  p.k_min_ = p.kernel_block_.minCoeff();
  if (!(p.k_min_ > 0.0)) throw NumericRangeError("restricted kernel block has a zero entry");
  p.k_min_rows_ = std::min(p.k_min_, row_min);
  p.k_min_cols_ = std::min(p.k_min_, col_min);
  return p;
}

inline double objective(const ScreenedDualProblem& p, const Vector& u_active, const Vector& v_active) {
  return p.objective(u_active, v_active);
}

inline std::pair<Vector, Vector> gradient(const ScreenedDualProblem& p, const Vector& u_active,
                                          const Vector& v_active) {
  return p.gradient(u_active, v_active);
}

/// Psi_kappa(u, v) = 1^T B(u,v) 1 - kappa <u, mu> - kappa^{-1} <v, nu> on full-length potentials.
inline double approximate_dual_objective(const DualPotentials& pot, const GibbsKernel& kernel,
                                         const DiscreteMeasure& mu, const DiscreteMeasure& nu, double kappa) {
  detail::check_shapes(pot, kernel);
  detail::check_measures(mu, nu, kernel);
  const Vector a = detail::checked_exp(pot.u, "u");
  const Vector b = detail::checked_exp(pot.v, "v");
  return a.dot(kernel.entries() * b) - kappa * pot.u.dot(mu.weights()) - pot.v.dot(nu.weights()) / kappa;
}

/// Log-domain box enclosing the screened minimizer; one (lower, upper) pair per side.
struct BoxBounds {
  double u_lower;
  double u_upper;
  double v_lower;
  double v_upper;

  /// Per-coordinate bounds on theta = (u_I, v_J).
  std::pair<Vector, Vector> expand(Index n_active, Index m_active) const {
    Vector lower(n_active + m_active), upper(n_active + m_active);
    lower << Vector::Constant(n_active, u_lower), Vector::Constant(m_active, v_lower);
    upper << Vector::Constant(n_active, u_upper), Vector::Constant(m_active, v_upper);
    return {std::move(lower), std::move(upper)};
  }
};

enum class BoundsVariant {
  /// As executed by the reference pseudocode: the K_min terms are guarded by an extra "eps v".
  kAlgorithm,
  /// The bounds as stated in the enclosing-box proposition, without the inner guard.
  kProposition,
  /// kAlgorithm with K_min taken over whole lines: u_upper and g_v use the minimum
  /// over I x [m], v_upper and g_u the minimum over [n] x J. The upper bounds come
  /// from summing a row (column) of K against the floor on the other side, which
  /// needs every column (row), not only J (I). With the I x J minimum the box can
  /// come out empty, e.g. a single active row whose diagonal kernel entry is 1.
  kWholeLineKmin,
};

/// Box bounds on the free log-potentials.
///
///   u_lower = log( eps/kappa v mu_lo / (eps (m - m_b) + g_u m_b) )
///   u_upper = log( mu_hi / (m eps K_min) )
///   v_lower = log( eps kappa v nu_lo / (eps (n - n_b) + g_v n_b) )
///   v_upper = log( nu_hi / (n eps K_min) )
///
/// with g_u = nu_hi / (n eps kappa K_min), g_v = kappa mu_hi / (m eps K_min),
/// each replaced by (eps v g) under kAlgorithm. mu_lo, mu_hi (nu_lo, nu_hi)
/// range over the active rows (columns); n_b, m_b are the actual sizes |I|, |J|.
inline BoxBounds box_bounds(const ScreenedDualProblem& p, BoundsVariant variant = BoundsVariant::kAlgorithm) {
  if (!(p.k_min() > 0.0)) throw NumericRangeError("K_min must be > 0");
  const bool whole = variant == BoundsVariant::kWholeLineKmin;
  const double eps = p.epsilon(), kap = p.kappa();
  const double kmin_u = whole ? p.k_min_rows() : p.k_min(), kmin_v = whole ? p.k_min_cols() : p.k_min();
  const double n = static_cast<double>(p.n()), m = static_cast<double>(p.m());
  const double nb = static_cast<double>(p.n_active()), mb = static_cast<double>(p.m_active());
  const double mu_lo = p.mu_active().minCoeff(), mu_hi = p.mu_active().maxCoeff();
  const double nu_lo = p.nu_active().minCoeff(), nu_hi = p.nu_active().maxCoeff();

  double g_u = nu_hi / (n * eps * kap * kmin_v);
  double g_v = kap * mu_hi / (m * eps * kmin_u);
  if (variant != BoundsVariant::kProposition) {
    g_u = std::max(eps, g_u);
    g_v = std::max(eps, g_v);
  }
  BoxBounds box{};
  box.u_lower = std::log(std::max(eps / kap, mu_lo / (eps * (m - mb) + g_u * mb)));
  box.u_upper = std::log(mu_hi / (m * eps * kmin_u));
  box.v_lower = std::log(std::max(eps * kap, nu_lo / (eps * (n - nb) + g_v * nb)));
  box.v_upper = std::log(nu_hi / (n * eps * kmin_v));

  if (!std::isfinite(box.u_lower) || !std::isfinite(box.u_upper) || !(box.u_lower <= box.u_upper)) {
    throw InfeasibleBoundsError("empty box for row potentials", box.u_lower, box.u_upper);
  }
  if (!std::isfinite(box.v_lower) || !std::isfinite(box.v_upper) || !(box.v_lower <= box.v_upper)) {
    throw InfeasibleBoundsError("empty box for column potentials", box.v_lower, box.v_upper);
  }
  return box;
}

}  // namespace screenkhorn
