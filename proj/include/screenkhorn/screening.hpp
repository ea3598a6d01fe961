#pragma once

// Static screening: sorted ratio vectors, (epsilon, kappa) from a point
// budget, and the active index sets I, J whose dual variables stay free.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "screenkhorn/core.hpp"

namespace screenkhorn {

/// Number of row / column dual variables kept free, 1 <= n_b <= n, 1 <= m_b <= m.
struct Budget {
  Index n_b;
  Index m_b;

  Budget(Index rows, Index cols) : n_b(rows), m_b(cols) {
    if (n_b < 1 || m_b < 1) {
      throw ParameterError("budget must keep at least one row and one column, got (" + std::to_string(n_b) +
                           ", " + std::to_string(m_b) + ")");
    }
  }

  void check_against(Index n, Index m) const {
    if (n_b > n || m_b > m) {
      throw ParameterError("budget (" + std::to_string(n_b) + ", " + std::to_string(m_b) + ") exceeds problem size (" +
                           std::to_string(n) + ", " + std::to_string(m) + ")");
    }
  }
};

struct RatioVectors {
  /// mu ./ r(K), sorted in decreasing order.
  Vector xi;
  /// nu ./ c(K), sorted in decreasing order.
  Vector zeta;
};

struct EpsilonKappa {
  double epsilon;
  double kappa;
};

struct ScreeningResult {
  double epsilon = 0.0;
  double kappa = 0.0;
  /// Cut-off on mu_i / r_i(K); mathematically eps^2 / kappa.
  double row_threshold = 0.0;
  /// Cut-off on nu_j / c_j(K); mathematically eps^2 * kappa.
  double col_threshold = 0.0;
  std::vector<Index> active_rows;    // I, increasing
  std::vector<Index> active_cols;    // J, increasing
  std::vector<Index> inactive_rows;  // complement of I, increasing
  std::vector<Index> inactive_cols;  // complement of J, increasing
  Vector xi;
  Vector zeta;

  Index n() const { return static_cast<Index>(active_rows.size() + inactive_rows.size()); }
  Index m() const { return static_cast<Index>(active_cols.size() + inactive_cols.size()); }
  /// Threshold log-potentials fixed on the screened coordinates.
  double u_screened() const { return std::log(epsilon / kappa); }
  double v_screened() const { return std::log(epsilon * kappa); }
};

namespace detail {

inline Vector ratios(const Vector& weights, const Vector& sums) { return weights.cwiseQuotient(sums); }

inline Vector sorted_descending(const Vector& values) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] > values[b]; });
  Vector out(values.size());
  for (Index k = 0; k < values.size(); ++k) out[k] = values[order[static_cast<std::size_t>(k)]];
  return out;
}

template <class Keep>
void split_indices(Index count, Keep keep, std::vector<Index>& active, std::vector<Index>& inactive) {
  active.clear();
  inactive.clear();
  for (Index i = 0; i < count; ++i) (keep(i) ? active : inactive).push_back(i);
}

inline void require_nonempty(const ScreeningResult& sr) {
  if (sr.active_rows.empty() || sr.active_cols.empty()) {
    throw DegenerateScreeningError("screening left no free " +
                                   std::string(sr.active_rows.empty() ? "rows" : "columns"));
  }
}

inline void check_measures(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const GibbsKernel& kernel) {
  require_same(mu.size(), kernel.rows(), "mu size vs kernel rows");
  require_same(nu.size(), kernel.cols(), "nu size vs kernel cols");
}

}  // namespace detail

/// Sorted (decreasing, stable) ratio vectors xi = sort(mu ./ r(K)), zeta = sort(nu ./ c(K)).
inline RatioVectors ratio_vectors(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const GibbsKernel& kernel) {
  detail::check_measures(mu, nu, kernel);
  return {detail::sorted_descending(detail::ratios(mu.weights(), kernel.row_sums())),
          detail::sorted_descending(detail::ratios(nu.weights(), kernel.col_sums()))};
}

/// eps = (xi_{n_b} zeta_{m_b})^{1/4}, kappa = sqrt(zeta_{m_b} / xi_{n_b}); indices are 1-based ranks.
inline EpsilonKappa epsilon_kappa(const Vector& xi, const Vector& zeta, const Budget& budget) {
  budget.check_against(xi.size(), zeta.size());
  const double x = xi[budget.n_b - 1];
  const double z = zeta[budget.m_b - 1];
  if (!(x > 0.0) || !(z > 0.0) || !std::isfinite(x) || !std::isfinite(z)) {
    throw DegenerateScreeningError("ratio at budget index must be positive and finite (xi=" + std::to_string(x) +
                                   ", zeta=" + std::to_string(z) + ")");
  }
  return {std::pow(x * z, 0.25), std::sqrt(z / x)};
}

/// I = {i : mu_i >= (eps^2/kappa) r_i(K)}, J = {j : nu_j >= eps^2 kappa c_j(K)}.
inline ScreeningResult active_sets(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const GibbsKernel& kernel,
                                   double epsilon, double kappa) {
  detail::check_measures(mu, nu, kernel);
  if (!(epsilon > 0.0) || !(kappa > 0.0)) {
    throw ParameterError("epsilon and kappa must be > 0");
  }
  ScreeningResult sr;
  sr.epsilon = epsilon;
  sr.kappa = kappa;
  sr.row_threshold = epsilon * epsilon / kappa;
  sr.col_threshold = epsilon * epsilon * kappa;
  const Vector& r = kernel.row_sums();
  const Vector& c = kernel.col_sums();
  detail::split_indices(
      mu.size(), [&](Index i) { return mu[i] >= sr.row_threshold * r[i]; }, sr.active_rows, sr.inactive_rows);
  detail::split_indices(
      nu.size(), [&](Index j) { return nu[j] >= sr.col_threshold * c[j]; }, sr.active_cols, sr.inactive_cols);
  const RatioVectors rv = ratio_vectors(mu, nu, kernel);
  sr.xi = rv.xi;
  sr.zeta = rv.zeta;
  detail::require_nonempty(sr);
  return sr;
}

/// Full screening step for a point budget.
///
/// Membership is decided by comparing each ratio against xi_{n_b} and
/// zeta_{m_b} themselves instead of the recombined eps^2/kappa, eps^2 kappa,
/// which can round one ulp past the boundary ratio and drop it from I. With
/// distinct ratios this yields exactly |I| = n_b and |J| = m_b; tied ratios
/// at the cut all stay in the active set.
inline ScreeningResult screen(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const GibbsKernel& kernel,
                              const Budget& budget) {
  detail::check_measures(mu, nu, kernel);
  budget.check_against(mu.size(), nu.size());
  const Vector row_ratio = detail::ratios(mu.weights(), kernel.row_sums());
  const Vector col_ratio = detail::ratios(nu.weights(), kernel.col_sums());

  ScreeningResult sr;
  sr.xi = detail::sorted_descending(row_ratio);
  sr.zeta = detail::sorted_descending(col_ratio);
  const EpsilonKappa ek = epsilon_kappa(sr.xi, sr.zeta, budget);
  sr.epsilon = ek.epsilon;
  sr.kappa = ek.kappa;
  sr.row_threshold = sr.xi[budget.n_b - 1];
  sr.col_threshold = sr.zeta[budget.m_b - 1];
  detail::split_indices(
      mu.size(), [&](Index i) { return row_ratio[i] >= sr.row_threshold; }, sr.active_rows, sr.inactive_rows);
  detail::split_indices(
      nu.size(), [&](Index j) { return col_ratio[j] >= sr.col_threshold; }, sr.active_cols, sr.inactive_cols);
  detail::require_nonempty(sr);
  return sr;
}

/// Screening result that keeps every coordinate free while imposing the
/// (eps, kappa) lower bounds; used to pose the unreduced constrained dual.
inline ScreeningResult unscreened(Index n, Index m, double epsilon, double kappa) {
  ScreeningResult sr;
  sr.epsilon = epsilon;
  sr.kappa = kappa;
  sr.row_threshold = epsilon * epsilon / kappa;
  sr.col_threshold = epsilon * epsilon * kappa;
  detail::split_indices(
      n, [](Index) { return true; }, sr.active_rows, sr.inactive_rows);
  detail::split_indices(
      m, [](Index) { return true; }, sr.active_cols, sr.inactive_cols);
  return sr;
}

}  // namespace screenkhorn
