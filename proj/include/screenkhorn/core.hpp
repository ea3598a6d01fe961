#pragma once

// Entropic optimal transport primitives: measures, costs, the Gibbs kernel,
// transport plans induced by dual potentials, and the plain Sinkhorn solver.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "screenkhorn/errors.hpp"

namespace screenkhorn {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Strictly positive probability weights on a finite support.
///
/// The constructor rejects zero, negative, or non-finite weights and rescales
/// the rest so they sum to one. Inputs read from text files are usually off
/// the simplex by a few ulps; renormalizing is preferred to rejecting them.
class DiscreteMeasure {
 public:
  explicit DiscreteMeasure(Vector weights) : weights_(std::move(weights)) {
    if (weights_.size() == 0) {
      throw InputError("measure must have at least one atom");
    }
    for (Index i = 0; i < weights_.size(); ++i) {
      const double w = weights_[i];
      if (!std::isfinite(w) || w <= 0.0) {
        throw InputError("measure weight " + std::to_string(i) + " must be finite and > 0, got " +
                         std::to_string(w));
      }
    }
    weights_ /= weights_.sum();
  }

  static DiscreteMeasure uniform(Index n) {
    if (n < 1) throw InputError("uniform measure needs n >= 1");
    return DiscreteMeasure(Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }

  const Vector& weights() const { return weights_; }
  Index size() const { return weights_.size(); }
  double operator[](Index i) const { return weights_[i]; }

 private:
  Vector weights_;
};

/// Nonnegative, finite n x m ground cost.
class CostMatrix {
 public:
  explicit CostMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() == 0 || entries_.cols() == 0) {
      throw InputError("cost matrix must be non-empty");
    }
    for (Index j = 0; j < entries_.cols(); ++j) {
      for (Index i = 0; i < entries_.rows(); ++i) {
        const double c = entries_(i, j);
        if (!std::isfinite(c) || c < 0.0) {
          throw InputError("cost entry (" + std::to_string(i) + "," + std::to_string(j) +
                           ") must be finite and >= 0, got " + std::to_string(c));
        }
      }
    }
  }

  const Matrix& entries() const { return entries_; }
  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }
  double operator()(Index i, Index j) const { return entries_(i, j); }
  /// ||C||_inf, i.e. the largest entry (all entries are nonnegative).
  double max_entry() const { return entries_.maxCoeff(); }

 private:
  Matrix entries_;
};

class GibbsKernel;
GibbsKernel gibbs_kernel(const CostMatrix& cost, double eta);

/// K = exp(-C / eta) with cached row and column sums r(K), c(K).
class GibbsKernel {
 public:
  const Matrix& entries() const { return entries_; }
  const Vector& row_sums() const { return row_sums_; }
  const Vector& col_sums() const { return col_sums_; }
  double eta() const { return eta_; }
  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }
  double operator()(Index i, Index j) const { return entries_(i, j); }

 private:
  friend GibbsKernel gibbs_kernel(const CostMatrix& cost, double eta);
  GibbsKernel(Matrix entries, double eta) : entries_(std::move(entries)), eta_(eta) {
    // Both sums run over the other index in increasing order, so a symmetric K
    // gives bitwise-equal row and column sums (and kappa == 1 exactly downstream).
    const Index n = entries_.rows(), m = entries_.cols();
    row_sums_ = entries_.col(0);
    for (Index j = 1; j < m; ++j) row_sums_ += entries_.col(j);
    col_sums_.resize(m);
    constexpr Index kBlock = 8;
    for (Index j0 = 0; j0 < m; j0 += kBlock) {
      const Index w = std::min(kBlock, m - j0);
      double acc[kBlock] = {};
      for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < w; ++k) acc[k] += entries_(i, j0 + k);
      }
      for (Index k = 0; k < w; ++k) col_sums_[j0 + k] = acc[k];
    }
  }

  Matrix entries_;
  Vector row_sums_;
  Vector col_sums_;
  double eta_;
};

namespace detail {

// Elementwise exp in which every entry goes through the same vectorized kernel.
// A plain array .exp() finishes the last size % packet entries with std::exp,
// so equal inputs could map to different outputs depending on their position.
inline void exp_in_place(double* data, Index size) {
  using Chunk = Eigen::Array<double, 8, 1>;
  const Index body = size / Chunk::SizeAtCompileTime * Chunk::SizeAtCompileTime;
  for (Index k = 0; k < body; k += Chunk::SizeAtCompileTime) {
    Eigen::Map<Chunk> c(data + k);
    c = c.exp();
  }
  if (body < size) {
    Chunk tail = Chunk::Zero();
    tail.head(size - body) = Eigen::Map<const Eigen::ArrayXd>(data + body, size - body);
    tail = tail.exp();
    Eigen::Map<Eigen::ArrayXd>(data + body, size - body) = tail.head(size - body);
  }
}

}  // namespace detail

inline GibbsKernel gibbs_kernel(const CostMatrix& cost, double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw ParameterError("eta must be a positive finite number, got " + std::to_string(eta));
  }
  Matrix k = -cost.entries() / eta;
  // Below log(DBL_MIN) the entry would be subnormal or zero; the vectorized exp also
  // clamps its argument there instead of underflowing, so test the exponent itself.
  static const double kMinExponent = std::log(std::numeric_limits<double>::min());
  Index bad_i = 0, bad_j = 0;
  if (!(k.minCoeff(&bad_i, &bad_j) >= kMinExponent)) {
    throw NumericRangeError("Gibbs kernel entry (" + std::to_string(bad_i) + "," + std::to_string(bad_j) +
                            ") underflows: C_ij / eta exceeds " + std::to_string(-kMinExponent) +
                            "; increase eta or rescale C");
  }
  detail::exp_in_place(k.data(), k.size());
  return GibbsKernel(std::move(k), eta);
}

/// Log-domain dual variables (u, v).
struct DualPotentials {
  Vector u;
  Vector v;

  DualPotentials(Vector u_in, Vector v_in) : u(std::move(u_in)), v(std::move(v_in)) {
    if (!u.allFinite() || !v.allFinite()) {
      throw NumericRangeError("dual potentials must be finite");
    }
  }
};

namespace detail {

// e^x with an explicit range check; `what` and `index` name the offending coordinate.
inline Vector checked_exp(const Vector& x, const char* what) {
  Vector out(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i]);
    if (!std::isfinite(out[i]) || out[i] <= 0.0) {
      throw NumericRangeError(std::string("exp(") + what + "[" + std::to_string(i) + "]) = exp(" +
                              std::to_string(x[i]) + ") is out of double range");
    }
  }
  return out;
}

inline void check_shapes(const DualPotentials& pot, const GibbsKernel& kernel) {
  require_same(pot.u.size(), kernel.rows(), "u length vs kernel rows");
  require_same(pot.v.size(), kernel.cols(), "v length vs kernel cols");
}

}  // namespace detail

class TransportPlan;
TransportPlan plan_from_potentials(const DualPotentials& pot, const GibbsKernel& kernel);

/// B(u, v) = diag(e^u) K diag(e^v) together with its marginals.
///
/// Only plan_from_potentials can build one, so the entries always come from a
/// pair of potentials and a kernel.
class TransportPlan {
 public:
  const Matrix& entries() const { return entries_; }
  const Vector& row_marginal() const { return row_marginal_; }
  const Vector& col_marginal() const { return col_marginal_; }
  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }
  double operator()(Index i, Index j) const { return entries_(i, j); }

 private:
  friend TransportPlan plan_from_potentials(const DualPotentials& pot, const GibbsKernel& kernel);
  explicit TransportPlan(Matrix entries)
      : entries_(std::move(entries)),
        row_marginal_(entries_.rowwise().sum()),
        col_marginal_(entries_.colwise().sum().transpose()) {}

  Matrix entries_;
  Vector row_marginal_;
  Vector col_marginal_;
};

inline TransportPlan plan_from_potentials(const DualPotentials& pot, const GibbsKernel& kernel) {
  detail::check_shapes(pot, kernel);
  const Vector a = detail::checked_exp(pot.u, "u");
  const Vector b = detail::checked_exp(pot.v, "v");
  Matrix p = a.asDiagonal() * kernel.entries() * b.asDiagonal();
  if (!p.allFinite()) {
    throw NumericRangeError("transport plan overflows double range");
  }
  return TransportPlan(std::move(p));
}

/// Row and column sums of B(u, v) without materializing the plan.
inline std::pair<Vector, Vector> plan_marginals(const DualPotentials& pot, const GibbsKernel& kernel) {
  detail::check_shapes(pot, kernel);
  const Vector a = detail::checked_exp(pot.u, "u");
  const Vector b = detail::checked_exp(pot.v, "v");
  Vector rows = a.cwiseProduct(kernel.entries() * b);
  Vector cols = b.cwiseProduct(kernel.entries().transpose() * a);
  if (!rows.allFinite() || !cols.allFinite()) {
    throw NumericRangeError("plan marginals overflow double range");
  }
  return {std::move(rows), std::move(cols)};
}

/// Psi(u, v) = 1^T B(u,v) 1 - <u, mu> - <v, nu>.
inline double dual_objective(const DualPotentials& pot, const GibbsKernel& kernel,
                             const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  detail::check_shapes(pot, kernel);
  detail::require_same(mu.size(), kernel.rows(), "mu size vs kernel rows");
  detail::require_same(nu.size(), kernel.cols(), "nu size vs kernel cols");
  const Vector a = detail::checked_exp(pot.u, "u");
  const Vector b = detail::checked_exp(pot.v, "v");
  const double mass = a.dot(kernel.entries() * b);
  if (!std::isfinite(mass)) throw NumericRangeError("dual objective overflows double range");
  return mass - pot.u.dot(mu.weights()) - pot.v.dot(nu.weights());
}

/// <C, P>.
inline double divergence(const TransportPlan& plan, const CostMatrix& cost) {
  detail::require_same(plan.rows(), cost.rows(), "plan rows vs cost rows");
  detail::require_same(plan.cols(), cost.cols(), "plan cols vs cost cols");
  return plan.entries().cwiseProduct(cost.entries()).sum();
}

/// <C, B(u, v)> computed row by row, without materializing the plan.
inline double transport_cost(const DualPotentials& pot, const GibbsKernel& kernel, const CostMatrix& cost) {
  detail::check_shapes(pot, kernel);
  detail::require_same(cost.rows(), kernel.rows(), "cost rows vs kernel rows");
  detail::require_same(cost.cols(), kernel.cols(), "cost cols vs kernel cols");
  const Vector a = detail::checked_exp(pot.u, "u");
  const Vector b = detail::checked_exp(pot.v, "v");
  const Vector weighted = kernel.entries().cwiseProduct(cost.entries()) * b;
  return a.dot(weighted);
}

struct SinkhornOptions {
  /// Stop once ||B 1 - mu||_1 + ||B^T 1 - nu||_1 falls below this.
  double stop_threshold = 1e-9;
  int max_iter = 1000;
};

struct DualSolution {
  DualPotentials potentials;
  int iterations = 0;
  /// Combined l1 marginal violation of B(u, v) at exit.
  double violation = 0.0;
  bool converged = false;
};

/// Plain Sinkhorn scaling, a <- mu / (K b), b <- nu / (K^T a), in the scaling domain.
///
/// One iteration is one column update followed by one row update. The
/// violation is measured on the current (a, b) before each new sweep, so the
/// returned potentials are exactly those the reported violation refers to.
inline DualSolution sinkhorn(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const GibbsKernel& kernel,
                             const SinkhornOptions& options = {}) {
  detail::require_same(mu.size(), kernel.rows(), "mu size vs kernel rows");
  detail::require_same(nu.size(), kernel.cols(), "nu size vs kernel cols");
  if (!(options.stop_threshold > 0.0)) throw ParameterError("stop_threshold must be > 0");
  if (options.max_iter < 1) throw ParameterError("max_iter must be >= 1");

  const Matrix& k = kernel.entries();
  const Vector& mu_w = mu.weights();
  const Vector& nu_w = nu.weights();

  auto check = [](const Vector& x, const char* what) {
    for (Index i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x[i]) || x[i] <= 0.0) {
        throw NumericRangeError(std::string("sinkhorn: scaling ") + what + "[" + std::to_string(i) +
                                "] left the positive double range");
      }
    }
  };

  Vector a = Vector::Ones(k.rows());
  Vector b = Vector::Ones(k.cols());
  Vector kb(k.rows());
  Vector kta = k.transpose() * a;
  double violation = std::numeric_limits<double>::infinity();
  int iter = 0;
  bool converged = false;
  for (;;) {
    if (iter > 0) {
      violation = (a.cwiseProduct(kb) - mu_w).lpNorm<1>() + (b.cwiseProduct(kta) - nu_w).lpNorm<1>();
      if (violation < options.stop_threshold) {
        converged = true;
        break;
      }
      if (iter >= options.max_iter) break;
    }
    b = nu_w.cwiseQuotient(kta);
    check(b, "b");
    kb.noalias() = k * b;
    a = mu_w.cwiseQuotient(kb);
    check(a, "a");
    kta.noalias() = k.transpose() * a;
    ++iter;
  }
  return DualSolution{DualPotentials(a.array().log().matrix(), b.array().log().matrix()), iter, violation,
                      converged};
}

}  // namespace screenkhorn
