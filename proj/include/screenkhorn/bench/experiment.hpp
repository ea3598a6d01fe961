#pragma once

// Toy Gaussian-cloud benchmark: Sinkhorn vs Screenkhorn over an (eta, budget, trial) grid.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "screenkhorn/bench/philox.hpp"
#include "screenkhorn/core.hpp"
#include "screenkhorn/diagnostics.hpp"
#include "screenkhorn/screenkhorn.hpp"

namespace screenkhorn::bench {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// X ~ N(0, I) from stream 0; Y = (3, 3) + L z from stream 1 with L L^T = [[1, -0.8], [-0.8, 1]].
inline std::pair<Points, Points> generate_gaussian_pair(Index n, Index m, std::uint64_t seed) {
  if (n < 1 || m < 1) throw ParameterError("point counts must be >= 1");
  const GaussianStream xs(seed, 0), ys(seed, 1);
  Points x(n, 2), y(m, 2);
  for (Index i = 0; i < n; ++i) {
    const auto z = xs.pair(static_cast<std::uint64_t>(i));
    x(i, 0) = z[0];
    x(i, 1) = z[1];
  }
  // Cholesky factor of the target covariance: rows (1, 0) and (-0.8, 0.6).
  for (Index j = 0; j < m; ++j) {
    const auto z = ys.pair(static_cast<std::uint64_t>(j));
    y(j, 0) = 3.0 + z[0];
    y(j, 1) = 3.0 - 0.8 * z[0] + 0.6 * z[1];
  }
  return {std::move(x), std::move(y)};
}

/// C_ij = ||x_i - y_j||_2, optionally divided by its largest entry.
inline CostMatrix pairwise_euclidean(const Points& x, const Points& y, bool normalize) {
  if (x.rows() < 1 || y.rows() < 1) throw InputError("point sets must be nonempty");
  Matrix c(x.rows(), y.rows());
  for (Index j = 0; j < y.rows(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) c(i, j) = std::hypot(x(i, 0) - y(j, 0), x(i, 1) - y(j, 1));
  }
  if (normalize) {
    const double top = c.maxCoeff();
    if (!(top > 0.0)) throw DegenerateCostError("all points coincide; cannot normalize a zero cost matrix");
    c /= top;
  }
  return CostMatrix(std::move(c));
}

struct ExperimentConfig {
  Index n = 1000;
  Index m = 1000;
  std::vector<double> eta_list{0.1, 0.5, 1.0, 5.0};
  std::vector<double> budget_list{0.1, 0.5, 0.99};
  int trials = 30;
  std::uint64_t seed = 42;
  bool normalize_cost = true;
  /// Run containment, Pinsker, marginal-violation and marginal-mass certificates on each converged row.
  bool certify = false;
  /// Capped at the hardware thread count so timed solves never share a core.
  int workers = 1;
  /// Empty: rows are only returned, not written.
  std::string output_path;
  SinkhornOptions sinkhorn;
  ScreenkhornOptions screenkhorn;

  void validate() const {
    if (n < 1 || m < 1) throw ParameterError("n and m must be >= 1");
    if (eta_list.empty()) throw ParameterError("eta list is empty");
    if (budget_list.empty()) throw ParameterError("budget list is empty");
    for (const double eta : eta_list) {
      if (!(eta > 0.0) || !std::isfinite(eta)) throw ParameterError("eta must be > 0, got " + std::to_string(eta));
    }
    for (const double b : budget_list) {
      if (!(b > 0.0) || !(b <= 1.0)) throw ParameterError("budget must lie in (0, 1], got " + std::to_string(b));
    }
    if (trials < 1) throw ParameterError("trials must be >= 1");
    if (workers < 1) throw ParameterError("workers must be >= 1");
    screenkhorn.solver.validate();
  }
};

struct ResultRow {
  double eta = 0.0;
  double budget = 0.0;
  int trial = 0;
  std::uint64_t seed = 0;
  double time_sinkhorn = 0.0;
  double time_screenkhorn = 0.0;
  double speedup = 0.0;
  double row_violation = 0.0;
  double col_violation = 0.0;
  double rel_divergence = 0.0;
  double kappa = 0.0;
  double epsilon = 0.0;
  Index active_rows = 0;
  Index active_cols = 0;
  bool converged = false;

  // Not part of the CSV.
  double time_screening = 0.0;
  int certificate_failures = 0;
  std::string error;
};

inline const char* result_csv_header() {
  return "eta,budget,trial,seed,time_sinkhorn,time_screenkhorn,speedup,row_violation,col_violation,"
         "rel_divergence,kappa,epsilon,active_rows,active_cols,converged";
}

inline std::string to_csv(const ResultRow& r) {
  char buf[640];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d,%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%lld,%lld,%s",
                r.eta, r.budget, r.trial, static_cast<unsigned long long>(r.seed), r.time_sinkhorn,
                r.time_screenkhorn, r.speedup, r.row_violation, r.col_violation, r.rel_divergence, r.kappa,
                r.epsilon, static_cast<long long>(r.active_rows), static_cast<long long>(r.active_cols),
                r.converged ? "true" : "false");
  return buf;
}

/// Certificates checked under --certify; returns the failing ones.
inline std::vector<Certificate> failed_certificates(const ScreenkhornResult& result, const DiscreteMeasure& mu,
                                                    const DiscreteMeasure& nu) {
  std::vector<Certificate> all;
  all.push_back(containment_certificate(result));
  all.push_back(pinsker_check(mu.weights(), result.row_marginal));
  all.push_back(pinsker_check(nu.weights(), result.col_marginal));
  all.push_back(violation_certificate_rows(result, mu, nu));
  all.push_back(violation_certificate_cols(result, mu, nu));
  const auto [rows, cols] = marginal_norm_certificates(result, mu, nu);
  all.push_back(rows);
  all.push_back(cols);
  std::vector<Certificate> failed;
  for (auto& c : all) {
    if (!c.satisfied) failed.push_back(std::move(c));
  }
  return failed;
}

namespace detail {

struct TrialData {
  CostMatrix cost;
  DiscreteMeasure mu;
  DiscreteMeasure nu;
};

inline TrialData make_trial(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto [x, y] = generate_gaussian_pair(cfg.n, cfg.m, seed);
  return {pairwise_euclidean(x, y, cfg.normalize_cost), DiscreteMeasure::uniform(cfg.n),
          DiscreteMeasure::uniform(cfg.m)};
}

inline ResultRow run_row(const ExperimentConfig& cfg, const TrialData& data, double eta, double budget_factor,
                         int trial, std::uint64_t seed) {
  ResultRow row;
  row.eta = eta;
  row.budget = budget_factor;
  row.trial = trial;
  row.seed = seed;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row.time_sinkhorn = row.time_screenkhorn = row.speedup = nan;
  row.row_violation = row.col_violation = row.rel_divergence = row.kappa = row.epsilon = nan;
  try {
    const auto t0 = screenkhorn::detail::Clock::now();
    const GibbsKernel kernel = gibbs_kernel(data.cost, eta);
    const DualSolution reference = sinkhorn(data.mu, data.nu, kernel, cfg.sinkhorn);
    row.time_sinkhorn = screenkhorn::detail::seconds_since(t0);

    const Budget budget = decimation_to_budget(cfg.n, cfg.m, budget_factor);
    ScreenkhornOptions opts = cfg.screenkhorn;
    opts.materialize_plan = false;
    const ScreenkhornResult sc = screenkhorn(data.cost, eta, data.mu, data.nu, budget, opts);
    row.time_screenkhorn = sc.wall_time();
    row.time_screening = sc.timings.screening;
    row.speedup = row.time_sinkhorn / row.time_screenkhorn;

    const MarginalViolations viol = marginal_violations(sc.row_marginal, sc.col_marginal, data.mu, data.nu);
    row.row_violation = viol.row_l1;
    row.col_violation = viol.col_l1;
    const double reference_cost = transport_cost(reference.potentials, kernel, data.cost);
    const double screened_cost = transport_cost(sc.potentials, kernel, data.cost);
    row.rel_divergence = std::abs(reference_cost - screened_cost) / reference_cost;
    row.kappa = sc.screening.kappa;
    row.epsilon = sc.screening.epsilon;
    row.active_rows = static_cast<Index>(sc.screening.active_rows.size());
    row.active_cols = static_cast<Index>(sc.screening.active_cols.size());
    row.converged = sc.converged() && reference.converged;
    if (!sc.converged()) row.error = std::string("screenkhorn: ") + to_string(sc.solver_report.status);
    if (!reference.converged) row.error = "sinkhorn: iteration cap reached";
    if (cfg.certify && sc.converged()) {
      for (const Certificate& c : failed_certificates(sc, data.mu, data.nu)) {
        ++row.certificate_failures;
        if (!row.error.empty()) row.error += "; ";
        row.error += c.name;
      }
    }
  } catch (const Error& e) {
    row.converged = false;
    row.error = e.what();
  }
  return row;
}

}  // namespace detail

/// Parses "a,b,c" or "start:stop:step" (stop included when the grid lands on it).
inline std::vector<double> parse_grid(const std::string& text) {
  auto number = [&text](const std::string& field) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(field, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != field.size()) throw InputError("cannot parse '" + field + "' in grid '" + text + "'");
    return v;
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    const std::size_t a = text.find(':'), b = text.find(':', a + 1);
    if (b == std::string::npos || text.find(':', b + 1) != std::string::npos) {
      throw InputError("range grid must be start:stop:step, got '" + text + "'");
    }
    const double start = number(text.substr(0, a));
    const double stop = number(text.substr(a + 1, b - a - 1));
    const double step = number(text.substr(b + 1));
    if (!(step > 0.0) || stop < start) throw InputError("range grid needs step > 0 and stop >= start: '" + text + "'");
    for (long k = 0;; ++k) {
      const double v = start + static_cast<double>(k) * step;
      if (v > stop + 1e-12 * std::max(1.0, std::abs(stop))) break;
      out.push_back(v);
    }
    return out;
  }
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = text.find(',', start);
    out.push_back(number(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

struct ExperimentSummary {
  std::vector<ResultRow> rows;
  int workers_used = 1;
  int failed_rows = 0;
  int certificate_failures = 0;
};

/// Runs the sweep. Rows are ordered eta -> budget -> trial; trial t uses data seed `seed + t`.
/// Each row is appended to the CSV as soon as every earlier row is done. `on_row` (optional)
/// sees rows in the same order.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg,
                                        const std::function<void(const ResultRow&)>& on_row = {}) {
  cfg.validate();
  std::optional<std::ofstream> csv;
  if (!cfg.output_path.empty()) {
    csv.emplace(cfg.output_path);
    if (!*csv) throw InputError(cfg.output_path + ": cannot open for writing");
    *csv << result_csv_header() << '\n' << std::flush;
  }

  const std::size_t per_eta = cfg.budget_list.size() * static_cast<std::size_t>(cfg.trials);
  const std::size_t total = cfg.eta_list.size() * per_eta;
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(hw)));

  ExperimentSummary summary;
  summary.workers_used = workers;
  summary.rows.resize(total);
  std::vector<char> done(total, 0);
  std::size_t flushed = 0;
  std::mutex writer;

  auto publish = [&](std::size_t slot, ResultRow row) {
    std::lock_guard<std::mutex> lock(writer);
    summary.rows[slot] = std::move(row);
    done[slot] = 1;
    while (flushed < total && done[flushed]) {
      const ResultRow& r = summary.rows[flushed];
      if (csv) *csv << to_csv(r) << '\n' << std::flush;
      if (on_row) on_row(r);
      ++flushed;
    }
  };

  for (std::size_t e = 0; e < cfg.eta_list.size(); ++e) {
    const double eta = cfg.eta_list[e];
    // Warm-up on the first trial's data; its timings are discarded.
    {
      const detail::TrialData warm = detail::make_trial(cfg, cfg.seed);
      (void)detail::run_row(cfg, warm, eta, cfg.budget_list.front(), 0, cfg.seed);
    }
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
      for (;;) {
        const std::size_t k = next.fetch_add(1);
        if (k >= per_eta) return;
        const std::size_t b = k / static_cast<std::size_t>(cfg.trials);
        const int trial = static_cast<int>(k % static_cast<std::size_t>(cfg.trials));
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(trial);
        ResultRow row;
        try {
          const detail::TrialData data = detail::make_trial(cfg, seed);
          row = detail::run_row(cfg, data, eta, cfg.budget_list[b], trial, seed);
        } catch (const Error& err) {
          row.eta = eta;
          row.budget = cfg.budget_list[b];
          row.trial = trial;
          row.seed = seed;
          row.error = err.what();
        }
        publish(e * per_eta + k, std::move(row));
      }
    };
    if (workers == 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(work);
      for (auto& t : pool) t.join();
    }
  }
  if (csv && !*csv) throw InputError(cfg.output_path + ": write failed");

  for (const ResultRow& r : summary.rows) {
    if (!r.converged) ++summary.failed_rows;
    summary.certificate_failures += r.certificate_failures;
  }
  return summary;
}

}  // namespace screenkhorn::bench
