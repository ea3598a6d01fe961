// bench: Sinkhorn vs Screenkhorn sweeps, single solves and comparisons from CSV files.
//
// Exit codes: 0 ok, 1 input error, 2 numeric or solver failure, 3 certificate violation (--certify).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "screenkhorn/bench/csv_io.hpp"
#include "screenkhorn/bench/experiment.hpp"
#include "screenkhorn/diagnostics.hpp"
#include "screenkhorn/screenkhorn.hpp"

namespace sk = screenkhorn;
namespace bench = screenkhorn::bench;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kSolverError = 2;
constexpr int kCertificateError = 3;

struct ProblemArgs {
  std::string measures, mu, nu, cost;
  double eta = 1.0;
  double budget = 0.5;
  double pg_tolerance = 1e-6;
  bool certify = false;
};

void add_problem_options(CLI::App* cmd, ProblemArgs& a) {
  auto* measures = cmd->add_option("--measures", a.measures, "CSV with header index,mu,nu");
  auto* mu = cmd->add_option("--mu", a.mu, "CSV with header index,mu");
  auto* nu = cmd->add_option("--nu", a.nu, "CSV with header index,nu");
  mu->needs(nu);
  nu->needs(mu);
  measures->excludes(mu)->excludes(nu);
  cmd->add_option("--cost", a.cost, "headerless cost matrix CSV")->required();
  cmd->add_option("--eta", a.eta, "entropic regularization")->check(CLI::PositiveNumber);
  cmd->add_option("--budget", a.budget, "fraction of rows/columns kept active, in (0, 1]");
  cmd->add_option("--pg-tol", a.pg_tolerance, "projected-gradient stopping tolerance");
  cmd->add_flag("--certify", a.certify, "check the runtime certificates; exit 3 on a violation");
}

bench::Problem load(const ProblemArgs& a) {
  if (!a.measures.empty()) return bench::load_problem(a.measures, a.cost);
  if (!a.mu.empty()) return bench::load_problem(a.mu, a.nu, a.cost);
  throw sk::InputError("either --measures or --mu/--nu is required");
}

sk::ScreenkhornResult solve(const bench::Problem& p, const ProblemArgs& a, bool materialize) {
  sk::ScreenkhornOptions opts;
  opts.solver.pg_tolerance = a.pg_tolerance;
  opts.materialize_plan = materialize;
  const sk::Budget budget = sk::decimation_to_budget(p.mu.size(), p.nu.size(), a.budget);
  return sk::screenkhorn(p.cost, a.eta, p.mu, p.nu, budget, opts);
}

void print_screenkhorn(const sk::ScreenkhornResult& r, const bench::Problem& p) {
  const auto viol = sk::marginal_violations(r.row_marginal, r.col_marginal, p.mu, p.nu);
  std::printf("epsilon          %.6g\n", r.screening.epsilon);
  std::printf("kappa            %.6g\n", r.screening.kappa);
  std::printf("active rows      %zu / %lld\n", r.screening.active_rows.size(), static_cast<long long>(p.mu.size()));
  std::printf("active cols      %zu / %lld\n", r.screening.active_cols.size(), static_cast<long long>(p.nu.size()));
  std::printf("solver status    %s (%ld iterations, |pg|inf %.3g)\n", sk::to_string(r.solver_report.status),
              r.solver_report.iterations, r.solver_report.projected_gradient_inf_norm);
  std::printf("row violation    %.6g\n", viol.row_l1);
  std::printf("col violation    %.6g\n", viol.col_l1);
  std::printf("time             %.6f s (screening %.6f s)\n", r.wall_time(), r.timings.screening);
}

int report_certificates(const sk::ScreenkhornResult& r, const bench::Problem& p) {
  if (!r.converged()) {
    std::fprintf(stderr, "certificates skipped: solver did not converge\n");
    return kSolverError;
  }
  const auto failed = bench::failed_certificates(r, p.mu, p.nu);
  for (const auto& c : failed) {
    std::fprintf(stderr, "certificate %s violated: %.17g > %.17g\n", c.name.c_str(), c.empirical_value,
                 c.bound_value);
  }
  std::printf("certificates     %s\n", failed.empty() ? "all satisfied" : "VIOLATED");
  return failed.empty() ? kOk : kCertificateError;
}

int cmd_solve(const ProblemArgs& a, const std::string& out) {
  const bench::Problem p = load(a);
  const sk::ScreenkhornResult r = solve(p, a, true);
  print_screenkhorn(r, p);
  if (!out.empty()) bench::write_matrix(out, r.plan->entries());
  if (a.certify) return report_certificates(r, p);
  return r.converged() ? kOk : kSolverError;
}

int cmd_compare(const ProblemArgs& a) {
  const bench::Problem p = load(a);
  const auto t0 = std::chrono::steady_clock::now();
  const sk::GibbsKernel kernel = sk::gibbs_kernel(p.cost, a.eta);
  const sk::SinkhornOptions sopts;
  const sk::DualSolution ref = sk::sinkhorn(p.mu, p.nu, kernel, sopts);
  const double t_sinkhorn = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const sk::ScreenkhornResult r = solve(p, a, false);
  const double ref_cost = sk::transport_cost(ref.potentials, kernel, p.cost);
  const double sc_cost = sk::transport_cost(r.potentials, kernel, p.cost);

  std::printf("sinkhorn         %d iterations, violation %.3g, %s, %.6f s\n", ref.iterations, ref.violation,
              ref.converged ? "converged" : "NOT converged", t_sinkhorn);
  print_screenkhorn(r, p);
  std::printf("speedup          %.4g\n", t_sinkhorn / r.wall_time());
  std::printf("<C,P> sinkhorn   %.17g\n", ref_cost);
  std::printf("<C,P> screened   %.17g\n", sc_cost);
  std::printf("rel divergence   %.6g\n", std::abs(ref_cost - sc_cost) / ref_cost);
  int code = ref.converged && r.converged() ? kOk : kSolverError;
  if (a.certify) {
    const int cert = report_certificates(r, p);
    if (cert != kOk) code = cert;
  }
  return code;
}

void write_sidecar(const std::string& path, const bench::ExperimentConfig& cfg, const bench::ExperimentSummary& s) {
  nlohmann::json j;
  j["n"] = cfg.n;
  j["m"] = cfg.m;
  j["eta_list"] = cfg.eta_list;
  j["budget_list"] = cfg.budget_list;
  j["trials"] = cfg.trials;
  j["seed"] = cfg.seed;
  j["normalize_cost"] = cfg.normalize_cost;
  j["certify"] = cfg.certify;
  j["workers"] = s.workers_used;
  j["sinkhorn"] = {{"stop_threshold", cfg.sinkhorn.stop_threshold}, {"max_iter", cfg.sinkhorn.max_iter}};
  j["screenkhorn"] = {{"pg_tolerance", cfg.screenkhorn.solver.pg_tolerance},
                      {"max_iterations", cfg.screenkhorn.solver.max_iterations},
                      {"history_size", cfg.screenkhorn.solver.history_size},
                      {"restricted_sinkhorn_iters", cfg.screenkhorn.restricted_sinkhorn_iters}};
  j["timing"] = "time_screenkhorn covers kernel, screening and bounded solve; time_screening is its screening part";
  j["failed_rows"] = s.failed_rows;
  j["certificate_failures"] = s.certificate_failures;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"eta", r.eta}, {"budget", r.budget}, {"trial", r.trial}, {"time_screening", r.time_screening},
                    {"error", r.error}});
  }
  j["rows"] = std::move(rows);
  std::ofstream out(path);
  if (!out) throw sk::InputError(path + ": cannot open for writing");
  out << j.dump(2) << '\n';
}

int cmd_run(bench::ExperimentConfig cfg, const std::string& eta_text, const std::string& budget_text) {
  cfg.eta_list = bench::parse_grid(eta_text);
  cfg.budget_list = bench::parse_grid(budget_text);
  const bench::ExperimentSummary s = bench::run_experiment(cfg, [](const bench::ResultRow& r) {
    std::fprintf(stderr, "eta=%g budget=%g trial=%d speedup=%.3g row_violation=%.3g%s\n", r.eta, r.budget, r.trial,
                 r.speedup, r.row_violation, r.converged ? "" : " (not converged)");
  });
  if (!cfg.output_path.empty()) write_sidecar(cfg.output_path + ".json", cfg, s);

  // Per (eta, budget) means over trials.
  std::map<std::pair<double, double>, std::vector<const bench::ResultRow*>> groups;
  for (const auto& r : s.rows) groups[{r.eta, r.budget}].push_back(&r);
  std::printf("%8s %8s %10s %14s %14s %14s\n", "eta", "budget", "speedup", "row_violation", "col_violation",
              "rel_divergence");
  for (const auto& [key, rows] : groups) {
    double sp = 0, rv = 0, cv = 0, rd = 0;
    for (const auto* r : rows) {
      sp += r->speedup;
      rv += r->row_violation;
      cv += r->col_violation;
      rd += r->rel_divergence;
    }
    const double k = static_cast<double>(rows.size());
    std::printf("%8g %8g %10.4g %14.4g %14.4g %14.4g\n", key.first, key.second, sp / k, rv / k, cv / k, rd / k);
  }
  std::printf("rows %zu, not converged %d, certificate failures %d\n", s.rows.size(), s.failed_rows,
              s.certificate_failures);
  if (cfg.certify && s.certificate_failures > 0) return kCertificateError;
  return s.failed_rows > 0 ? kSolverError : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sinkhorn and Screenkhorn benchmark harness"};
  app.require_subcommand(1);

  bench::ExperimentConfig cfg;
  std::string eta_text = "0.1,0.5,1,5";
  std::string budget_text = "0.01:0.99:0.05";
  auto* run = app.add_subcommand("run", "Gaussian-cloud sweep over eta x budget x trials, written as CSV");
  run->add_option("--n", cfg.n, "source points")->check(CLI::PositiveNumber);
  run->add_option("--m", cfg.m, "target points")->check(CLI::PositiveNumber);
  run->add_option("--eta", eta_text, "comma list or start:stop:step");
  run->add_option("--budget", budget_text, "comma list or start:stop:step of fractions in (0, 1]");
  run->add_option("--trials", cfg.trials, "trials per grid point");
  run->add_option("--seed", cfg.seed, "base seed; trial t uses seed + t");
  run->add_flag("--normalize-cost,!--raw-cost", cfg.normalize_cost, "divide the cost by its largest entry");
  run->add_flag("--certify", cfg.certify, "check certificates on every converged row");
  run->add_option("--workers", cfg.workers, "parallel trials (capped at hardware threads)");
  run->add_option("--pg-tol", cfg.screenkhorn.solver.pg_tolerance, "projected-gradient stopping tolerance");
  run->add_option("--out", cfg.output_path, "results CSV; a .json sidecar records the settings");

  ProblemArgs solve_args;
  std::string plan_out;
  auto* solve_cmd = app.add_subcommand("solve", "Screenkhorn on a problem loaded from CSV");
  add_problem_options(solve_cmd, solve_args);
  solve_cmd->add_option("--out", plan_out, "write the screened plan as CSV");

  ProblemArgs compare_args;
  auto* compare = app.add_subcommand("compare", "Sinkhorn vs Screenkhorn on a problem loaded from CSV");
  add_problem_options(compare, compare_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*run) return cmd_run(cfg, eta_text, budget_text);
    if (*solve_cmd) return cmd_solve(solve_args, plan_out);
    if (*compare) return cmd_compare(compare_args);
  } catch (const sk::InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kInputError;
  } catch (const sk::ParameterError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kInputError;
  } catch (const sk::ShapeError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kInputError;
  } catch (const sk::Error& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return kSolverError;
  }
  return kOk;
}
