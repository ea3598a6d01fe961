#pragma once

// Text formats used by the bench CLI.
//
//   measures: header `index,mu,nu`, one row per atom; when n != m the shorter
//             column is left blank on the trailing rows.
//   single measure: header `index,<name>`, one row per atom (--mu / --nu files).
//   matrix (cost or plan): headerless, one line per row, comma separated.
//
// Every decimal is written with 17 significant digits so a write/read cycle
// is exact.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "screenkhorn/core.hpp"

namespace screenkhorn::bench {

namespace detail {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string where(const std::string& path, std::size_t line, std::size_t column) {
  return path + ":" + std::to_string(line) + ":" + std::to_string(column) + ": ";
}

inline double parse_double(std::string_view field, const std::string& path, std::size_t line, std::size_t column) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last) {
    throw InputError(where(path, line, column) + "cannot parse '" + std::string(field) + "' as a number");
  }
  return value;
}

inline std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open for reading");
  return in;
}

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError(path + ": cannot open for writing");
  return out;
}

// Weights must be positive, finite, and sum to one up to file rounding; the
// DiscreteMeasure constructor renormalizes the remainder.
inline DiscreteMeasure checked_measure(std::vector<double> weights, const std::vector<std::size_t>& lines,
                                       const std::string& path, std::size_t column, const char* name) {
  if (weights.empty()) throw InputError(path + ": no weights for " + name);
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!std::isfinite(weights[k]) || weights[k] <= 0.0) {
      throw InputError(where(path, lines[k], column) + name + " weight must be > 0, got " +
                       format_double(weights[k]));
    }
    total += weights[k];
  }
  if (std::abs(total - 1.0) > 1e-4) {
    throw InputError(path + ": " + name + " weights sum to " + format_double(total) + ", not a probability vector");
  }
  return DiscreteMeasure(Eigen::Map<const Vector>(weights.data(), static_cast<Index>(weights.size())));
}

}  // namespace detail

/// Reads `index,mu,nu`. Blank trailing cells mark the end of the shorter measure.
inline std::pair<DiscreteMeasure, DiscreteMeasure> read_measures(const std::string& path) {
  std::ifstream in = detail::open_for_read(path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw InputError(path + ": empty file");
  ++lineno;
  const auto header = detail::split(line);
  if (header.size() != 3 || header[0] != "index" || header[1] != "mu" || header[2] != "nu") {
    throw InputError(detail::where(path, 1, 1) + "expected header 'index,mu,nu'");
  }
  std::vector<double> mu, nu;
  std::vector<std::size_t> mu_lines, nu_lines;
  bool mu_ended = false, nu_ended = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line);
    if (fields.size() != 3) {
      throw InputError(detail::where(path, lineno, 1) + "expected 3 fields, got " + std::to_string(fields.size()));
    }
    const double index = detail::parse_double(fields[0], path, lineno, 1);
    const std::size_t expected = mu_lines.size() > nu_lines.size() ? mu_lines.size() : nu_lines.size();
    if (index != static_cast<double>(expected)) {
      throw InputError(detail::where(path, lineno, 1) + "expected index " + std::to_string(expected));
    }
    auto take = [&](std::string_view field, std::size_t column, std::vector<double>& out,
                    std::vector<std::size_t>& lines, bool& ended, const char* name) {
      if (field.empty()) {
        ended = true;
        return;
      }
      if (ended) {
        throw InputError(detail::where(path, lineno, column) + name + " continues after a blank cell");
      }
      out.push_back(detail::parse_double(field, path, lineno, column));
      lines.push_back(lineno);
    };
    take(fields[1], 2, mu, mu_lines, mu_ended, "mu");
    take(fields[2], 3, nu, nu_lines, nu_ended, "nu");
  }
  return {detail::checked_measure(std::move(mu), mu_lines, path, 2, "mu"),
          detail::checked_measure(std::move(nu), nu_lines, path, 3, "nu")};
}

/// Reads a single measure from `index,<name>`.
inline DiscreteMeasure read_measure(const std::string& path) {
  std::ifstream in = detail::open_for_read(path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw InputError(path + ": empty file");
  ++lineno;
  const auto header = detail::split(line);
  if (header.size() != 2 || header[0] != "index") {
    throw InputError(detail::where(path, 1, 1) + "expected header 'index,<name>'");
  }
  std::vector<double> w;
  std::vector<std::size_t> lines;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line);
    if (fields.size() != 2) {
      throw InputError(detail::where(path, lineno, 1) + "expected 2 fields, got " + std::to_string(fields.size()));
    }
    if (detail::parse_double(fields[0], path, lineno, 1) != static_cast<double>(w.size())) {
      throw InputError(detail::where(path, lineno, 1) + "expected index " + std::to_string(w.size()));
    }
    w.push_back(detail::parse_double(fields[1], path, lineno, 2));
    lines.push_back(lineno);
  }
  return detail::checked_measure(std::move(w), lines, path, 2, std::string(header[1]).c_str());
}

/// Reads a headerless comma-separated matrix; every row must have the same width.
inline Matrix read_matrix(const std::string& path) {
  std::ifstream in = detail::open_for_read(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) row.push_back(detail::parse_double(fields[c], path, lineno, c + 1));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InputError(detail::where(path, lineno, 1) + "row has " + std::to_string(row.size()) +
                       " entries, expected " + std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(path + ": empty matrix");
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return out;
}

/// Reads a cost matrix and reports the first negative or non-finite cell by line and column.
inline CostMatrix read_cost(const std::string& path) {
  Matrix c = read_matrix(path);
  for (Index i = 0; i < c.rows(); ++i) {
    for (Index j = 0; j < c.cols(); ++j) {
      if (!std::isfinite(c(i, j)) || c(i, j) < 0.0) {
        throw InputError(detail::where(path, static_cast<std::size_t>(i) + 1, static_cast<std::size_t>(j) + 1) +
                         "cost entry must be finite and >= 0, got " + detail::format_double(c(i, j)));
      }
    }
  }
  return CostMatrix(std::move(c));
}

inline void write_matrix(const std::string& path, const Matrix& m) {
  std::ofstream out = detail::open_for_write(path);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << detail::format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw InputError(path + ": write failed");
}

inline void write_measures(const std::string& path, const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  std::ofstream out = detail::open_for_write(path);
  out << "index,mu,nu\n";
  const Index rows = std::max(mu.size(), nu.size());
  for (Index k = 0; k < rows; ++k) {
    out << k << ',';
    if (k < mu.size()) out << detail::format_double(mu[k]);
    out << ',';
    if (k < nu.size()) out << detail::format_double(nu[k]);
    out << '\n';
  }
  if (!out) throw InputError(path + ": write failed");
}

inline void write_measure(const std::string& path, const DiscreteMeasure& w, const std::string& name) {
  std::ofstream out = detail::open_for_write(path);
  out << "index," << name << '\n';
  for (Index k = 0; k < w.size(); ++k) out << k << ',' << detail::format_double(w[k]) << '\n';
  if (!out) throw InputError(path + ": write failed");
}

struct Problem {
  DiscreteMeasure mu;
  DiscreteMeasure nu;
  CostMatrix cost;
};

inline Problem check_problem(DiscreteMeasure mu, DiscreteMeasure nu, CostMatrix cost, const std::string& cost_path) {
  if (cost.rows() != mu.size() || cost.cols() != nu.size()) {
    throw InputError(cost_path + ": cost is " + std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()) +
                     " but measures have sizes " + std::to_string(mu.size()) + " and " + std::to_string(nu.size()));
  }
  return {std::move(mu), std::move(nu), std::move(cost)};
}

/// Loads (mu, nu, C) from a combined measure file and a cost file.
inline Problem load_problem(const std::string& measures_path, const std::string& cost_path) {
  auto [mu, nu] = read_measures(measures_path);
  return check_problem(std::move(mu), std::move(nu), read_cost(cost_path), cost_path);
}

/// Loads (mu, nu, C) from separate measure files.
inline Problem load_problem(const std::string& mu_path, const std::string& nu_path, const std::string& cost_path) {
  return check_problem(read_measure(mu_path), read_measure(nu_path), read_cost(cost_path), cost_path);
}

}  // namespace screenkhorn::bench
