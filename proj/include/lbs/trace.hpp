#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "lbs/core.hpp"
#include "lbs/errors.hpp"

namespace lbs {

enum class Branch { learned, fallback, model };

inline const char* branch_name(Branch b) {
  switch (b) {
    case Branch::learned: return "learned";
    case Branch::fallback: return "fallback";
    case Branch::model: return "model";
  }
  return "?";
}

struct TraceRow {
  std::size_t iter = 0;
  double psi = 0.0;  // Psi(x^{iter})
  double step_norm2 = 0.0;
  std::vector<double> block_step_norm2;  // ||v_n - x_n^t||^2 per block
  std::vector<bool> roc;                 // empty for baselines
  std::vector<double> roc_error;         // ||e_{u_n}|| per block
  std::vector<double> roc_threshold;     // c ||u_n - x_n^t|| per block
  std::vector<Branch> branch;
  std::vector<char> ucus_choice;  // 'w' or 'v'
  double iter_error = 0.0;        // log10 ||x^{t+1}-x^t|| / ||x^t||
  double rec_error = std::numeric_limits<double>::quiet_NaN();
  double time_ms = 0.0;
  std::vector<double> extras;  // values for SolverTrace::extra_columns
};

/// Per-iteration record shared by every solver in the library.
struct SolverTrace {
  std::string solver;
  std::vector<std::string> block_labels;
  std::vector<std::string> extra_columns;
  double psi0 = 0.0;
  std::vector<TraceRow> rows;
  /// Per iteration and block: psi_n(x^t) - psi_n(v) - M ||v - x^t||^2 for
  /// fallback blocks (NaN elsewhere). Filled by the learned splitting solver.
  std::vector<std::vector<double>> sufficient_descent_slack;
  std::size_t descent_violations = 0;
  bool converged = false;

  std::size_t iterations() const noexcept { return rows.size(); }
};

namespace detail {

/// Shortest text that parses back to the same double.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T, class Fn>
std::string join(const std::vector<T>& items, char sep, Fn&& fn) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += fn(items[i]);
  }
  return out;
}

}  // namespace detail

/// CSV with the fixed leading columns
/// iter,psi,step_norm2,roc_blocks,branch,ucus_choice,iter_error,rec_error,time_ms
/// followed by one step_norm2_<label> column per block and any extra columns.
/// roc_blocks is a bitstring (1 = satisfied); multi-block branch and ucus
/// fields are ';'-separated. time_ms is written only when with_timing is set,
/// otherwise it is 0 so that traces are byte-reproducible.
inline void write_trace_csv(const SolverTrace& trace, std::ostream& out, bool with_timing = false) {
  out << "iter,psi,step_norm2,roc_blocks,branch,ucus_choice,iter_error,rec_error,time_ms";
  for (const auto& l : trace.block_labels) out << ",step_norm2_" << l;
  for (const auto& c : trace.extra_columns) out << ',' << c;
  out << '\n';
  for (const auto& r : trace.rows) {
    std::string roc;
    for (bool b : r.roc) roc += b ? '1' : '0';
    out << r.iter << ',' << detail::fmt_double(r.psi) << ',' << detail::fmt_double(r.step_norm2)
        << ',' << roc << ','
        << detail::join(r.branch, ';', [](Branch b) { return std::string(branch_name(b)); })
        << ',' << detail::join(r.ucus_choice, ';', [](char c) { return std::string(1, c); })
        << ',' << detail::fmt_double(r.iter_error) << ','
        << (std::isnan(r.rec_error) ? std::string() : detail::fmt_double(r.rec_error)) << ','
        << (with_timing ? detail::fmt_double(r.time_ms) : std::string("0"));
    for (double v : r.block_step_norm2) out << ',' << detail::fmt_double(v);
    for (double v : r.extras) out << ',' << detail::fmt_double(v);
    out << '\n';
  }
}

inline std::string trace_csv(const SolverTrace& trace, bool with_timing = false) {
  std::ostringstream os;
  write_trace_csv(trace, os, with_timing);
  return os.str();
}

inline void save_trace_csv(const SolverTrace& trace, const std::string& path,
                           bool with_timing = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write trace " + path);
  write_trace_csv(trace, out, with_timing);
}

/// log10 of the relative distance, or NaN without a reference.
inline double log_relative_error(const DenseVector& x, const DenseVector* reference) {
  if (!reference) return std::numeric_limits<double>::quiet_NaN();
  const double base = norm(*reference);
  const double d = norm(x - *reference);
  return std::log10(base > 0.0 ? d / base : d);
}

}  // namespace lbs
