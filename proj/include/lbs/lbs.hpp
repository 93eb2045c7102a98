#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lbs/bregman.hpp"
#include "lbs/problem.hpp"
#include "lbs/splitting.hpp"
#include "lbs/trace.hpp"

namespace lbs {

struct LbsConfig {
  /// ROC constant; descent is only claimed when c < mu / (2 lambda^t).
  double c = 1e-3;
  Schedule lambda = 1.0;
  /// Step of the smooth operator and of prox_{rho g_n}; must satisfy rho < 1/L.
  double rho = 0.5;
  Schedule gamma = 1.0;
  double tol = 1e-4;
  std::size_t max_iters = 500;
  /// Treat an increase of Psi beyond descent_slack as a SolverFault.
  bool descent_check = true;
  /// Relative slack (scaled by max(1, |Psi|)) for the descent check.
  double descent_slack = 1e-10;
  /// Accept a learned candidate only when it also does not raise psi_n.
  bool require_block_descent = true;
};

/// Psi(x) + (1/lambda) Delta_h(x, x_prev)
inline double penalized_objective(const SplitProblem& problem, const BlockVector& x,
                                  const BlockVector& x_prev, double lambda) {
  if (!(lambda > 0.0)) throw DomainError("penalized_objective: lambda must be > 0");
  return problem.psi(x) + bregman(problem.geometry, x, x_prev) / lambda;
}

/// Gradient step on f + (1/lambda) Delta_h(., anchor):
/// x - rho (grad f(x) + (grad h(x) - grad h(anchor)) / lambda).
inline BlockVector t_f_step(const SplitProblem& problem, const BlockVector& x,
                            const BlockVector& anchor, double lambda, double rho) {
  if (!(lambda > 0.0) || !(rho > 0.0)) throw DomainError("t_f_step: lambda and rho must be > 0");
  BlockVector dir = axpy(1.0 / lambda, bregman_grad_x(problem.geometry, x, anchor), problem.f_grad(x));
  return axpy(-rho, dir, x);
}

struct RocResult {
  bool satisfied = false;
  double error_norm = 0.0;
  double threshold = 0.0;  // c ||u_n - x_n^t||
};

/// Relaxed optimality condition for block n.
///
/// `point` is the assembled point {x_{<n}^{t+1}, u_n, x_{>n}^t}; u_n was
/// produced as prox_{rho g_n}(z_n). The optimality error is
///   e = (z_n - u_n)/rho + grad_n f(point) + (grad h_n(u_n) - grad h_n(x_n^t))/lambda
/// and the condition holds when ||e|| <= c ||u_n - x_n^t||.
inline RocResult roc_check(const SplitProblem& problem, const BlockVector& point,
                           const DenseVector& z_n, const DenseVector& x_prev_n, std::size_t n,
                           double lambda, double c, double rho) {
  const DenseVector& u_n = point.block(n);
  DenseVector e = problem.g.at(n).subgrad_at_prox(z_n, rho, u_n);
  e += problem.f_grad_block(point, n);
  e += (1.0 / lambda) * (problem.geometry.h_grad_block(u_n, n) -
                         problem.geometry.h_grad_block(x_prev_n, n));
  RocResult r;
  r.error_norm = norm(e);
  r.threshold = c * norm(u_n - x_prev_n);
  r.satisfied = r.error_norm <= r.threshold;
  return r;
}

struct UcusResult {
  DenseVector value;
  char choice = 'w';  // 'w' relaxed point, 'v' candidate
  double psi = 0.0;   // psi_n at the returned value
};

/// Relaxation w = x_n^t - gamma (x_n^t - v_n) followed by a direct comparison
/// of psi_n(w) and psi_n(v_n). `point` carries v_n in block n.
inline UcusResult ucus(const SplitProblem& problem, const BlockVector& point,
                       const DenseVector& x_prev_n, double gamma, std::size_t n) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("ucus: gamma must lie in (0, 1]");
  const DenseVector& v = point.block(n);
  const double psi_v = problem.psi_block(point, n);
  if (gamma == 1.0) return {v, 'w', psi_v};
  DenseVector w = x_prev_n - gamma * (x_prev_n - v);
  BlockVector wp = point;
  wp.set_block(n, w);
  const double psi_w = problem.psi_block(wp, n);
  if (psi_w <= psi_v) return {std::move(w), 'w', psi_w};
  return {v, 'v', psi_v};
}

/// M = max{mu/(2 lambda) - c, 1/(2 rho) - L/2}
inline double sufficient_descent_constant(double mu, double lambda, double c, double rho,
                                          double lipschitz) {
  return std::max(mu / (2.0 * lambda) - c, 1.0 / (2.0 * rho) - lipschitz / 2.0);
}

/// Checks the hyperparameter conditions under which monotone descent is claimed.
inline void check_lbs_config(const SplitProblem& problem, const LbsConfig& cfg, std::size_t t) {
  const double lambda = cfg.lambda(t);
  const double gamma = cfg.gamma(t);
  if (!(lambda > 0.0)) throw DomainError("lbs: lambda^t must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("lbs: gamma^t must lie in (0, 1]");
  if (!(cfg.rho > 0.0)) throw DomainError("lbs: rho must be > 0");
  if (!(cfg.c >= 0.0)) throw DomainError("lbs: c must be >= 0");
  if (cfg.descent_check) {
    const double mu = problem.geometry.mu();
    if (!(cfg.c < mu / (2.0 * lambda)))
      throw DomainError("lbs: descent requires c < mu/(2 lambda) = " +
                        std::to_string(mu / (2.0 * lambda)));
    if (!(cfg.rho < 1.0 / problem.lipschitz))
      throw DomainError("lbs: descent requires rho < 1/L = " + std::to_string(1.0 / problem.lipschitz));
  }
}

/// Learnable Bregman splitting.
///
/// Each outer iteration applies T_d once to the whole point, takes the
/// Bregman-penalized gradient step z = T_f(T_d(x^t)), and then sweeps the
/// blocks in order. Block n proposes u_n = prox_{rho g_n}(z_n); if u_n passes
/// the ROC (and, with require_block_descent, does not raise psi_n) it is the
/// candidate, otherwise the model step prox_{rho g_n}(x_n^t - rho grad_n f)
/// at the partially updated point is used. The candidate then goes through
/// ucus.
inline SolveResult lbs_solve(const SplitProblem& problem, const BlockVector& x0,
                             const DenoiserOp& t_d, const LbsConfig& cfg,
                             const DenseVector* truth = nullptr) {
  problem.validate(x0);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t nb = x0.num_blocks();
  const double mu = problem.geometry.mu();

  SolveResult result{x0, {}};
  SolverTrace& trace = result.trace;
  trace.solver = "lbs";
  for (std::size_t n = 0; n < nb; ++n) trace.block_labels.push_back(x0.label(n));

  BlockVector x = x0;
  double psi_x = problem.psi(x);
  trace.psi0 = psi_x;
  if (!std::isfinite(psi_x)) throw NumericalFault("lbs: Psi(x0) is not finite");

  for (std::size_t t = 0; t < cfg.max_iters; ++t) {
    check_lbs_config(problem, cfg, t);
    const double lambda = cfg.lambda(t);
    const double gamma = cfg.gamma(t);
    const double m_const = sufficient_descent_constant(mu, lambda, cfg.c, cfg.rho, problem.lipschitz);

    const BlockVector d = t_d(x);
    x.require_same(d, "T_d output");
    if (!d.all_finite()) throw NumericalFault("lbs: T_d produced non-finite values");
    const BlockVector z = t_f_step(problem, d, x, lambda, cfg.rho);

    TraceRow row;
    row.iter = t + 1;
    std::vector<double> slack(nb, std::numeric_limits<double>::quiet_NaN());
    BlockVector cur = x;  // {x_{<n}^{t+1}, x_{>=n}^t}
    for (std::size_t n = 0; n < nb; ++n) {
      const DenseVector& xn = x.block(n);
      const double psi_cur = problem.psi_block(cur, n);

      BlockVector trial = cur;
      trial.set_block(n, problem.g[n].prox(z.block(n), cfg.rho));
      const RocResult roc = roc_check(problem, trial, z.block(n), xn, n, lambda, cfg.c, cfg.rho);
      bool accept = roc.satisfied;
      if (accept && cfg.require_block_descent) accept = problem.psi_block(trial, n) <= psi_cur;

      DenseVector v;
      if (accept) {
        v = trial.block(n);
        row.branch.push_back(Branch::learned);
      } else {
        // T_f at the mixed point has a vanishing Bregman term in block n
        v = problem.g[n].prox(xn - cfg.rho * problem.f_grad_block(cur, n), cfg.rho);
        row.branch.push_back(Branch::fallback);
      }
      const double vstep = norm2(v - xn);
      row.roc.push_back(roc.satisfied);
      row.roc_error.push_back(roc.error_norm);
      row.roc_threshold.push_back(roc.threshold);
      row.block_step_norm2.push_back(vstep);

      BlockVector cand = cur;
      cand.set_block(n, std::move(v));
      if (!accept) slack[n] = psi_cur - problem.psi_block(cand, n) - m_const * vstep;
      UcusResult u = ucus(problem, cand, xn, gamma, n);
      row.ucus_choice.push_back(u.choice);
      cur.set_block(n, std::move(u.value));
    }

    if (!cur.all_finite()) throw NumericalFault("lbs: non-finite iterate at iteration " + std::to_string(t + 1));
    const double psi_next = problem.psi(cur);
    if (psi_next > psi_x + cfg.descent_slack * std::max(1.0, std::abs(psi_x))) {
      ++trace.descent_violations;
      if (cfg.descent_check)
        throw SolverFault("lbs: Psi increased from " + detail::fmt_double(psi_x) + " to " +
                              detail::fmt_double(psi_next) + "; check c, rho and lambda",
                          t + 1);
    }

    const double rel = relative_change(cur, x);
    row.psi = psi_next;
    row.step_norm2 = block_norm2(cur - x);
    row.iter_error = std::log10(rel);
    row.rec_error = log_relative_error(problem.image_of(cur), truth);
    row.time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    trace.rows.push_back(std::move(row));
    trace.sufficient_descent_slack.push_back(std::move(slack));

    x = std::move(cur);
    psi_x = psi_next;
    if (rel <= cfg.tol) {
      trace.converged = true;
      break;
    }
  }
  result.solution = std::move(x);
  return result;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct TraceSummary {
  double cumulative_step_norm2 = 0.0;        // sum_t ||x^{t+1} - x^t||^2
  double cumulative_candidate_norm2 = 0.0;   // sum_t sum_n ||v_n - x_n^t||^2
  std::vector<std::string> roc_pattern;      // one bitstring per iteration
  std::size_t fallback_count = 0;            // block-level fallback activations
  std::size_t monotone_violations = 0;
  double first_decade_mean = 0.0;            // mean step_norm2 over the first 10 rows
  double last_decade_mean = 0.0;             // ... and over the last 10
  std::size_t sufficient_descent_violations = 0;

  /// Per row: fraction of block updates that took the fallback branch.
  std::vector<double> fallback_per_iteration;
};

inline TraceSummary trace_diagnostics(const SolverTrace& trace, double slack = 1e-10) {
  TraceSummary s;
  double prev = trace.psi0;
  for (const TraceRow& r : trace.rows) {
    s.cumulative_step_norm2 += r.step_norm2;
    for (double v : r.block_step_norm2) s.cumulative_candidate_norm2 += v;
    std::string bits;
    for (bool b : r.roc) bits += b ? '1' : '0';
    s.roc_pattern.push_back(std::move(bits));
    std::size_t fb = 0;
    for (Branch b : r.branch) fb += b == Branch::fallback;
    s.fallback_count += fb;
    s.fallback_per_iteration.push_back(r.branch.empty() ? 0.0
                                                        : static_cast<double>(fb) / r.branch.size());
    if (r.psi > prev + slack * std::max(1.0, std::abs(prev))) ++s.monotone_violations;
    prev = r.psi;
  }
  const std::size_t n = trace.rows.size();
  const std::size_t k = std::min<std::size_t>(10, n);
  for (std::size_t i = 0; i < k; ++i) {
    s.first_decade_mean += trace.rows[i].step_norm2 / static_cast<double>(k);
    s.last_decade_mean += trace.rows[n - k + i].step_norm2 / static_cast<double>(k);
  }
  for (std::size_t t = 0; t < trace.sufficient_descent_slack.size(); ++t) {
    const double scale = std::max(1.0, std::abs(t == 0 ? trace.psi0 : trace.rows[t - 1].psi));
    for (double v : trace.sufficient_descent_slack[t])
      if (!std::isnan(v) && v < -slack * scale) ++s.sufficient_descent_violations;
  }
  return s;
}

/// Mean fallback fraction over the iteration window [lo, hi) given as
/// fractions of the run length (e.g. 0.9, 1.0 for the last 10%).
inline double fallback_fraction(const TraceSummary& s, double lo, double hi) {
  const std::size_t n = s.fallback_per_iteration.size();
  if (n == 0) return 0.0;
  auto b = static_cast<std::size_t>(std::floor(lo * static_cast<double>(n)));
  auto e = static_cast<std::size_t>(std::ceil(hi * static_cast<double>(n)));
  e = std::min(std::max(e, b + 1), n);
  b = std::min(b, e - 1);
  double sum = 0.0;
  for (std::size_t i = b; i < e; ++i) sum += s.fallback_per_iteration[i];
  return sum / static_cast<double>(e - b);
}

}  // namespace lbs
