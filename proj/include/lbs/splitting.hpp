#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "lbs/core.hpp"
#include "lbs/linear_ops.hpp"
#include "lbs/problem.hpp"
#include "lbs/rng.hpp"
#include "lbs/trace.hpp"

namespace lbs {

/// Per-iteration scalar sequence (relaxation gamma^t, penalty lambda^t, ...).
/// Iterations are numbered from 0.
class Schedule {
 public:
  Schedule(double constant = 1.0)  // NOLINT: implicit from a constant is intended
      : fn_([constant](std::size_t) { return constant; }) {}
  explicit Schedule(std::function<double(std::size_t)> fn) : fn_(std::move(fn)) {}

  double operator()(std::size_t t) const { return fn_(t); }

 private:
  std::function<double(std::size_t)> fn_;
};

struct FixedPointOperator {
  std::string name;
  BlockMap apply;

  BlockVector operator()(const BlockVector& x) const { return apply(x); }
};

struct SolverConfig {
  Schedule gamma = 1.0;
  double rho = 1.0;
  std::size_t max_iters = 1000;
  double tol = 1e-4;
  /// When set, rho < 1/lipschitz is enforced before solving.
  double lipschitz = 0.0;
};

struct SolveResult {
  BlockVector solution;
  SolverTrace trace;
};

/// One relaxed Krasnoselskii-Mann step (1 - gamma) x + gamma T(x).
inline BlockVector km_step(const FixedPointOperator& T, const BlockVector& x, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("km_step: gamma must lie in (0, 1]");
  if (gamma == 1.0) return T(x);
  return axpy(gamma, T(x) - x, x);
}

/// x -> prox_{rho g}(x - rho grad f(x))
inline FixedPointOperator fbs_operator(BlockMap grad_f,
                                       std::function<BlockVector(const BlockVector&, double)> prox_g,
                                       double rho) {
  if (!(rho > 0.0)) throw DomainError("fbs_operator: rho must be > 0");
  return {"fbs", [grad_f = std::move(grad_f), prox_g = std::move(prox_g), rho](const BlockVector& x) {
            return prox_g(axpy(-rho, grad_f(x), x), rho);
          }};
}

/// R_G o R_F with R = 2 prox - I.
inline FixedPointOperator prs_operator(std::function<BlockVector(const BlockVector&, double)> prox_f,
                                       std::function<BlockVector(const BlockVector&, double)> prox_g,
                                       double rho) {
  if (!(rho > 0.0)) throw DomainError("prs_operator: rho must be > 0");
  return {"prs", [prox_f = std::move(prox_f), prox_g = std::move(prox_g), rho](const BlockVector& z) {
            const BlockVector rf = axpy(2.0, prox_f(z, rho), -1.0 * z);
            return axpy(2.0, prox_g(rf, rho), -1.0 * rf);
          }};
}

/// DRS is the KM iteration over the PRS operator with gamma = 1/2.
inline FixedPointOperator drs_operator(std::function<BlockVector(const BlockVector&, double)> prox_f,
                                       std::function<BlockVector(const BlockVector&, double)> prox_g,
                                       double rho) {
  auto prs = prs_operator(std::move(prox_f), std::move(prox_g), rho);
  return {"drs", [prs](const BlockVector& z) { return km_step(prs, z, 0.5); }};
}

// ---------------------------------------------------------------------------
// Lipschitz estimation

struct LipschitzEstimate {
  double spectral = 0.0;   // largest eigenvalue of the normal operator
  double lipschitz = 0.0;  // weight * spectral * safety
  std::size_t iterations = 0;
};

/// Power iteration on a symmetric positive semidefinite operator (A^T A).
inline LipschitzEstimate estimate_lipschitz(const BlockMap& normal_op, const BlockVector& like,
                                            double weight = 1.0, double safety = 1.05,
                                            std::uint64_t seed = 0x5eed, double rel_tol = 1e-6,
                                            std::size_t max_iters = 10000) {
  SeededRng rng(seed);
  BlockVector v = BlockVector::zeros_like(like);
  for (std::size_t n = 0; n < v.num_blocks(); ++n)
    v.set_block(n, uniform_vector(rng, like.block(n).shape()));
  v *= 1.0 / block_norm(v);
  double prev = 0.0;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    BlockVector w = normal_op(v);
    const double est = block_norm(w);  // ||A^T A v|| >= v^T A^T A v for unit v
    if (!std::isfinite(est)) throw NumericalFault("estimate_lipschitz: non-finite iterate");
    if (est == 0.0) return {0.0, 0.0, it};
    if (it > 1 && std::abs(est - prev) <= rel_tol * est)
      return {est, weight * est * safety, it};
    prev = est;
    v = (1.0 / est) * std::move(w);
  }
  throw NumericalFault("estimate_lipschitz: power iteration did not converge in " +
                       std::to_string(max_iters) + " iterations");
}

inline LipschitzEstimate estimate_lipschitz(const LinearMap& a, double weight = 1.0,
                                            double safety = 1.05, std::uint64_t seed = 0x5eed) {
  BlockMap op = [&a](const BlockVector& x) { return BlockVector{a.normal(x.block(0))}; };
  return estimate_lipschitz(op, BlockVector{DenseVector(a.in_shape, 0.0)}, weight, safety, seed);
}

// ---------------------------------------------------------------------------
// Baseline solvers

namespace detail {

class TraceRecorder {
 public:
  TraceRecorder(const SplitProblem& problem, const BlockVector& x0, const DenseVector* truth,
                std::string solver)
      : problem_(problem), truth_(truth), start_(std::chrono::steady_clock::now()) {
    trace_.solver = std::move(solver);
    for (std::size_t n = 0; n < x0.num_blocks(); ++n) trace_.block_labels.push_back(x0.label(n));
    trace_.psi0 = problem.psi(x0);
  }

  /// Appends a row; returns the relative change used by the stopping rule.
  double record(const BlockVector& next, const BlockVector& prev, std::vector<double> extras = {}) {
    TraceRow row;
    row.iter = trace_.rows.size() + 1;
    row.psi = problem_.psi(next);
    for (std::size_t n = 0; n < next.num_blocks(); ++n)
      row.block_step_norm2.push_back(norm2(next.block(n) - prev.block(n)));
    for (double s : row.block_step_norm2) row.step_norm2 += s;
    row.branch.assign(1, Branch::model);
    row.ucus_choice.assign(1, '-');
    const double rel = relative_change(next, prev);
    row.iter_error = std::log10(rel);
    row.rec_error = log_relative_error(problem_.image_of(next), truth_);
    row.time_ms = elapsed_ms();
    row.extras = std::move(extras);
    trace_.rows.push_back(std::move(row));
    if (!next.all_finite())
      throw NumericalFault(trace_.solver + ": non-finite iterate at iteration " +
                           std::to_string(trace_.rows.size()));
    return rel;
  }

  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

  SolverTrace& trace() { return trace_; }

 private:
  const SplitProblem& problem_;
  const DenseVector* truth_;
  std::chrono::steady_clock::time_point start_;
  SolverTrace trace_;
};

inline void check_config(const SolverConfig& cfg, const char* who) {
  if (!(cfg.rho > 0.0)) throw DomainError(std::string(who) + ": rho must be > 0");
  if (cfg.lipschitz > 0.0 && !(cfg.rho < 1.0 / cfg.lipschitz))
    throw DomainError(std::string(who) + ": rho must be < 1/L for descent");
}

inline auto prox_g_of(const SplitProblem& p) {
  return [&p](const BlockVector& x, double rho) { return p.prox_g(x, rho); };
}

inline auto prox_f_of(const SplitProblem& p, const char* who) {
  if (!p.prox_f) throw DomainError(std::string(who) + " needs prox_f on the problem");
  return p.prox_f;
}

}  // namespace detail

/// Forward-backward splitting (proximal gradient when gamma = 1).
inline SolveResult fbs_solve(const SplitProblem& problem, const BlockVector& x0,
                             const SolverConfig& cfg, const DenseVector* truth = nullptr) {
  problem.validate(x0);
  detail::check_config(cfg, "fbs");
  const auto T = fbs_operator([&problem](const BlockVector& x) { return problem.f_grad(x); },
                              detail::prox_g_of(problem), cfg.rho);
  detail::TraceRecorder rec(problem, x0, truth, "fbs");
  BlockVector x = x0;
  for (std::size_t t = 0; t < cfg.max_iters; ++t) {
    BlockVector next = km_step(T, x, cfg.gamma(t));
    const double rel = rec.record(next, x);
    x = std::move(next);
    if (rel <= cfg.tol) {
      rec.trace().converged = true;
      break;
    }
  }
  return {std::move(x), std::move(rec.trace())};
}

/// Accelerated proximal gradient with function-value restart: whenever a
/// momentum step raises Psi, momentum is reset and a plain step is taken.
inline SolveResult fista_solve(const SplitProblem& problem, const BlockVector& x0,
                               const SolverConfig& cfg, const DenseVector* truth = nullptr) {
  problem.validate(x0);
  detail::check_config(cfg, "fista");
  const auto T = fbs_operator([&problem](const BlockVector& x) { return problem.f_grad(x); },
                              detail::prox_g_of(problem), cfg.rho);
  detail::TraceRecorder rec(problem, x0, truth, "fista");
  BlockVector x = x0, y = x0;
  double t_mom = 1.0;
  double psi_x = problem.psi(x);
  for (std::size_t k = 0; k < cfg.max_iters; ++k) {
    BlockVector next = T(y);
    double psi_next = problem.psi(next);
    if (psi_next > psi_x) {
      t_mom = 1.0;
      next = T(x);
      psi_next = problem.psi(next);
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
    y = axpy((t_mom - 1.0) / t_next, next - x, next);
    t_mom = t_next;
    const double rel = rec.record(next, x);
    x = std::move(next);
    psi_x = psi_next;
    if (rel <= cfg.tol) {
      rec.trace().converged = true;
      break;
    }
  }
  return {std::move(x), std::move(rec.trace())};
}

namespace detail {

inline SolveResult reflection_solve(const SplitProblem& problem, const BlockVector& x0,
                                    const SolverConfig& cfg, const DenseVector* truth,
                                    double gamma, const char* name) {
  problem.validate(x0);
  detail::check_config(cfg, name);
  auto prox_f = prox_f_of(problem, name);
  const auto T = prs_operator(prox_f, prox_g_of(problem), cfg.rho);
  TraceRecorder rec(problem, x0, truth, name);
  BlockVector z = x0;
  BlockVector x = x0;
  for (std::size_t t = 0; t < cfg.max_iters; ++t) {
    z = km_step(T, z, gamma);
    BlockVector next = prox_f(z, cfg.rho);
    const double rel = rec.record(next, x);
    x = std::move(next);
    if (rel <= cfg.tol) {
      rec.trace().converged = true;
      break;
    }
  }
  return {std::move(x), std::move(rec.trace())};
}

}  // namespace detail

/// Douglas-Rachford: KM with gamma = 1/2 over R_G o R_F; primal x = prox_f(z).
inline SolveResult drs_solve(const SplitProblem& problem, const BlockVector& x0,
                             const SolverConfig& cfg, const DenseVector* truth = nullptr) {
  return detail::reflection_solve(problem, x0, cfg, truth, 0.5, "drs");
}

/// Peaceman-Rachford: the same operator with gamma = 1.
inline SolveResult prs_solve(const SplitProblem& problem, const BlockVector& x0,
                             const SolverConfig& cfg, const DenseVector* truth = nullptr) {
  return detail::reflection_solve(problem, x0, cfg, truth, 1.0, "prs");
}

/// Scaled-form ADMM on min f(x) + g(z) s.t. x = z, i.e. DRS on the dual.
/// The reported iterate is z; primal and dual residuals are traced.
inline SolveResult admm_solve(const SplitProblem& problem, const BlockVector& x0,
                              const SolverConfig& cfg, const DenseVector* truth = nullptr) {
  problem.validate(x0);
  detail::check_config(cfg, "admm");
  auto prox_f = detail::prox_f_of(problem, "admm");
  detail::TraceRecorder rec(problem, x0, truth, "admm");
  rec.trace().extra_columns = {"primal_residual", "dual_residual"};
  BlockVector z = x0;
  BlockVector w = BlockVector::zeros_like(x0);
  for (std::size_t t = 0; t < cfg.max_iters; ++t) {
    const BlockVector x = prox_f(z - w, cfg.rho);
    BlockVector z_next = problem.prox_g(x + w, cfg.rho);
    w += x - z_next;
    const double primal = block_norm(x - z_next);
    const double dual = block_norm(z_next - z) / cfg.rho;
    const double rel = rec.record(z_next, z, {primal, dual});
    const double zn = block_norm(z_next);
    z = std::move(z_next);
    if (rel <= cfg.tol && primal <= cfg.tol * std::max(zn, 1e-12)) {
      rec.trace().converged = true;
      break;
    }
  }
  return {std::move(z), std::move(rec.trace())};
}

}  // namespace lbs
