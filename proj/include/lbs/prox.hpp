#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "lbs/core.hpp"

namespace lbs {

// ---------------------------------------------------------------------------
// Scalar l_p^p shrinkage, 0 < p <= 1

inline void check_prox_args(double rho, double p) {
  if (!(rho > 0.0)) throw DomainError("prox: rho must be > 0");
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("prox: p must lie in (0, 1]");
}

/// Magnitude below which prox_{rho |.|^p} returns exactly zero.
inline double lp_threshold(double rho, double p) {
  check_prox_args(rho, p);
  if (p == 1.0) return rho;
  const double a = 2.0 * rho * (1.0 - p);
  return std::pow(a, 1.0 / (2.0 - p)) + rho * p * std::pow(a, (p - 1.0) / (2.0 - p));
}

/// Smallest magnitude a nonzero output can have (p < 1).
inline double lp_nonzero_floor(double rho, double p) {
  check_prox_args(rho, p);
  if (p == 1.0) return 0.0;
  return std::pow(2.0 * rho * (1.0 - p), 1.0 / (2.0 - p));
}

/// |y|^p + (y - x)^2 / (2 rho)
inline double lp_prox_objective(double y, double x, double rho, double p) {
  return std::pow(std::abs(y), p) + (y - x) * (y - x) / (2.0 * rho);
}

/// Global minimizer of |y|^p + (y - x)^2 / (2 rho).
///
/// Below lp_threshold the answer is 0. Above it, the largest root of
/// p y^{p-1} + (y - |x|)/rho = 0 is found by Newton's method started at |x|
/// (the derivative is convex and increasing there, so the iterates decrease
/// monotonically onto the root) with a bisection fallback, and then compared
/// against y = 0. Ties resolve to 0.
inline double prox_lp_scalar(double x, double rho, double p) {
  check_prox_args(rho, p);
  const double ax = std::abs(x);
  if (p == 1.0) return std::copysign(std::max(ax - rho, 0.0), x);
  if (ax <= lp_threshold(rho, p)) return 0.0;

  // phi'(y) on y > 0 is convex beyond the inflection point
  const double inflection = std::pow(rho * p * (1.0 - p), 1.0 / (2.0 - p));
  auto dphi = [&](double y) { return p * std::pow(y, p - 1.0) + (y - ax) / rho; };
  auto ddphi = [&](double y) { return p * (p - 1.0) * std::pow(y, p - 2.0) + 1.0 / rho; };

  double lo = inflection, hi = ax;
  double y = ax;
  for (int it = 0; it < 100; ++it) {
    const double g = dphi(y);
    if (g > 0.0)
      hi = y;
    else
      lo = y;
    double next = y - g / ddphi(y);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - y) <= 1e-15 * std::max(1.0, y)) {
      y = next;
      break;
    }
    y = next;
  }
  if (lp_prox_objective(y, ax, rho, p) < lp_prox_objective(0.0, ax, rho, p))
    return std::copysign(y, x);
  return 0.0;
}

// ---------------------------------------------------------------------------
// Proximable functions

/// Extended-real function g with its proximal map prox_{rho g}.
struct ProxFn {
  std::string name;
  std::function<double(const DenseVector&)> value;
  std::function<DenseVector(const DenseVector&, double)> prox;

  /// Element of dg(u) at u = prox_{rho g}(x), realized as (x - u) / rho.
  DenseVector subgrad_at_prox(const DenseVector& x, double rho, const DenseVector& u) const {
    if (!(rho > 0.0)) throw DomainError("subgrad_at_prox: rho must be > 0");
    return (1.0 / rho) * (x - u);
  }
};

inline DenseVector prox_lp(const DenseVector& x, double rho, double p) {
  check_prox_args(rho, p);
  return map(x, [&](double v) { return prox_lp_scalar(v, rho, p); });
}

inline DenseVector project_box(const DenseVector& x, double lo = 0.0, double hi = 1.0) {
  return map(x, [&](double v) { return std::clamp(v, lo, hi); });
}

/// weight * sum_i |x_i|^p
inline ProxFn lp_power(double p, double weight = 1.0) {
  check_prox_args(1.0, p);
  if (!(weight > 0.0)) throw DomainError("lp_power: weight must be > 0");
  ProxFn g;
  g.name = "lp(p=" + std::to_string(p) + ")";
  g.value = [p, weight](const DenseVector& x) {
    double s = 0.0;
    for (double v : x) s += std::pow(std::abs(v), p);
    return weight * s;
  };
  g.prox = [p, weight](const DenseVector& x, double rho) { return prox_lp(x, rho * weight, p); };
  return g;
}

/// Indicator of {lo <= x_i <= hi}; its prox is the clamp for every rho.
inline ProxFn box_indicator(double lo = 0.0, double hi = 1.0) {
  ProxFn g;
  g.name = "box";
  g.value = [lo, hi](const DenseVector& x) {
    for (double v : x)
      if (v < lo || v > hi) return std::numeric_limits<double>::infinity();
    return 0.0;
  };
  g.prox = [lo, hi](const DenseVector& x, double) { return project_box(x, lo, hi); };
  return g;
}

inline ProxFn zero_fn() {
  ProxFn g;
  g.name = "zero";
  g.value = [](const DenseVector&) { return 0.0; };
  g.prox = [](const DenseVector& x, double) { return x; };
  return g;
}

}  // namespace lbs
