#pragma once

#include <algorithm>
#include <vector>

#include "lbs/core.hpp"

namespace lbs {

/// Quadratic reference function h(x) = 1/2 sum_n mu_n ||x_n||^2 (a diagonal
/// Mahalanobis norm). Its Bregman distance is 1/2 sum_n mu_n ||x_n - y_n||^2
/// and its strong-convexity modulus is min_n mu_n.
class BregmanGeometry {
 public:
  explicit BregmanGeometry(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) throw DimensionError("BregmanGeometry needs at least one weight");
    for (double w : weights_)
      if (!(w > 0.0)) throw DomainError("Bregman weights must be positive");
  }

  /// Same weight on each of n blocks (A = mu I).
  static BregmanGeometry uniform(double mu, std::size_t n = 1) {
    return BregmanGeometry(std::vector<double>(n, mu));
  }

  const std::vector<double>& weights() const noexcept { return weights_; }
  double weight(std::size_t n) const { return weights_.at(n); }
  double mu() const { return *std::min_element(weights_.begin(), weights_.end()); }
  std::size_t num_blocks() const noexcept { return weights_.size(); }

  double h_value(const BlockVector& x) const {
    check(x);
    double s = 0.0;
    for (std::size_t n = 0; n < x.num_blocks(); ++n) s += 0.5 * weights_[n] * norm2(x.block(n));
    return s;
  }

  DenseVector h_grad_block(const DenseVector& xn, std::size_t n) const {
    return weights_.at(n) * xn;
  }

  BlockVector h_grad(const BlockVector& x) const {
    check(x);
    BlockVector g = x;
    for (std::size_t n = 0; n < x.num_blocks(); ++n) g.mutable_block(n) *= weights_[n];
    return g;
  }

 private:
  void check(const BlockVector& x) const {
    if (x.num_blocks() != weights_.size())
      throw DimensionError("geometry has " + std::to_string(weights_.size()) +
                           " weights but point has " + std::to_string(x.num_blocks()) + " blocks");
  }

  std::vector<double> weights_;
};

/// Delta_h(x, y) = h(x) - h(y) - <grad h(y), x - y>, evaluated by the
/// general formula rather than the quadratic closed form.
inline double bregman(const BregmanGeometry& geom, const BlockVector& x, const BlockVector& y) {
  x.require_same(y, "bregman");
  const double d = geom.h_value(x) - geom.h_value(y) - inner(geom.h_grad(y), x - y);
  return std::max(d, 0.0);
}

/// Gradient of Delta_h(., y) at x: grad h(x) - grad h(y).
inline BlockVector bregman_grad_x(const BregmanGeometry& geom, const BlockVector& x,
                                  const BlockVector& y) {
  x.require_same(y, "bregman_grad_x");
  return geom.h_grad(x) - geom.h_grad(y);
}

}  // namespace lbs
