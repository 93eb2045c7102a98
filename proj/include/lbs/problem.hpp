#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lbs/bregman.hpp"
#include "lbs/core.hpp"
#include "lbs/prox.hpp"

namespace lbs {

using BlockMap = std::function<BlockVector(const BlockVector&)>;

/// Composite model Psi(x) = f(x) + sum_n g_n(x_n) with a smooth f.
struct SplitProblem {
  std::function<double(const BlockVector&)> f_value;
  /// grad_n f at an assembled point.
  std::function<DenseVector(const BlockVector&, std::size_t)> f_grad_block;
  /// Optional full gradient; falls back to looping f_grad_block.
  BlockMap f_grad_all;
  std::vector<ProxFn> g;
  BregmanGeometry geometry = BregmanGeometry::uniform(1.0);
  /// Lipschitz modulus of grad f (already includes any safety factor).
  double lipschitz = 1.0;
  /// Optional prox_{rho f}, needed by the DRS/PRS/ADMM baselines.
  std::function<BlockVector(const BlockVector&, double)> prox_f;
  /// Optional map from the variable to the image it represents.
  std::function<DenseVector(const BlockVector&)> to_image;

  std::size_t num_blocks() const noexcept { return g.size(); }

  BlockVector f_grad(const BlockVector& x) const {
    if (f_grad_all) return f_grad_all(x);
    std::vector<DenseVector> blocks;
    for (std::size_t n = 0; n < x.num_blocks(); ++n) blocks.push_back(f_grad_block(x, n));
    return BlockVector(std::move(blocks), x.labels());
  }

  double g_value(const BlockVector& x) const {
    double s = 0.0;
    for (std::size_t n = 0; n < g.size(); ++n) s += g[n].value(x.block(n));
    return s;
  }

  /// Psi(x) = f(x) + sum_n g_n(x_n)
  double psi(const BlockVector& x) const { return f_value(x) + g_value(x); }

  /// psi_n(x) = f(x) + g_n(x_n): the block objective at an assembled point.
  double psi_block(const BlockVector& x, std::size_t n) const {
    return f_value(x) + g.at(n).value(x.block(n));
  }

  BlockVector prox_g(const BlockVector& x, double rho) const {
    BlockVector out = x;
    for (std::size_t n = 0; n < g.size(); ++n) out.set_block(n, g[n].prox(x.block(n), rho));
    return out;
  }

  DenseVector image_of(const BlockVector& x) const {
    return to_image ? to_image(x) : x.block(0);
  }

  void validate(const BlockVector& x) const {
    if (!f_value || !f_grad_block) throw DimensionError("SplitProblem: f is not set");
    if (g.size() != x.num_blocks())
      throw DimensionError("SplitProblem: " + std::to_string(g.size()) + " g_n for " +
                           std::to_string(x.num_blocks()) + " blocks");
    if (geometry.num_blocks() != x.num_blocks())
      throw DimensionError("SplitProblem: geometry block count differs from variable");
  }
};

/// Pluggable operator T_d applied to the full point once per outer iteration.
struct DenoiserOp {
  std::string name;
  BlockMap apply;
  std::map<std::string, std::string> metadata;

  BlockVector operator()(const BlockVector& x) const { return apply(x); }
};

inline DenoiserOp identity_operator() {
  return {"identity", [](const BlockVector& x) { return x; }, {}};
}

}  // namespace lbs
