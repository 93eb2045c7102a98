#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lbs/denoiser.hpp"
#include "lbs/imaging.hpp"
#include "lbs/lbs.hpp"
#include "lbs/synthetic.hpp"

namespace lbs {

struct SelftestItem {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestReport {
  std::vector<SelftestItem> items;

  bool all_passed() const {
    for (const auto& i : items)
      if (!i.passed) return false;
    return true;
  }

  std::string text() const {
    std::ostringstream os;
    for (const auto& i : items) os << (i.passed ? "PASS " : "FAIL ") << i.name << ": " << i.detail << '\n';
    std::size_t ok = 0;
    for (const auto& i : items) ok += i.passed;
    os << ok << "/" << items.size() << " checks passed\n";
    return os.str();
  }
};

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// |<A x, y> - <x, A* y>| / (||A x|| ||y|| + ||x|| ||A* y||)
inline double adjoint_gap(const LinearMap& a, SeededRng& rng) {
  const DenseVector x = uniform_vector(rng, a.in_shape, -1.0, 1.0);
  const DenseVector y = uniform_vector(rng, a.out_shape, -1.0, 1.0);
  const DenseVector ax = a.forward(x), aty = a.adjoint(y);
  return std::abs(inner(ax, y) - inner(x, aty)) / (norm(ax) * norm(y) + norm(x) * norm(aty));
}

/// Largest relative central-difference error over `probes` random coordinates of every block.
inline double block_gradient_error(const SplitProblem& p, const BlockVector& x, SeededRng& rng,
                                   std::size_t probes, double step) {
  double worst = 0.0;
  const BlockVector g = p.f_grad(x);
  for (std::size_t n = 0; n < x.num_blocks(); ++n)
    for (std::size_t k = 0; k < probes; ++k) {
      const std::size_t i = rng.below(x.block(n).size());
      BlockVector xp = x, xm = x;
      xp.mutable_block(n)[i] += step;
      xm.mutable_block(n)[i] -= step;
      const double fd = (p.f_value(xp) - p.f_value(xm)) / (2.0 * step);
      const double an = g.block(n)[i];
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3}));
    }
  return worst;
}

}  // namespace detail

/// Quick invariant sweep over transforms, prox maps, gradients, descent,
/// weight-file robustness and determinism. Deterministic for a fixed build.
inline SelftestReport run_selftest() {
  SelftestReport rep;
  auto check = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    try {
      auto [ok, detail] = fn();
      rep.items.push_back({name, ok, detail});
    } catch (const std::exception& e) {
      rep.items.push_back({name, false, std::string("exception: ") + e.what()});
    }
  };
  SeededRng rng = SeededRng(20240917).substream("selftest");

  check("adjoint tests", [&] {
    const Shape s{12, 10};
    DenseVector taps(Shape{5, 3}, 0.0);
    for (double& v : taps) v = rng.uniform(-1.0, 1.0);
    const ConvKernel k{taps, 1, 2};
    double worst = 0.0;
    worst = std::max(worst, detail::adjoint_gap(Convolution(k, 12, 10).as_map(), rng));
    worst = std::max(worst, detail::adjoint_gap(grad_h_map(s), rng));
    worst = std::max(worst, detail::adjoint_gap(grad_v_map(s), rng));
    worst = std::max(worst, detail::adjoint_gap(haar_map(Shape{16, 24}, 3), rng));
    worst = std::max(worst, detail::adjoint_gap(Mask(uniform_vector(rng, s, -1.0, 1.0)).as_map(), rng));
    return std::pair{worst <= 1e-10, "max relative gap " + detail::sci(worst)};
  });

  check("haar round trip", [&] {
    const DenseVector u = uniform_vector(rng, Shape{32, 16}, 0.0, 1.0);
    const double err = norm(haar_idwt(haar_dwt(u, 3), 3) - u);
    return std::pair{err <= 1e-10, "error " + detail::sci(err)};
  });

  check("fft convolution", [&] {
    double worst = 0.0;
    for (std::size_t h : {4u, 5u, 8u, 13u})
      for (std::size_t w : {4u, 7u, 16u}) {
        DenseVector taps(Shape{3, 4}, 0.0);
        for (double& v : taps) v = rng.uniform(-1.0, 1.0);
        const ConvKernel k{taps, 1, 1};
        const DenseVector u = uniform_vector(rng, Shape{h, w}, -1.0, 1.0);
        worst = std::max(worst, norm(convolve(k, u) - convolve_direct(k, u)));
      }
    return std::pair{worst <= 1e-8, "max error " + detail::sci(worst)};
  });

  check("lp prox", [&] {
    double worst = 0.0;
    for (int i = 0; i < 60; ++i) {
      const double p = i % 3 == 0 ? 0.5 : (i % 3 == 1 ? 0.8 : 1.0);
      const double rho = rng.uniform(0.05, 2.0), x = rng.uniform(-4.0, 4.0);
      const double u = prox_lp_scalar(x, rho, p);
      double best = lp_prox_objective(0.0, x, rho, p);
      for (int g = 0; g <= 4000; ++g) {
        const double y = x * g / 4000.0;
        best = std::min(best, lp_prox_objective(y, x, rho, p));
      }
      worst = std::max(worst, lp_prox_objective(u, x, rho, p) - best);
    }
    return std::pair{worst <= 1e-9, "max objective excess over grid " + detail::sci(worst)};
  });

  check("problem gradients", [&] {
    SeededRng r = rng.substream("grad");
    const DenseVector img = synthetic_image(r, 16, 16);
    const auto ci = build_completion(img, random_mask(r, 16, 16, 0.4), CompletionParams{});
    const auto di = build_deblur(convolve(ConvKernel::box(3), img), ConvKernel::box(3), DeblurParams{});
    BlockVector xc = ci.x0, xd = di.x0;
    for (auto* x : {&xc, &xd})
      for (std::size_t n = 0; n < x->num_blocks(); ++n) x->set_block(n, uniform_vector(r, x->block(n).shape(), 0, 1));
    const double e = std::max(detail::block_gradient_error(ci.problem, xc, r, 8, 1e-5),
                              detail::block_gradient_error(di.problem, xd, r, 8, 1e-5));
    return std::pair{e < 1e-5, "max relative error " + detail::sci(e)};
  });

  check("network gradients", [&] {
    auto net = ResidualConvNet::make(3, 4, 7);
    std::vector<double> p = net.parameters();
    for (double& v : p) v += rng.uniform(-0.1, 0.1);
    net.set_parameters(p);
    const DenseVector x = uniform_vector(rng, Shape{8, 8}, 0.0, 1.0);
    const DenseVector t = uniform_vector(rng, Shape{8, 8}, -0.1, 0.1);
    std::vector<double> grad;
    net.loss_and_gradient(x, t, 1.0, grad);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const std::size_t i = rng.below(p.size());
      std::vector<double> q = p, scratch;
      const double h = 1e-6;
      q[i] = p[i] + h;
      net.set_parameters(q);
      const double lp = net.loss_and_gradient(x, t, 1.0, scratch);
      q[i] = p[i] - h;
      net.set_parameters(q);
      const double lm = net.loss_and_gradient(x, t, 1.0, scratch);
      const double fd = (lp - lm) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-4}));
    }
    net.set_parameters(p);
    return std::pair{worst < 1e-4, "max relative error " + detail::sci(worst)};
  });

  auto descent_run = [&](bool deblur, const DenoiserOp& td) {
    SeededRng r = rng.substream(deblur ? "descent-deblur" : "descent-complete");
    const DenseVector img = synthetic_image(r, 32, 32);
    SplitProblem prob;
    BlockVector x0({DenseVector(1)});
    if (deblur) {
      auto di = build_deblur(convolve(ConvKernel::box(5), img) + gaussian_noise(r, img.shape(), 0.01),
                             ConvKernel::box(5), DeblurParams{});
      prob = std::move(di.problem);
      x0 = std::move(di.x0);
    } else {
      auto ci = build_completion(img, random_mask(r, 32, 32, 0.4), CompletionParams{});
      prob = std::move(ci.problem);
      x0 = std::move(ci.x0);
    }
    LbsConfig cfg;
    cfg.rho = 0.99 / prob.lipschitz;
    const double lambda = cfg.rho * prob.geometry.mu() / 0.85;
    cfg.lambda = lambda;
    cfg.c = 0.99 * prob.geometry.mu() / (2.0 * lambda);
    cfg.max_iters = 60;
    return lbs_solve(prob, x0, td, cfg);
  };

  check("monotone descent, adversarial T_d", [&] {
    std::size_t violations = 0, rows = 0;
    for (bool deblur : {false, true}) {
      const SolveResult r = descent_run(deblur, noise_operator(99, 1.0));
      double prev = r.trace.psi0;
      for (const auto& row : r.trace.rows) {
        violations += row.psi > prev + 1e-10 * std::max(1.0, std::abs(prev));
        prev = row.psi;
        ++rows;
      }
    }
    return std::pair{violations == 0, std::to_string(rows) + " iterations, " + std::to_string(violations) +
                                          " increases"};
  });

  check("corrupted weight file", [&] {
    std::stringstream buf;
    write_weights(ResidualConvNet::make(2, 2, 1), buf);
    std::string bytes = buf.str();
    bytes.resize(bytes.size() - 5);
    std::stringstream bad(bytes);
    try {
      (void)read_weights(bad, "<truncated>");
    } catch (const IoError& e) {
      return std::pair{true, std::string("rejected: ") + e.what()};
    }
    return std::pair{false, std::string("truncated file was accepted")};
  });

  check("trace determinism", [&] {
    const std::string a = trace_csv(descent_run(false, noise_operator(5, 0.5)).trace);
    const std::string b = trace_csv(descent_run(false, noise_operator(5, 0.5)).trace);
    return std::pair{a == b, std::to_string(a.size()) + " bytes, identical=" + (a == b ? "yes" : "no")};
  });

  return rep;
}

}  // namespace lbs
