#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "lbs/bregman.hpp"
#include "lbs/linear_ops.hpp"
#include "lbs/problem.hpp"
#include "lbs/prox.hpp"
#include "lbs/splitting.hpp"

namespace lbs {

// ---------------------------------------------------------------------------
// Quality metrics

struct QualityReport {
  double psnr = 0.0;  // dB, capped at 99
  double ssim = 0.0;
};

inline constexpr double kPsnrCap = 99.0;

inline double mse(const DenseVector& x, const DenseVector& ref) {
  x.require_same(ref, "mse");
  return x.size() ? norm2(x - ref) / static_cast<double>(x.size()) : 0.0;
}

/// 10 log10(peak^2 / MSE); identical images report kPsnrCap.
inline double psnr(const DenseVector& x, const DenseVector& ref, double peak = 1.0) {
  const double m = mse(x, ref);
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

/// Mean SSIM over all 8x8 windows (stride 1, uniform weights, population
/// moments) with C1 = (0.01 peak)^2 and C2 = (0.03 peak)^2.
inline double ssim(const DenseVector& x, const DenseVector& ref, double peak = 1.0) {
  x.require_same(ref, "ssim");
  if (!x.is_image()) throw DimensionError("ssim expects 2-D images");
  const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
  const std::size_t h = x.height(), w = x.width();
  const std::size_t wh = std::min<std::size_t>(8, h), ww = std::min<std::size_t>(8, w);
  const double n = static_cast<double>(wh * ww);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + wh <= h; ++i)
    for (std::size_t j = 0; j + ww <= w; ++j) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t a = 0; a < wh; ++a)
        for (std::size_t b = 0; b < ww; ++b) {
          const double u = x(i + a, j + b), v = ref(i + a, j + b);
          sx += u;
          sy += v;
          sxx += u * u;
          syy += v * v;
          sxy += u * v;
        }
      const double mx = sx / n, my = sy / n;
      const double vx = std::max(sxx / n - mx * mx, 0.0), vy = std::max(syy / n - my * my, 0.0);
      const double cxy = sxy / n - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

inline QualityReport quality(const DenseVector& x, const DenseVector& ref, double peak = 1.0) {
  if (x == ref) return {kPsnrCap, 1.0};
  return {psnr(x, ref, peak), ssim(x, ref, peak)};
}

// ---------------------------------------------------------------------------
// l_p sparse-coding completion: min (1/2 rho) ||M (B alpha) - y||^2 + ||alpha||_p^p

struct CompletionParams {
  double rho_fidelity = 0.05;
  double p = 0.8;
  double mu = 1.0;  // A = mu I
  int levels = 3;
};

struct CompletionInstance {
  SplitProblem problem;
  BlockVector x0;  // alpha^0 = B^T (M y)
  DenseVector observed;
  Mask mask;
  int levels = 3;
  double rho_fidelity = 0.0;
  LipschitzEstimate lipschitz;
};

inline CompletionInstance build_completion(const DenseVector& y, const Mask& mask,
                                           const CompletionParams& params) {
  if (!y.is_image()) throw DimensionError("build_completion expects a 2-D image");
  if (y.shape() != mask.keep().shape())
    throw DimensionError("mask " + shape_string(mask.keep().shape()) + " does not match image " +
                         shape_string(y.shape()));
  check_haar_shape(y, params.levels);
  if (!(params.rho_fidelity > 0.0)) throw DomainError("completion: rho_fidelity must be > 0");
  check_prox_args(1.0, params.p);

  const int levels = params.levels;
  const double inv_rho = 1.0 / params.rho_fidelity;
  auto keep = std::make_shared<const DenseVector>(mask.keep());
  auto obs = std::make_shared<const DenseVector>(mask.apply(y));

  SplitProblem sp;
  sp.f_value = [=](const BlockVector& a) {
    const DenseVector r = hadamard(*keep, haar_idwt(a.block(0), levels)) - *obs;
    return 0.5 * inv_rho * norm2(r);
  };
  sp.f_grad_block = [=](const BlockVector& a, std::size_t) {
    DenseVector r = hadamard(*keep, haar_idwt(a.block(0), levels) - *obs);
    return inv_rho * haar_dwt(r, levels);
  };
  sp.g = {lp_power(params.p)};
  sp.geometry = BregmanGeometry::uniform(params.mu);
  // B orthonormal, so prox_{t f} is pixelwise in the image domain
  sp.prox_f = [=](const BlockVector& v, double t) {
    DenseVector x = haar_idwt(v.block(0), levels);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double m = (*keep)[i] * inv_rho;
      x[i] = (m * (*obs)[i] + x[i] / t) / (m + 1.0 / t);
    }
    return BlockVector({haar_dwt(x, levels)}, v.labels());
  };
  sp.to_image = [levels](const BlockVector& a) { return haar_idwt(a.block(0), levels); };

  // A = M B; B is the synthesis (adjoint) side of the Haar map
  const LinearMap haar = haar_map(y.shape(), levels);
  const LinearMap synth = compose(mask.as_map(), LinearMap{y.shape(), y.shape(), haar.adjoint, haar.forward});
  const LipschitzEstimate lip = estimate_lipschitz(synth, inv_rho);
  sp.lipschitz = lip.lipschitz > 0.0 ? lip.lipschitz : inv_rho * 1.05;

  BlockVector x0({haar_dwt(*obs, levels)}, {"alpha"});
  return {std::move(sp), std::move(x0), *obs, mask, levels, params.rho_fidelity, lip};
}

// ---------------------------------------------------------------------------
// Nonconvex TV deblurring via half-quadratic splitting:
//   min (1/2 rho)||k (x) u - y||^2 + ||v_h||_p^p + ||v_v||_p^p + chi_[0,1](u)
//       + (1/2 eta)(||D_h u - v_h||^2 + ||D_v u - v_v||^2)

struct DeblurParams {
  double rho_fidelity = 0.002;
  double eta = 0.05;
  double p = 0.8;
  double mu_u = 0.01;
  double mu_v = 0.001;
  /// Block sweep order, a permutation of {"u", "v_h", "v_v"}.
  std::vector<std::string> order{"u", "v_h", "v_v"};
};

struct DeblurInstance {
  SplitProblem problem;
  BlockVector x0;  // u^0 = clamp(y), v^0 = D u^0
  DenseVector observed;
  std::size_t u_index = 0, vh_index = 1, vv_index = 2;
  LipschitzEstimate lipschitz;
};

inline DeblurInstance build_deblur(const DenseVector& y, const ConvKernel& kernel,
                                   const DeblurParams& params) {
  if (!y.is_image()) throw DimensionError("build_deblur expects a 2-D image");
  if (!(params.eta > 0.0)) throw DomainError("deblur: eta must be > 0");
  if (!(params.rho_fidelity > 0.0)) throw DomainError("deblur: rho_fidelity must be > 0");
  check_prox_args(1.0, params.p);
  auto where = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(params.order.begin(), params.order.end(), name);
    if (params.order.size() != 3 || it == params.order.end())
      throw DomainError("deblur: block order must be a permutation of u, v_h, v_v");
    return static_cast<std::size_t>(it - params.order.begin());
  };
  const std::size_t iu = where("u"), ih = where("v_h"), iv = where("v_v");

  const std::size_t h = y.height(), w = y.width();
  auto conv = std::make_shared<const Convolution>(kernel, h, w);
  auto obs = std::make_shared<const DenseVector>(y);
  const double inv_rho = 1.0 / params.rho_fidelity, inv_eta = 1.0 / params.eta;

  SplitProblem sp;
  sp.f_value = [=](const BlockVector& x) {
    const DenseVector& u = x.block(iu);
    return 0.5 * inv_rho * norm2(conv->forward(u) - *obs) +
           0.5 * inv_eta * (norm2(grad_h(u) - x.block(ih)) + norm2(grad_v(u) - x.block(iv)));
  };
  auto grad_u = [=](const BlockVector& x) {
    const DenseVector& u = x.block(iu);
    DenseVector g = inv_rho * conv->adjoint(conv->forward(u) - *obs);
    g += inv_eta * (grad_h_adjoint(grad_h(u) - x.block(ih)) + grad_v_adjoint(grad_v(u) - x.block(iv)));
    return g;
  };
  sp.f_grad_block = [=](const BlockVector& x, std::size_t n) {
    if (n == iu) return grad_u(x);
    const DenseVector& u = x.block(iu);
    if (n == ih) return inv_eta * (x.block(ih) - grad_h(u));
    return inv_eta * (x.block(iv) - grad_v(u));
  };
  sp.g.resize(3);
  sp.g[iu] = box_indicator(0.0, 1.0);
  sp.g[ih] = lp_power(params.p);
  sp.g[iv] = lp_power(params.p);
  std::vector<double> weights(3);
  weights[iu] = params.mu_u;
  weights[ih] = weights[iv] = params.mu_v;
  sp.geometry = BregmanGeometry(weights);
  sp.to_image = [iu](const BlockVector& x) { return x.block(iu); };

  // prox of the smooth part: v eliminated in closed form, u by FFT division
  const double eta = params.eta;
  sp.prox_f = [=](const BlockVector& in, double t) {
    const DenseVector& a = in.block(iu);
    const DenseVector& bh = in.block(ih);
    const DenseVector& bv = in.block(iv);
    const double cpl = 1.0 / (t + eta);
    DenseVector rhs = inv_rho * conv->adjoint(*obs) + cpl * (grad_h_adjoint(bh) + grad_v_adjoint(bv)) + (1.0 / t) * a;
    Spectrum s = fft2(rhs);
    const Spectrum& k = conv->spectrum();
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const double dh = 2.0 - 2.0 * std::cos(2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(w));
        const double dv = 2.0 - 2.0 * std::cos(2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(h));
        s(r, c) /= inv_rho * std::norm(k(r, c)) + cpl * (dh + dv) + 1.0 / t;
      }
    DenseVector u = ifft2(std::move(s));
    BlockVector out = in;
    out.set_block(ih, (1.0 / (t + eta)) * (t * grad_h(u) + eta * bh));
    out.set_block(iv, (1.0 / (t + eta)) * (t * grad_v(u) + eta * bv));
    out.set_block(iu, std::move(u));
    return out;
  };

  std::vector<DenseVector> blocks(3, DenseVector(h, w));
  std::vector<std::string> labels(3);
  labels[iu] = "u";
  labels[ih] = "v_h";
  labels[iv] = "v_v";
  BlockVector like(blocks, labels);

  // Hessian of f (it is quadratic), for the power iteration
  BlockMap hessian = [=](const BlockVector& x) {
    const DenseVector& u = x.block(iu);
    const DenseVector rh = grad_h(u) - x.block(ih), rv = grad_v(u) - x.block(iv);
    BlockVector out = x;
    out.set_block(iu, inv_rho * conv->adjoint(conv->forward(u)) +
                          inv_eta * (grad_h_adjoint(rh) + grad_v_adjoint(rv)));
    out.set_block(ih, -inv_eta * rh);
    out.set_block(iv, -inv_eta * rv);
    return out;
  };
  const LipschitzEstimate lip = estimate_lipschitz(hessian, like, 1.0);
  sp.lipschitz = lip.lipschitz;

  const DenseVector u0 = project_box(y);
  blocks[iu] = u0;
  blocks[ih] = grad_h(u0);
  blocks[iv] = grad_v(u0);
  return {std::move(sp), BlockVector(std::move(blocks), labels), y, iu, ih, iv, lip};
}

}  // namespace lbs
