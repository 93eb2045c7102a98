#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>

#include "lbs/core.hpp"
#include "lbs/fft.hpp"

namespace lbs {

/// Linear operator with explicit forward and adjoint actions.
struct LinearMap {
  Shape in_shape;
  Shape out_shape;
  std::function<DenseVector(const DenseVector&)> forward;
  std::function<DenseVector(const DenseVector&)> adjoint;

  DenseVector operator()(const DenseVector& x) const { return forward(x); }

  /// A^T A x
  DenseVector normal(const DenseVector& x) const { return adjoint(forward(x)); }
};

/// outer after inner.
inline LinearMap compose(const LinearMap& outer, const LinearMap& inner_map) {
  if (inner_map.out_shape != outer.in_shape)
    throw DimensionError("compose: " + shape_string(inner_map.out_shape) +
                         " does not feed " + shape_string(outer.in_shape));
  return {inner_map.in_shape, outer.out_shape,
          [a = outer.forward, b = inner_map.forward](const DenseVector& x) { return a(b(x)); },
          [a = outer.adjoint, b = inner_map.adjoint](const DenseVector& y) { return b(a(y)); }};
}

inline LinearMap scaled(const LinearMap& m, double s) {
  return {m.in_shape, m.out_shape,
          [f = m.forward, s](const DenseVector& x) { return s * f(x); },
          [g = m.adjoint, s](const DenseVector& y) { return s * g(y); }};
}

inline LinearMap identity_map(const Shape& shape) {
  auto id = [](const DenseVector& x) { return x; };
  return {shape, shape, id, id};
}

// ---------------------------------------------------------------------------
// Mask

/// Binary keep pattern; 1 = observed, 0 = missing.
class Mask {
 public:
  explicit Mask(DenseVector keep) : keep_(std::move(keep)) {
    for (double& v : keep_) v = v != 0.0 ? 1.0 : 0.0;
  }

  const DenseVector& keep() const noexcept { return keep_; }
  double observed_fraction() const {
    double s = 0.0;
    for (double v : keep_) s += v;
    return keep_.size() ? s / static_cast<double>(keep_.size()) : 0.0;
  }

  DenseVector apply(const DenseVector& x) const { return hadamard(keep_, x); }

  LinearMap as_map() const {
    auto f = [keep = keep_](const DenseVector& x) { return hadamard(keep, x); };
    return {keep_.shape(), keep_.shape(), f, f};
  }

 private:
  DenseVector keep_;
};

// ---------------------------------------------------------------------------
// Convolution

struct ConvKernel {
  DenseVector taps;  // 2-D
  std::size_t anchor_row = 0;
  std::size_t anchor_col = 0;
  bool renormalized = false;  // set when the loaded taps did not sum to one
  bool unnormalized = false;  // set when the taps could not be normalized

  static ConvKernel centered(DenseVector taps) {
    if (!taps.is_image()) throw DimensionError("ConvKernel taps must be 2-D");
    ConvKernel k{std::move(taps)};
    k.anchor_row = k.taps.height() / 2;
    k.anchor_col = k.taps.width() / 2;
    return k;
  }

  static ConvKernel delta() { return centered(DenseVector(Shape{1, 1}, 1.0)); }

  static ConvKernel box(std::size_t size) {
    const double v = 1.0 / static_cast<double>(size * size);
    return centered(DenseVector(Shape{size, size}, v));
  }

  static ConvKernel gaussian(std::size_t size, double sigma) {
    DenseVector t(size, size);
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t q = 0; q < size; ++q) {
        const double dr = static_cast<double>(r) - c, dq = static_cast<double>(q) - c;
        t(r, q) = std::exp(-(dr * dr + dq * dq) / (2.0 * sigma * sigma));
      }
    ConvKernel k = centered(std::move(t));
    k.normalize();
    k.renormalized = false;
    return k;
  }

  double sum() const {
    double s = 0.0;
    for (double v : taps) s += v;
    return s;
  }

  /// Scales taps to unit sum, recording whether anything changed.
  void normalize() {
    const double s = sum();
    if (std::abs(s) < 1e-12) {
      unnormalized = true;
      return;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      taps *= 1.0 / s;
      renormalized = true;
    }
  }
};

/// Reads "H W" followed by H rows of W floats; taps are normalized to unit sum.
inline ConvKernel parse_kernel(std::istream& in, const std::string& origin = "<stream>") {
  std::size_t h = 0, w = 0;
  if (!(in >> h >> w) || h == 0 || w == 0)
    throw IoError("kernel " + origin + ": expected header 'H W'");
  if (h > 75 || w > 75)
    throw DimensionError("kernel " + origin + ": side lengths above 75 are not supported");
  DenseVector taps(h, w);
  for (double& v : taps)
    if (!(in >> v)) throw IoError("kernel " + origin + ": expected " + std::to_string(h * w) + " taps");
  if (!taps.all_finite()) throw IoError("kernel " + origin + ": non-finite tap");
  ConvKernel k = ConvKernel::centered(std::move(taps));
  k.normalize();
  return k;
}

inline ConvKernel load_kernel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open kernel file " + path);
  return parse_kernel(in, path);
}

inline void save_kernel(const ConvKernel& k, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write kernel file " + path);
  out << k.taps.height() << ' ' << k.taps.width() << '\n';
  out.precision(17);
  for (std::size_t r = 0; r < k.taps.height(); ++r) {
    for (std::size_t c = 0; c < k.taps.width(); ++c) out << (c ? " " : "") << k.taps(r, c);
    out << '\n';
  }
}

/// Kernel spectrum on an H x W periodic grid, with the anchor moved to (0, 0).
inline Spectrum kernel_spectrum(const ConvKernel& k, std::size_t height, std::size_t width) {
  if (k.taps.height() > height || k.taps.width() > width)
    throw DimensionError("kernel " + shape_string(k.taps.shape()) + " larger than image " +
                         shape_string({height, width}));
  DenseVector embedded(height, width);
  for (std::size_t a = 0; a < k.taps.height(); ++a)
    for (std::size_t b = 0; b < k.taps.width(); ++b) {
      const std::size_t r = (a + height - k.anchor_row) % height;
      const std::size_t c = (b + width - k.anchor_col) % width;
      embedded(r, c) += k.taps(a, b);
    }
  return fft2(embedded);
}

/// Circular convolution k (x) u through the FFT.
class Convolution {
 public:
  Convolution(const ConvKernel& k, std::size_t height, std::size_t width)
      : height_(height), width_(width), spectrum_(kernel_spectrum(k, height, width)) {}

  DenseVector forward(const DenseVector& u) const { return filter(u, false); }
  DenseVector adjoint(const DenseVector& v) const { return filter(v, true); }

  const Spectrum& spectrum() const noexcept { return spectrum_; }

  LinearMap as_map() const {
    auto self = std::make_shared<Convolution>(*this);
    Shape s{height_, width_};
    return {s, s, [self](const DenseVector& u) { return self->forward(u); },
            [self](const DenseVector& v) { return self->adjoint(v); }};
  }

 private:
  DenseVector filter(const DenseVector& u, bool conjugate) const {
    if (u.shape() != Shape{height_, width_})
      throw DimensionError("convolution expects " + shape_string({height_, width_}) + ", got " +
                           shape_string(u.shape()));
    Spectrum s = fft2(u);
    for (std::size_t i = 0; i < s.bins.size(); ++i)
      s.bins[i] *= conjugate ? std::conj(spectrum_.bins[i]) : spectrum_.bins[i];
    return ifft2(std::move(s));
  }

  std::size_t height_, width_;
  Spectrum spectrum_;
};

inline DenseVector convolve(const ConvKernel& k, const DenseVector& u) {
  if (!u.is_image()) throw DimensionError("convolve expects a 2-D image");
  return Convolution(k, u.height(), u.width()).forward(u);
}

/// O(HW k^2) spatial circular convolution; reference path for tests.
inline DenseVector convolve_direct(const ConvKernel& k, const DenseVector& u) {
  const std::size_t h = u.height(), w = u.width();
  if (k.taps.height() > h || k.taps.width() > w) throw DimensionError("kernel larger than image");
  DenseVector out(h, w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < k.taps.height(); ++a)
        for (std::size_t b = 0; b < k.taps.width(); ++b) {
          const std::size_t r = (i + h + k.anchor_row - a) % h;
          const std::size_t c = (j + w + k.anchor_col - b) % w;
          s += k.taps(a, b) * u(r, c);
        }
      out(i, j) = s;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences (periodic)

inline DenseVector grad_h(const DenseVector& u) {
  if (!u.is_image()) throw DimensionError("grad_h expects a 2-D image");
  DenseVector g = DenseVector::zeros_like(u);
  const std::size_t h = u.height(), w = u.width();
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) g(i, j) = u(i, (j + 1) % w) - u(i, j);
  return g;
}

inline DenseVector grad_h_adjoint(const DenseVector& p) {
  if (!p.is_image()) throw DimensionError("grad_h_adjoint expects a 2-D image");
  DenseVector g = DenseVector::zeros_like(p);
  const std::size_t h = p.height(), w = p.width();
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) g(i, j) = p(i, (j + w - 1) % w) - p(i, j);
  return g;
}

inline DenseVector grad_v(const DenseVector& u) {
  if (!u.is_image()) throw DimensionError("grad_v expects a 2-D image");
  DenseVector g = DenseVector::zeros_like(u);
  const std::size_t h = u.height(), w = u.width();
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) g(i, j) = u((i + 1) % h, j) - u(i, j);
  return g;
}

inline DenseVector grad_v_adjoint(const DenseVector& p) {
  if (!p.is_image()) throw DimensionError("grad_v_adjoint expects a 2-D image");
  DenseVector g = DenseVector::zeros_like(p);
  const std::size_t h = p.height(), w = p.width();
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) g(i, j) = p((i + h - 1) % h, j) - p(i, j);
  return g;
}

inline LinearMap grad_h_map(const Shape& s) { return {s, s, grad_h, grad_h_adjoint}; }
inline LinearMap grad_v_map(const Shape& s) { return {s, s, grad_v, grad_v_adjoint}; }

// ---------------------------------------------------------------------------
// Orthonormal 2-D Haar transform, Mallat layout (approximation top-left).

inline void check_haar_shape(const DenseVector& u, int levels) {
  if (!u.is_image()) throw DimensionError("Haar transform expects a 2-D image");
  if (levels < 0) throw DomainError("Haar levels must be >= 0");
  const std::size_t f = std::size_t{1} << levels;
  if (u.height() % f || u.width() % f)
    throw DimensionError("image " + shape_string(u.shape()) + " not divisible by 2^" +
                         std::to_string(levels));
}

namespace detail {

inline void haar_step(DenseVector& x, std::size_t h, std::size_t w, bool inverse) {
  constexpr double s = 0.70710678118654752440;
  std::vector<double> tmp(std::max(h, w));
  // rows
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t k = 0; k < w / 2; ++k) {
      if (!inverse) {
        const double a = x(r, 2 * k), b = x(r, 2 * k + 1);
        tmp[k] = s * (a + b);
        tmp[w / 2 + k] = s * (a - b);
      } else {
        const double a = x(r, k), d = x(r, w / 2 + k);
        tmp[2 * k] = s * (a + d);
        tmp[2 * k + 1] = s * (a - d);
      }
    }
    for (std::size_t c = 0; c < w; ++c) x(r, c) = tmp[c];
  }
  // columns
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t k = 0; k < h / 2; ++k) {
      if (!inverse) {
        const double a = x(2 * k, c), b = x(2 * k + 1, c);
        tmp[k] = s * (a + b);
        tmp[h / 2 + k] = s * (a - b);
      } else {
        const double a = x(k, c), d = x(h / 2 + k, c);
        tmp[2 * k] = s * (a + d);
        tmp[2 * k + 1] = s * (a - d);
      }
    }
    for (std::size_t r = 0; r < h; ++r) x(r, c) = tmp[r];
  }
}

}  // namespace detail

inline DenseVector haar_dwt(const DenseVector& u, int levels) {
  check_haar_shape(u, levels);
  DenseVector x = u;
  std::size_t h = u.height(), w = u.width();
  for (int l = 0; l < levels; ++l, h /= 2, w /= 2) detail::haar_step(x, h, w, false);
  return x;
}

inline DenseVector haar_idwt(const DenseVector& coeffs, int levels) {
  check_haar_shape(coeffs, levels);
  DenseVector x = coeffs;
  for (int l = levels - 1; l >= 0; --l)
    detail::haar_step(x, coeffs.height() >> l, coeffs.width() >> l, true);
  return x;
}

/// Forward = analysis (DWT); adjoint = synthesis (IDWT) since the basis is orthonormal.
inline LinearMap haar_map(const Shape& s, int levels) {
  return {s, s, [levels](const DenseVector& u) { return haar_dwt(u, levels); },
          [levels](const DenseVector& c) { return haar_idwt(c, levels); }};
}

/// Mask in the coarsest approximation band of a Mallat layout.
inline bool haar_is_approximation(std::size_t r, std::size_t c, std::size_t h, std::size_t w,
                                  int levels) {
  return r < (h >> levels) && c < (w >> levels);
}

}  // namespace lbs
