#pragma once

#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "lbs/core.hpp"

namespace lbs {

using Complex = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 transform; n must be a power of two.
// sign = -1 forward, +1 inverse (unnormalized).
inline void fft_radix2(std::vector<Complex>& a, int sign) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    std::vector<Complex> tw(half);
    for (std::size_t k = 0; k < half; ++k)
      tw[k] = Complex(std::cos(ang * static_cast<double>(k)),
                      std::sin(ang * static_cast<double>(k)));
    for (std::size_t i = 0; i < n; i += len)
      for (std::size_t k = 0; k < half; ++k) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * tw[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
  }
}

// Bluestein chirp-z: arbitrary length via a zero-padded power-of-two
// circular convolution.
inline void fft_bluestein(std::vector<Complex>& a, int sign) {
  const std::size_t n = a.size();
  const std::size_t m = next_pow2(2 * n - 1);
  std::vector<Complex> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small and exact
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = sign * std::numbers::pi * static_cast<double>(k2) /
                       static_cast<double>(n);
    chirp[k] = Complex(std::cos(ang), std::sin(ang));
  }
  std::vector<Complex> x(m), y(m);
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
  y[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(chirp[k]);
  fft_radix2(x, -1);
  fft_radix2(y, -1);
  for (std::size_t i = 0; i < m; ++i) x[i] *= y[i];
  fft_radix2(x, +1);
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * scale * chirp[k];
}

inline void fft_1d(std::vector<Complex>& a, int sign) {
  if (a.size() <= 1) return;
  if (is_pow2(a.size()))
    fft_radix2(a, sign);
  else
    fft_bluestein(a, sign);
}

}  // namespace detail

/// Row-major complex spectrum of an H x W image.
struct Spectrum {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Complex> bins;

  Complex& operator()(std::size_t r, std::size_t c) { return bins[r * width + c]; }
  Complex operator()(std::size_t r, std::size_t c) const { return bins[r * width + c]; }
};

namespace detail {

inline void fft2_inplace(Spectrum& s, int sign) {
  std::vector<Complex> line(s.width);
  for (std::size_t r = 0; r < s.height; ++r) {
    std::copy_n(s.bins.begin() + static_cast<std::ptrdiff_t>(r * s.width), s.width,
                line.begin());
    fft_1d(line, sign);
    std::copy(line.begin(), line.end(),
              s.bins.begin() + static_cast<std::ptrdiff_t>(r * s.width));
  }
  line.resize(s.height);
  for (std::size_t c = 0; c < s.width; ++c) {
    for (std::size_t r = 0; r < s.height; ++r) line[r] = s(r, c);
    fft_1d(line, sign);
    for (std::size_t r = 0; r < s.height; ++r) s(r, c) = line[r];
  }
}

}  // namespace detail

/// Unnormalized 2-D DFT. Any size is accepted; non power-of-two lengths
/// are padded internally through the chirp-z transform.
inline Spectrum fft2(const DenseVector& image) {
  if (!image.is_image()) throw DimensionError("fft2 expects a 2-D image");
  Spectrum s{image.height(), image.width(), {}};
  s.bins.assign(image.begin(), image.end());
  detail::fft2_inplace(s, -1);
  return s;
}

/// Inverse of fft2 (includes the 1/HW factor); returns the real part.
inline DenseVector ifft2(Spectrum s) {
  detail::fft2_inplace(s, +1);
  DenseVector out(s.height, s.width);
  const double scale = 1.0 / static_cast<double>(s.height * s.width);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.bins[i].real() * scale;
  return out;
}

}  // namespace lbs
