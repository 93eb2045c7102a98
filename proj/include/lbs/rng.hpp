#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "lbs/core.hpp"

namespace lbs {

/// Counter-based generator: the k-th draw is a pure function of (seed, k),
/// so streams are reproducible regardless of how work is scheduled.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Stateless access to the k-th 64-bit word of the stream.
  static std::uint64_t word(std::uint64_t seed, std::uint64_t k) noexcept {
    return mix(mix(seed) ^ (k * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull));
  }

  std::uint64_t next_u64() noexcept { return word(seed_, counter_++); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    return n == 0 ? 0 : static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  /// Standard normal via Box-Muller; consumes two words per call.
  double normal() noexcept {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Independent stream derived from this seed and a label.
  SeededRng substream(std::string_view label) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (unsigned char ch : label) {
      h ^= ch;
      h *= 0x100000001b3ull;
    }
    return SeededRng(mix(seed_ ^ mix(h)));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) noexcept {  // splitmix64 finalizer
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// i.i.d. N(0, sigma^2) samples with the given shape.
inline DenseVector gaussian_noise(SeededRng& rng, const Shape& shape, double sigma) {
  if (!(sigma >= 0.0)) throw DomainError("gaussian_noise: sigma must be >= 0");
  DenseVector out(shape, 0.0);
  if (sigma == 0.0) return out;
  for (double& v : out) v = sigma * rng.normal();
  return out;
}

inline DenseVector uniform_vector(SeededRng& rng, const Shape& shape, double lo = -1.0,
                                  double hi = 1.0) {
  DenseVector out(shape, 0.0);
  for (double& v : out) v = rng.uniform(lo, hi);
  return out;
}

}  // namespace lbs
