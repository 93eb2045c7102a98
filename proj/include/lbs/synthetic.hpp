#pragma once

#include <algorithm>
#include <cmath>

#include "lbs/core.hpp"
#include "lbs/linear_ops.hpp"
#include "lbs/rng.hpp"

namespace lbs {

enum class SceneKind { piecewise_constant, piecewise_smooth };

/// Procedural test scene in [0.05, 0.95]: a background plus random
/// rectangles and discs. piecewise_smooth adds a linear ramp to every region.
inline DenseVector synthetic_image(SeededRng& rng, std::size_t height, std::size_t width,
                                   SceneKind kind = SceneKind::piecewise_constant,
                                   int shapes = 6) {
  const auto hd = static_cast<double>(height), wd = static_cast<double>(width);
  const bool smooth = kind == SceneKind::piecewise_smooth;
  auto ramp = [&]() { return smooth ? rng.uniform(-0.3, 0.3) : 0.0; };

  DenseVector img(height, width);
  const double base = rng.uniform(0.2, 0.8);
  const double bx = ramp(), by = ramp();
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c)
      img(r, c) = base + by * (static_cast<double>(r) / hd - 0.5) + bx * (static_cast<double>(c) / wd - 0.5);

  for (int s = 0; s < shapes; ++s) {
    const double level = rng.uniform(0.1, 0.9);
    const double gx = ramp(), gy = ramp();
    const bool disc = rng.uniform() < 0.5;
    const double cy = rng.uniform(0.0, hd), cx = rng.uniform(0.0, wd);
    const double ry = rng.uniform(0.1, 0.35) * hd, rx = rng.uniform(0.1, 0.35) * wd;
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t c = 0; c < width; ++c) {
        const double dy = (static_cast<double>(r) - cy) / ry, dx = (static_cast<double>(c) - cx) / rx;
        const bool inside = disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (inside) img(r, c) = level + gy * dy * 0.5 + gx * dx * 0.5;
      }
  }
  for (double& v : img) v = std::clamp(v, 0.05, 0.95);
  return img;
}

/// Keep pattern with approximately `missing` fraction of zeros.
inline Mask random_mask(SeededRng& rng, std::size_t height, std::size_t width, double missing) {
  if (!(missing >= 0.0 && missing <= 1.0)) throw DomainError("random_mask: ratio must lie in [0, 1]");
  DenseVector keep(height, width);
  for (double& v : keep) v = rng.uniform() < missing ? 0.0 : 1.0;
  return Mask(std::move(keep));
}

}  // namespace lbs
