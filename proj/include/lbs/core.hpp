#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lbs/errors.hpp"

namespace lbs {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

/// Dense real array, either a 1-D vector or a row-major H x W image.
class DenseVector {
 public:
  DenseVector() : shape_{0} {}
  explicit DenseVector(std::size_t n, double fill = 0.0)
      : data_(n, fill), shape_{n} {}
  DenseVector(std::size_t height, std::size_t width, double fill = 0.0)
      : data_(height * width, fill), shape_{height, width} {}
  /// Integral pairs always mean height x width.
  template <std::integral H, std::integral W>
  DenseVector(H height, W width, double fill = 0.0)
      : DenseVector(static_cast<std::size_t>(height), static_cast<std::size_t>(width), fill) {}
  DenseVector(Shape shape, double fill)
      : data_(shape_size(shape), fill), shape_(std::move(shape)) {}
  DenseVector(Shape shape, std::vector<double> data)
      : data_(std::move(data)), shape_(std::move(shape)) {
    if (data_.size() != shape_size(shape_))
      throw DimensionError("DenseVector: " + std::to_string(data_.size()) +
                           " values do not fill shape " + shape_string(shape_));
  }
  DenseVector(std::initializer_list<double> values)
      : data_(values), shape_{values.size()} {}

  static DenseVector zeros_like(const DenseVector& v) {
    return DenseVector(v.shape_, 0.0);
  }

  std::size_t size() const noexcept { return data_.size(); }
  const Shape& shape() const noexcept { return shape_; }
  bool is_image() const noexcept { return shape_.size() == 2; }
  std::size_t height() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t width() const {
    return shape_.size() == 2 ? shape_[1] : data_.size();
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * shape_[1] + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }
  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  /// Same values viewed with another shape of equal size.
  DenseVector reshaped(Shape shape) const { return {std::move(shape), data_}; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  DenseVector& operator+=(const DenseVector& o) {
    require_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  DenseVector& operator-=(const DenseVector& o) {
    require_same(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  DenseVector& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  void require_same(const DenseVector& o, const char* op) const {
    if (shape_ != o.shape_)
      throw DimensionError(std::string("shape mismatch in ") + op + ": " +
                           shape_string(shape_) + " vs " +
                           shape_string(o.shape_));
  }

  friend bool operator==(const DenseVector&, const DenseVector&) = default;

 private:
  std::vector<double> data_;
  Shape shape_;
};

inline DenseVector operator+(DenseVector a, const DenseVector& b) { return a += b; }
inline DenseVector operator-(DenseVector a, const DenseVector& b) { return a -= b; }
inline DenseVector operator*(double s, DenseVector a) { return a *= s; }
inline DenseVector operator*(DenseVector a, double s) { return a *= s; }
inline DenseVector operator-(DenseVector a) { return a *= -1.0; }

inline double inner(const DenseVector& a, const DenseVector& b) {
  a.require_same(b, "inner");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const DenseVector& a) { return inner(a, a); }
inline double norm(const DenseVector& a) { return std::sqrt(norm2(a)); }

/// Elementwise map into a fresh vector of the same shape.
template <class Fn>
DenseVector map(const DenseVector& x, Fn&& fn) {
  DenseVector out = DenseVector::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fn(x[i]);
  return out;
}

/// Elementwise product.
inline DenseVector hadamard(const DenseVector& a, const DenseVector& b) {
  a.require_same(b, "hadamard");
  DenseVector out = DenseVector::zeros_like(a);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

/// N-block optimization variable. Block shapes are fixed once constructed.
class BlockVector {
 public:
  BlockVector() = default;
  explicit BlockVector(std::vector<DenseVector> blocks,
                       std::vector<std::string> labels = {})
      : blocks_(std::move(blocks)), labels_(std::move(labels)) {
    if (blocks_.empty()) throw DimensionError("BlockVector needs N >= 1 blocks");
    if (!labels_.empty() && labels_.size() != blocks_.size())
      throw DimensionError("BlockVector: label count differs from block count");
  }
  BlockVector(std::initializer_list<DenseVector> blocks)
      : BlockVector(std::vector<DenseVector>(blocks)) {}

  static BlockVector zeros_like(const BlockVector& x) {
    std::vector<DenseVector> blocks;
    blocks.reserve(x.num_blocks());
    for (const auto& b : x.blocks_) blocks.push_back(DenseVector::zeros_like(b));
    return BlockVector(std::move(blocks), x.labels_);
  }

  std::size_t num_blocks() const noexcept { return blocks_.size(); }
  const DenseVector& block(std::size_t n) const { return blocks_.at(n); }

  /// Replaces block n; the replacement must keep the block's shape.
  void set_block(std::size_t n, DenseVector value) {
    if (value.shape() != blocks_.at(n).shape())
      throw DimensionError("set_block: block " + std::to_string(n) +
                           " has shape " + shape_string(blocks_[n].shape()) +
                           ", got " + shape_string(value.shape()));
    blocks_[n] = std::move(value);
  }
  DenseVector& mutable_block(std::size_t n) { return blocks_.at(n); }

  const std::vector<DenseVector>& blocks() const noexcept { return blocks_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::string label(std::size_t n) const {
    return labels_.empty() ? "x" + std::to_string(n + 1) : labels_.at(n);
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.size();
    return n;
  }

  bool all_finite() const {
    return std::all_of(blocks_.begin(), blocks_.end(),
                       [](const DenseVector& b) { return b.all_finite(); });
  }

  void require_same(const BlockVector& o, const char* op) const {
    if (o.blocks_.size() != blocks_.size())
      throw DimensionError(std::string("block count mismatch in ") + op);
    for (std::size_t n = 0; n < blocks_.size(); ++n)
      blocks_[n].require_same(o.blocks_[n], op);
  }

  BlockVector& operator+=(const BlockVector& o) {
    require_same(o, "+=");
    for (std::size_t n = 0; n < blocks_.size(); ++n) blocks_[n] += o.blocks_[n];
    return *this;
  }
  BlockVector& operator-=(const BlockVector& o) {
    require_same(o, "-=");
    for (std::size_t n = 0; n < blocks_.size(); ++n) blocks_[n] -= o.blocks_[n];
    return *this;
  }
  BlockVector& operator*=(double s) {
    for (auto& b : blocks_) b *= s;
    return *this;
  }

  friend bool operator==(const BlockVector& a, const BlockVector& b) {
    return a.blocks_ == b.blocks_;
  }

 private:
  std::vector<DenseVector> blocks_;
  std::vector<std::string> labels_;
};

inline BlockVector operator+(BlockVector a, const BlockVector& b) { return a += b; }
inline BlockVector operator-(BlockVector a, const BlockVector& b) { return a -= b; }
inline BlockVector operator*(double s, BlockVector a) { return a *= s; }

inline double inner(const BlockVector& a, const BlockVector& b) {
  a.require_same(b, "inner");
  double s = 0.0;
  for (std::size_t n = 0; n < a.num_blocks(); ++n)
    s += inner(a.block(n), b.block(n));
  return s;
}

/// Sum of per-block squared norms.
inline double block_norm2(const BlockVector& x) {
  double s = 0.0;
  for (const auto& b : x.blocks()) s += norm2(b);
  return s;
}

inline double block_norm(const BlockVector& x) { return std::sqrt(block_norm2(x)); }

/// alpha * x + y, blockwise.
inline BlockVector axpy(double alpha, const BlockVector& x, const BlockVector& y) {
  x.require_same(y, "axpy");
  BlockVector out = y;
  for (std::size_t n = 0; n < x.num_blocks(); ++n) {
    auto& o = out.mutable_block(n);
    const auto& xb = x.block(n);
    for (std::size_t i = 0; i < xb.size(); ++i) o[i] += alpha * xb[i];
  }
  return out;
}

/// Relative change ||next - prev|| / ||prev||; absolute when ||prev|| < 1e-12.
inline double relative_change(const BlockVector& next, const BlockVector& prev) {
  const double step = block_norm(next - prev);
  const double base = block_norm(prev);
  return base < 1e-12 ? step : step / base;
}

}  // namespace lbs
