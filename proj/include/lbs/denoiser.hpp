#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "lbs/core.hpp"
#include "lbs/image_io.hpp"
#include "lbs/linear_ops.hpp"
#include "lbs/problem.hpp"
#include "lbs/rng.hpp"
#include "lbs/synthetic.hpp"

namespace lbs {

using ImageFilter = std::function<DenseVector(const DenseVector&)>;

// ---------------------------------------------------------------------------
// Built-in (non-learned) filters

inline DenseVector median3x3(const DenseVector& u) {
  if (!u.is_image()) throw DimensionError("median3x3 expects a 2-D image");
  const std::size_t h = u.height(), w = u.width();
  DenseVector out = DenseVector::zeros_like(u);
  std::array<double, 9> win{};
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      std::size_t k = 0;
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) win[k++] = u((i + h + a - 1) % h, (j + w + b - 1) % w);
      std::nth_element(win.begin(), win.begin() + 4, win.end());
      out(i, j) = win[4];
    }
  return out;
}

/// Soft-thresholds every Haar detail coefficient at tau; the coarsest
/// approximation band is left untouched.
inline DenseVector wavelet_shrink(const DenseVector& u, double tau, int levels = 3) {
  if (!(tau >= 0.0)) throw DomainError("wavelet_shrink: tau must be >= 0");
  DenseVector c = haar_dwt(u, levels);
  const std::size_t h = c.height(), w = c.width();
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t q = 0; q < w; ++q)
      if (!haar_is_approximation(r, q, h, w, levels)) {
        const double v = c(r, q);
        c(r, q) = std::copysign(std::max(std::abs(v) - tau, 0.0), v);
      }
  return haar_idwt(c, levels);
}

struct BuiltinFilters {
  ImageFilter identity = [](const DenseVector& u) { return u; };
  ImageFilter median = median3x3;
  std::function<ImageFilter(double, int)> wavelet = [](double tau, int levels) -> ImageFilter {
    return [tau, levels](const DenseVector& u) { return wavelet_shrink(u, tau, levels); };
  };
};

inline BuiltinFilters builtin_denoisers() { return {}; }

// ---------------------------------------------------------------------------
// Adapters from image filters to block operators

/// Applies `filter` to block `n` (an image) and leaves other blocks unchanged.
inline DenoiserOp on_block(std::string name, ImageFilter filter, std::size_t n = 0) {
  return {std::move(name),
          [filter = std::move(filter), n](const BlockVector& x) {
            BlockVector out = x;
            out.set_block(n, filter(x.block(n)));
            return out;
          },
          {}};
}

/// For a variable holding Haar coefficients: synthesize, filter, analyze.
inline DenoiserOp in_haar_domain(std::string name, ImageFilter filter, int levels) {
  return {std::move(name),
          [filter = std::move(filter), levels](const BlockVector& x) {
            return BlockVector({haar_dwt(filter(haar_idwt(x.block(0), levels)), levels)}, x.labels());
          },
          {}};
}

/// x + strength (T(x) - x); strength 1 returns op itself.
inline DenoiserOp blend(DenoiserOp op, double strength) {
  if (!(strength > 0.0 && strength <= 1.0)) throw DomainError("blend: strength must lie in (0, 1]");
  if (strength == 1.0) return op;
  DenoiserOp out{op.name, {}, op.metadata};
  out.metadata["strength"] = std::to_string(strength);
  out.apply = [inner = std::move(op.apply), strength](const BlockVector& x) {
    return axpy(strength, inner(x) - x, x);
  };
  return out;
}

namespace detail {

inline std::uint64_t hash_values(const BlockVector& x) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& b : x.blocks())
    for (double v : b) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = (h ^ bits) * 0x100000001b3ull;
    }
  return h;
}

}  // namespace detail

/// Adversarial operator: replaces each block by seeded noise of the given
/// amplitude. The noise depends only on (seed, input), so the map is deterministic.
inline DenoiserOp noise_operator(std::uint64_t seed, double amplitude) {
  return {"noise",
          [seed, amplitude](const BlockVector& x) {
            SeededRng rng(seed ^ detail::hash_values(x));
            BlockVector out = x;
            for (std::size_t n = 0; n < x.num_blocks(); ++n)
              out.set_block(n, gaussian_noise(rng, x.block(n).shape(), amplitude));
            return out;
          },
          {{"amplitude", std::to_string(amplitude)}}};
}

inline DenoiserOp negation_operator() {
  return {"negation", [](const BlockVector& x) { return -1.0 * x; }, {}};
}

inline DenoiserOp constant_operator(double value) {
  return {"constant",
          [value](const BlockVector& x) {
            BlockVector out = x;
            for (std::size_t n = 0; n < x.num_blocks(); ++n)
              out.set_block(n, DenseVector(x.block(n).shape(), value));
            return out;
          },
          {}};
}

/// Flips the sign of a fixed pseudo-random half of the entries.
inline DenoiserOp sign_flip_operator(std::uint64_t seed) {
  return {"sign_flip",
          [seed](const BlockVector& x) {
            BlockVector out = x;
            for (std::size_t n = 0; n < x.num_blocks(); ++n) {
              DenseVector& b = out.mutable_block(n);
              for (std::size_t i = 0; i < b.size(); ++i)
                if (SeededRng::word(seed + n, i) & 1u) b[i] = -b[i];
            }
            return out;
          },
          {}};
}

// ---------------------------------------------------------------------------
// Residual convolutional network

/// C x H x W feature maps, row-major per channel.
struct FeatureMaps {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> data;

  FeatureMaps() = default;
  FeatureMaps(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), data(c * h * w) {}

  static FeatureMaps from_image(const DenseVector& u) {
    if (!u.is_image()) throw DimensionError("FeatureMaps expects a 2-D image");
    FeatureMaps f(1, u.height(), u.width());
    std::copy(u.begin(), u.end(), f.data.begin());
    return f;
  }

  DenseVector channel_image(std::size_t c) const {
    const auto b = data.begin() + static_cast<std::ptrdiff_t>(c * height * width);
    return DenseVector({height, width}, std::vector<double>(b, b + static_cast<std::ptrdiff_t>(height * width)));
  }

  double& at(std::size_t c, std::size_t i, std::size_t j) { return data[(c * height + i) * width + j]; }
  double at(std::size_t c, std::size_t i, std::size_t j) const { return data[(c * height + i) * width + j]; }
};

/// 3 x 3 convolution (cross-correlation) with circular padding.
struct ConvLayer {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::vector<double> weights;  // [out][in][3][3]
  std::vector<double> bias;     // [out]

  ConvLayer() = default;
  ConvLayer(std::size_t in, std::size_t out)
      : in_channels(in), out_channels(out), weights(out * in * 9, 0.0), bias(out, 0.0) {}

  double& w(std::size_t o, std::size_t c, std::size_t a, std::size_t b) {
    return weights[((o * in_channels + c) * 3 + a) * 3 + b];
  }
  double w(std::size_t o, std::size_t c, std::size_t a, std::size_t b) const {
    return weights[((o * in_channels + c) * 3 + a) * 3 + b];
  }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }
};

struct ConvGradients {
  FeatureMaps input;
  std::vector<double> weights;
  std::vector<double> bias;
};

namespace detail {

// (H+2) x (W+2) circularly padded copy of every channel.
inline std::vector<double> pad_circular(const FeatureMaps& x) {
  const std::size_t h = x.height, w = x.width, pw = w + 2;
  std::vector<double> p(x.channels * (h + 2) * pw);
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t i = 0; i < h + 2; ++i)
      for (std::size_t j = 0; j < pw; ++j)
        p[(c * (h + 2) + i) * pw + j] = x.at(c, (i + h - 1) % h, (j + w - 1) % w);
  return p;
}

}  // namespace detail

inline FeatureMaps conv_forward(const ConvLayer& layer, const FeatureMaps& x) {
  if (x.channels != layer.in_channels)
    throw DimensionError("conv_forward: layer expects " + std::to_string(layer.in_channels) +
                         " channels, got " + std::to_string(x.channels));
  const std::size_t h = x.height, w = x.width, pw = w + 2;
  const std::vector<double> p = detail::pad_circular(x);
  FeatureMaps y(layer.out_channels, h, w);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    double* yo = &y.data[o * h * w];
    std::fill(yo, yo + h * w, layer.bias[o]);
    for (std::size_t c = 0; c < layer.in_channels; ++c) {
      const double* pc = &p[c * (h + 2) * pw];
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) {
          const double k = layer.w(o, c, a, b);
          if (k == 0.0) continue;
          for (std::size_t i = 0; i < h; ++i) {
            const double* row = pc + (i + a) * pw + b;
            double* out = yo + i * w;
            for (std::size_t j = 0; j < w; ++j) out[j] += k * row[j];
          }
        }
    }
  }
  return y;
}

/// Exact gradients of <grad_out, conv_forward(layer, x)> with respect to
/// the input, the weights and the bias.
inline ConvGradients conv_backward(const ConvLayer& layer, const FeatureMaps& x,
                                   const FeatureMaps& grad_out) {
  if (x.channels != layer.in_channels || grad_out.channels != layer.out_channels ||
      grad_out.height != x.height || grad_out.width != x.width)
    throw DimensionError("conv_backward: shape mismatch");
  const std::size_t h = x.height, w = x.width, pw = w + 2;
  const std::vector<double> p = detail::pad_circular(x);
  std::vector<double> gp(p.size(), 0.0);
  ConvGradients g{FeatureMaps(x.channels, h, w), std::vector<double>(layer.weights.size(), 0.0),
                  std::vector<double>(layer.out_channels, 0.0)};
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    const double* go = &grad_out.data[o * h * w];
    double sb = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) sb += go[i];
    g.bias[o] = sb;
    for (std::size_t c = 0; c < layer.in_channels; ++c) {
      const double* pc = &p[c * (h + 2) * pw];
      double* gpc = &gp[c * (h + 2) * pw];
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) {
          const double k = layer.w(o, c, a, b);
          double sw = 0.0;
          for (std::size_t i = 0; i < h; ++i) {
            const double* row = pc + (i + a) * pw + b;
            double* grow = gpc + (i + a) * pw + b;
            const double* gi = go + i * w;
            for (std::size_t j = 0; j < w; ++j) {
              sw += gi[j] * row[j];
              grow[j] += k * gi[j];
            }
          }
          g.weights[((o * layer.in_channels + c) * 3 + a) * 3 + b] = sw;
        }
    }
  }
  // fold the padded gradient back onto the periodic grid
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t i = 0; i < h + 2; ++i)
      for (std::size_t j = 0; j < pw; ++j)
        g.input.at(c, (i + h - 1) % h, (j + w - 1) % w) += gp[(c * (h + 2) + i) * pw + j];
  return g;
}

/// x -> x - N(x), where N is a stack of 3x3 convolutions separated by
/// rectifiers that predicts the noise in x.
class ResidualConvNet {
 public:
  ResidualConvNet() = default;
  explicit ResidualConvNet(std::vector<ConvLayer> layers) : layers_(std::move(layers)) { check(); }

  /// conv layers: 1 -> channels -> ... -> channels -> 1. Hidden layers get a
  /// centered uniform init scaled by 1/sqrt(fan-in); the last layer starts at
  /// zero so the fresh network is the identity.
  static ResidualConvNet make(std::size_t conv_layers, std::size_t channels, std::uint64_t seed) {
    if (conv_layers < 1 || channels < 1) throw DomainError("ResidualConvNet needs >= 1 layer and channel");
    std::vector<ConvLayer> layers;
    SeededRng rng = SeededRng(seed).substream("net-init");
    for (std::size_t l = 0; l < conv_layers; ++l) {
      const std::size_t in = l == 0 ? 1 : channels;
      const std::size_t out = l + 1 == conv_layers ? 1 : channels;
      ConvLayer layer(in, out);
      if (l + 1 < conv_layers) {
        const double s = 1.0 / std::sqrt(static_cast<double>(in * 9));
        for (double& v : layer.weights) v = rng.uniform(-s, s);
      }
      layers.push_back(std::move(layer));
    }
    return ResidualConvNet(std::move(layers));
  }

  const std::vector<ConvLayer>& layers() const noexcept { return layers_; }
  std::vector<ConvLayer>& layers() noexcept { return layers_; }

  /// Diagnostic mode: rectifiers become identities and the net is linear.
  void set_bypass_rectifiers(bool on) noexcept { bypass_ = on; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.parameter_count();
    return n;
  }

  std::vector<double> parameters() const {
    std::vector<double> p;
    for (const auto& l : layers_) {
      p.insert(p.end(), l.weights.begin(), l.weights.end());
      p.insert(p.end(), l.bias.begin(), l.bias.end());
    }
    return p;
  }

  void set_parameters(const std::vector<double>& p) {
    if (p.size() != parameter_count()) throw DimensionError("set_parameters: wrong parameter count");
    std::size_t k = 0;
    for (auto& l : layers_) {
      for (double& v : l.weights) v = p[k++];
      for (double& v : l.bias) v = p[k++];
    }
  }

  /// Predicted noise N(x).
  DenseVector predict_noise(const DenseVector& x) const {
    FeatureMaps a = FeatureMaps::from_image(x);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      a = conv_forward(layers_[l], a);
      if (l + 1 < layers_.size() && !bypass_)
        for (double& v : a.data) v = std::max(v, 0.0);
    }
    return a.channel_image(0);
  }

  /// x - N(x); throws NumericalFault on non-finite output.
  DenseVector apply(const DenseVector& x) const {
    DenseVector out = x - predict_noise(x);
    if (!out.all_finite()) throw NumericalFault("denoiser produced non-finite output");
    return out;
  }

  /// Loss sum_i weight * (N(x)_i - target_i)^2 and its parameter gradient
  /// (flattened in parameters() order), accumulated into `grad`.
  double loss_and_gradient(const DenseVector& x, const DenseVector& target, double weight,
                           std::vector<double>& grad) const {
    const std::size_t nl = layers_.size();
    std::vector<FeatureMaps> inputs;  // input of each conv
    std::vector<FeatureMaps> pre;     // output of each conv
    FeatureMaps a = FeatureMaps::from_image(x);
    for (std::size_t l = 0; l < nl; ++l) {
      inputs.push_back(a);
      a = conv_forward(layers_[l], a);
      pre.push_back(a);
      if (l + 1 < nl && !bypass_)
        for (double& v : a.data) v = std::max(v, 0.0);
    }
    FeatureMaps g(1, x.height(), x.width());
    double loss = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double r = a.data[i] - target[i];
      loss += weight * r * r;
      g.data[i] = 2.0 * weight * r;
    }
    if (grad.size() != parameter_count()) grad.assign(parameter_count(), 0.0);
    std::vector<std::size_t> offset(nl + 1, 0);
    for (std::size_t l = 0; l < nl; ++l) offset[l + 1] = offset[l] + layers_[l].parameter_count();
    for (std::size_t l = nl; l-- > 0;) {
      if (l + 1 < nl && !bypass_)
        for (std::size_t i = 0; i < g.data.size(); ++i)
          if (pre[l].data[i] <= 0.0) g.data[i] = 0.0;
      ConvGradients cg = conv_backward(layers_[l], inputs[l], g);
      std::size_t k = offset[l];
      for (double v : cg.weights) grad[k++] += v;
      for (double v : cg.bias) grad[k++] += v;
      g = std::move(cg.input);
    }
    return loss;
  }

 private:
  void check() const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      if (L.weights.size() != L.in_channels * L.out_channels * 9 || L.bias.size() != L.out_channels)
        throw DimensionError("ResidualConvNet: inconsistent layer " + std::to_string(l));
      if (l == 0 && L.in_channels != 1) throw DimensionError("first layer must take 1 channel");
      if (l > 0 && L.in_channels != layers_[l - 1].out_channels)
        throw DimensionError("ResidualConvNet: channel mismatch at layer " + std::to_string(l));
    }
    if (!layers_.empty() && layers_.back().out_channels != 1)
      throw DimensionError("last layer must produce 1 channel");
  }

  std::vector<ConvLayer> layers_;
  bool bypass_ = false;
};

inline DenseVector denoiser_apply(const ResidualConvNet& net, const DenseVector& x) { return net.apply(x); }

// ---------------------------------------------------------------------------
// Weight file: "LBSNET" magic, u32 version, u32 layer count, then per layer
// u32 out, u32 in, u32 kh, u32 kw followed by out*in*kh*kw weights and out
// biases as little-endian IEEE-754 doubles.

namespace detail {

inline constexpr char kWeightMagic[6] = {'L', 'B', 'S', 'N', 'E', 'T'};
inline constexpr std::uint32_t kWeightVersion = 1;

inline void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_f64(std::ostream& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, sizeof v);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError(path + ": truncated weight file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
inline double get_f64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError(path + ": truncated weight file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  double d;
  std::memcpy(&d, &v, sizeof d);
  return d;
}

}  // namespace detail

inline void write_weights(const ResidualConvNet& net, std::ostream& out) {
  out.write(detail::kWeightMagic, sizeof detail::kWeightMagic);
  detail::put_u32(out, detail::kWeightVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    detail::put_u32(out, static_cast<std::uint32_t>(l.out_channels));
    detail::put_u32(out, static_cast<std::uint32_t>(l.in_channels));
    detail::put_u32(out, 3);
    detail::put_u32(out, 3);
    for (double v : l.weights) detail::put_f64(out, v);
    for (double v : l.bias) detail::put_f64(out, v);
  }
}

inline ResidualConvNet read_weights(std::istream& in, const std::string& path = "<stream>") {
  char magic[sizeof detail::kWeightMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, detail::kWeightMagic, sizeof magic) != 0)
    throw IoError(path + ": not a denoiser weight file (bad magic)");
  const std::uint32_t version = detail::get_u32(in, path);
  if (version != detail::kWeightVersion)
    throw IoError(path + ": unsupported weight file version " + std::to_string(version));
  const std::uint32_t count = detail::get_u32(in, path);
  if (count == 0 || count > 64) throw IoError(path + ": implausible layer count " + std::to_string(count));
  std::vector<ConvLayer> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    const std::uint32_t out = detail::get_u32(in, path), inc = detail::get_u32(in, path);
    const std::uint32_t kh = detail::get_u32(in, path), kw = detail::get_u32(in, path);
    if (kh != 3 || kw != 3) throw IoError(path + ": only 3x3 kernels are supported");
    if (out == 0 || inc == 0 || out > 4096 || inc > 4096) throw IoError(path + ": implausible channel counts");
    ConvLayer layer(inc, out);
    for (double& v : layer.weights) v = detail::get_f64(in, path);
    for (double& v : layer.bias) v = detail::get_f64(in, path);
    for (double v : layer.weights)
      if (!std::isfinite(v)) throw IoError(path + ": non-finite weight");
    layers.push_back(std::move(layer));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes after weights");
  try {
    return ResidualConvNet(std::move(layers));
  } catch (const DimensionError& e) {
    throw IoError(path + ": " + e.what());
  }
}

inline void save_weights(const ResidualConvNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write weights " + path);
  write_weights(net, out);
  if (!out) throw IoError("failed writing weights " + path);
}

inline ResidualConvNet load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights " + path);
  return read_weights(in, path);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t patch_size = 35;
  double noise_sigma = 0.1;
  double learning_rate = 0.05;
  std::size_t epochs = 4;
  std::size_t batch_size = 8;
  std::size_t patches_per_epoch = 512;
  /// Heavy-ball coefficient in [0, 1); 0 is plain SGD.
  double momentum = 0.9;
  std::uint64_t seed = 1;
  /// Worker threads for per-sample gradients; reduction order is fixed.
  std::size_t threads = 1;

  void validate() const {
    if (patch_size == 0 || epochs == 0 || batch_size == 0 || patches_per_epoch == 0)
      throw DomainError("TrainConfig: sizes must be positive");
    if (!(noise_sigma >= 0.0)) throw DomainError("TrainConfig: noise_sigma must be >= 0");
    if (!(learning_rate > 0.0)) throw DomainError("TrainConfig: learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("TrainConfig: momentum must lie in [0, 1)");
  }
};

struct TrainResult {
  std::vector<double> loss_curve;  // mean per-pixel loss of every batch
  std::vector<double> epoch_loss;
};

/// Thread count from LBS_THREADS (default 1).
inline std::size_t threads_from_env() {
  if (const char* s = std::getenv("LBS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (end != s && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
  }
  return 1;
}

/// Patch with circular wrap, so every pixel is equally likely to be covered.
inline DenseVector extract_patch(const DenseVector& img, std::size_t top, std::size_t left, std::size_t size) {
  DenseVector p(size, size);
  const std::size_t h = img.height(), w = img.width();
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) p(i, j) = img((top + i) % h, (left + j) % w);
  return p;
}

/// Minibatch SGD on the mean squared error between the predicted and the
/// true noise of (clean + N(0, sigma^2)) patches.
inline TrainResult train(ResidualConvNet& net, const std::vector<DenseVector>& corpus, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw DomainError("train: corpus is empty");
  SeededRng patch_rng = SeededRng(cfg.seed).substream("patches");
  SeededRng noise_rng = SeededRng(cfg.seed).substream("noise");
  TrainResult result;
  double initial = -1.0;
  const std::size_t np = net.parameter_count();
  const std::size_t batches = (cfg.patches_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  const double pix = static_cast<double>(cfg.patch_size * cfg.patch_size);
  std::vector<double> velocity(np, 0.0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<DenseVector> noisy(cfg.batch_size), noise(cfg.batch_size);
      for (std::size_t s = 0; s < cfg.batch_size; ++s) {
        const DenseVector& img = corpus[patch_rng.below(corpus.size())];
        const std::size_t top = patch_rng.below(img.height()), left = patch_rng.below(img.width());
        DenseVector clean = extract_patch(img, top, left, cfg.patch_size);
        noise[s] = gaussian_noise(noise_rng, clean.shape(), cfg.noise_sigma);
        noisy[s] = clean + noise[s];
      }
      const double weight = 1.0 / (pix * static_cast<double>(cfg.batch_size));
      std::vector<std::vector<double>> grads(cfg.batch_size, std::vector<double>(np, 0.0));
      std::vector<double> losses(cfg.batch_size, 0.0);
      auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s) losses[s] = net.loss_and_gradient(noisy[s], noise[s], weight, grads[s]);
      };
      const std::size_t nt = std::max<std::size_t>(1, std::min(cfg.threads, cfg.batch_size));
      if (nt == 1) {
        work(0, cfg.batch_size);
      } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (cfg.batch_size + nt - 1) / nt;
        for (std::size_t k = 0; k < nt; ++k)
          pool.emplace_back(work, k * chunk, std::min(cfg.batch_size, (k + 1) * chunk));
        for (auto& th : pool) th.join();
      }
      double loss = 0.0;
      std::vector<double> grad(np, 0.0);
      for (std::size_t s = 0; s < cfg.batch_size; ++s) {
        loss += losses[s];
        for (std::size_t k = 0; k < np; ++k) grad[k] += grads[s][k];
      }
      if (!std::isfinite(loss) || (initial >= 0.0 && loss > 10.0 * std::max(initial, 1e-12)))
        throw TrainingFault("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                            std::to_string(loss) + "); reduce the learning rate");
      if (initial < 0.0) initial = loss;
      std::vector<double> p = net.parameters();
      for (std::size_t k = 0; k < np; ++k) {
        velocity[k] = cfg.momentum * velocity[k] - cfg.learning_rate * grad[k];
        p[k] += velocity[k];
      }
      net.set_parameters(p);
      result.loss_curve.push_back(loss);
      epoch_sum += loss;
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(batches));
  }
  return result;
}

/// Seeded corpus of procedural scenes.
inline std::vector<DenseVector> synthetic_corpus(std::uint64_t seed, std::size_t count, std::size_t size,
                                                 SceneKind kind = SceneKind::piecewise_smooth) {
  SeededRng rng = SeededRng(seed).substream("corpus");
  std::vector<DenseVector> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(synthetic_image(rng, size, size, kind));
  return out;
}

/// Every .pgm/.ppm in a directory (sorted by name); color images contribute
/// their channel mean.
inline std::vector<DenseVector> load_corpus_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("corpus directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<DenseVector> out;
  for (const auto& f : files) {
    Image img = read_pnm(f.string());
    DenseVector g = DenseVector::zeros_like(img.channels[0]);
    for (const auto& c : img.channels) g += c;
    out.push_back((1.0 / static_cast<double>(img.channels.size())) * g);
  }
  if (out.empty()) throw IoError("no .pgm/.ppm images in " + dir);
  return out;
}

}  // namespace lbs
