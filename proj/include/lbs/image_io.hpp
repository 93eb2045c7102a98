#pragma once

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lbs/core.hpp"

namespace lbs {

/// 8-bit image converted to [0, 1] floats, one DenseVector per channel.
struct Image {
  std::vector<DenseVector> channels;

  std::size_t height() const { return channels.empty() ? 0 : channels[0].height(); }
  std::size_t width() const { return channels.empty() ? 0 : channels[0].width(); }
};

namespace detail {

inline std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok += ch;
  }
  if (tok.empty()) throw IoError(path + ": truncated header");
  return tok;
}

inline std::size_t parse_header_number(std::istream& in, const std::string& path) {
  const std::string tok = next_token(in, path);
  try {
    std::size_t pos = 0;
    const unsigned long v = std::stoul(tok, &pos);
    if (pos != tok.size()) throw IoError(path + ": bad header field '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    throw IoError(path + ": bad header field '" + tok + "'");
  }
}

}  // namespace detail

/// Binary PGM (P5) or PPM (P6) with maxval <= 255.
inline Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  const std::string magic = detail::next_token(in, path);
  std::size_t nch = 0;
  if (magic == "P5")
    nch = 1;
  else if (magic == "P6")
    nch = 3;
  else
    throw IoError(path + ": unsupported format '" + magic + "' (need P5 or P6)");
  const std::size_t w = detail::parse_header_number(in, path);
  const std::size_t h = detail::parse_header_number(in, path);
  const std::size_t maxval = detail::parse_header_number(in, path);
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
    throw IoError(path + ": unsupported dimensions or maxval");
  std::vector<unsigned char> raw(w * h * nch);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IoError(path + ": truncated pixel data");
  Image img;
  img.channels.assign(nch, DenseVector(h, w));
  const auto scale = static_cast<double>(maxval);
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < nch; ++c) img.channels[c][i] = raw[i * nch + c] / scale;
  return img;
}

inline unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void write_pnm(const Image& img, const std::string& path) {
  const std::size_t nch = img.channels.size();
  if (nch != 1 && nch != 3) throw DimensionError("write_pnm: need 1 or 3 channels");
  const std::size_t h = img.height(), w = img.width();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path);
  out << (nch == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> raw(w * h * nch);
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < nch; ++c) raw[i * nch + c] = to_byte(img.channels[c][i]);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("failed writing image " + path);
}

inline void write_pgm(const DenseVector& gray, const std::string& path) {
  write_pnm(Image{{gray}}, path);
}

/// 8-bit quantization round trip, matching what write_pnm/read_pnm produce.
inline DenseVector quantize8(const DenseVector& x) {
  return map(x, [](double v) { return to_byte(v) / 255.0; });
}

}  // namespace lbs
