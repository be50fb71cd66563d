#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "vdst/core/error.hpp"
#include "vdst/core/tensor.hpp"

// Binary PGM (P5) / PPM (P6) images, the frame format of folder datasets and
// of the difference maps the inspect command renders. Values map linearly
// between [0,1] floats and 8-bit bytes.

namespace vdst {

namespace detail {

inline int pnm_next_int(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comment lines, then reads one integer.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF) throw IoError("pnm: truncated header in " + path);
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw IoError("pnm: malformed header in " + path);
  return value;
}

}  // namespace detail

// Reads a binary PGM or PPM file into a [C,H,W] tensor, C = 1 or 3.
template <class S>
Tensor<S> read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pnm: cannot open " + path);
  char p = 0, kind = 0;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '5' && kind != '6'))
    throw IoError("pnm: " + path + " is not a binary PGM/PPM file");
  const Index channels = (kind == '5') ? 1 : 3;
  const Index w = detail::pnm_next_int(in, path);
  const Index h = detail::pnm_next_int(in, path);
  const int maxval = detail::pnm_next_int(in, path);
  if (maxval <= 0 || maxval > 255)
    throw IoError("pnm: unsupported maxval in " + path);
  // Exactly one whitespace byte separates header from payload.
  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * channels));
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw IoError("pnm: truncated pixel data in " + path);

  Tensor<S> out({channels, h, w});
  const S scale = S(1) / static_cast<S>(maxval);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < channels; ++c)
        out.at({c, y, x}) =
            scale * static_cast<S>(raw[static_cast<std::size_t>(
                        (y * w + x) * channels + c)]);
  return out;
}

// Writes a [C,H,W] tensor (C = 1 or 3, values clamped to [0,1]) as P5/P6.
template <class S>
void write_pnm(const std::string& path, const Tensor<S>& chw) {
  require_input(chw.rank() == 3, "write_pnm: want [C,H,W], got " +
                                     shape_str(chw.shape()));
  const Index channels = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  require_input(channels == 1 || channels == 3,
                "write_pnm: channels must be 1 or 3");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pnm: cannot write " + path);
  out << (channels == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * channels));
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < channels; ++c) {
        double v = static_cast<double>(chw.at({c, y, x}));
        v = std::min(1.0, std::max(0.0, v));
        raw[static_cast<std::size_t>((y * w + x) * channels + c)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("pnm: short write to " + path);
}

}  // namespace vdst
