#ifndef INTRODRIVE_IMAGE_HPP
#define INTRODRIVE_IMAGE_HPP

// Minimal raster I/O: binary PPM (P6) for frames, binary PGM (P5) for
// attention maps. Nearest-neighbor resize maps destination pixel (r,c) to
// source (r*H/H', c*W/W') with integer division.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "introdrive/common.hpp"

namespace introdrive {

struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  static Image filled(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Image img;
    img.height = h;
    img.width = w;
    img.rgb.resize(static_cast<std::size_t>(h) * w * 3);
    for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
      img.rgb[i] = r;
      img.rgb[i + 1] = g;
      img.rgb[i + 2] = b;
    }
    return img;
  }

  std::uint8_t* px(int r, int c) { return rgb.data() + (static_cast<std::size_t>(r) * width + c) * 3; }
  const std::uint8_t* px(int r, int c) const {
    return rgb.data() + (static_cast<std::size_t>(r) * width + c) * 3;
  }
};

namespace detail {
inline int read_pnm_int(std::istream& in) {
  // skips whitespace and '#' comments per the PNM grammar
  int c = in.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#')
      while (c != '\n' && c != EOF) c = in.get();
    c = in.get();
  }
  int value = 0;
  bool any = false;
  while (c >= '0' && c <= '9') {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw ParseError("malformed PNM header");
  return value;
}
}  // namespace detail

inline void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw IoError("short write: " + path);
}

inline Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  char magic[2];
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '6')
    throw ParseError("not a binary PPM (P6): " + path);
  Image img;
  img.width = detail::read_pnm_int(in);
  img.height = detail::read_pnm_int(in);
  const int maxval = detail::read_pnm_int(in);
  if (maxval != 255) throw ParseError("unsupported PPM maxval in " + path);
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.rgb.size())
    throw ParseError("truncated PPM payload: " + path);
  return img;
}

inline void write_pgm(const std::string& path, int height, int width,
                      const std::vector<std::uint8_t>& gray) {
  if (gray.size() != static_cast<std::size_t>(height) * width)
    throw ShapeError("PGM payload size does not match dimensions");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image: " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!out) throw IoError("short write: " + path);
}

/// Attention map as binary PGM: row-major grid, weights scaled so the
/// maximum maps to 255.
inline void write_attention_pgm(const std::string& path, const std::vector<double>& weights,
                                int grid_h, int grid_w) {
  if (weights.size() != static_cast<std::size_t>(grid_h) * grid_w)
    throw ShapeError("attention map size does not match grid");
  double mx = 0.0;
  for (double w : weights) mx = std::max(mx, w);
  std::vector<std::uint8_t> gray(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i)
    gray[i] = mx > 0.0 ? static_cast<std::uint8_t>(std::lround(weights[i] / mx * 255.0)) : 0;
  write_pgm(path, grid_h, grid_w, gray);
}

/// Raw attention values as CSV, one grid row per line.
inline void write_attention_csv(const std::string& path, const std::vector<double>& weights,
                                int grid_h, int grid_w) {
  if (weights.size() != static_cast<std::size_t>(grid_h) * grid_w)
    throw ShapeError("attention map size does not match grid");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (int r = 0; r < grid_h; ++r) {
    for (int c = 0; c < grid_w; ++c) out << (c ? "," : "") << format_double(weights[r * grid_w + c]);
    out << "\n";
  }
}

inline Image resize_nearest(const Image& src, int out_h, int out_w) {
  if (src.height < 1 || src.width < 1) throw ContractError("resize of empty image");
  Image dst;
  dst.height = out_h;
  dst.width = out_w;
  dst.rgb.resize(static_cast<std::size_t>(out_h) * out_w * 3);
  for (int r = 0; r < out_h; ++r) {
    const int sr = static_cast<int>(static_cast<std::int64_t>(r) * src.height / out_h);
    for (int c = 0; c < out_w; ++c) {
      const int sc = static_cast<int>(static_cast<std::int64_t>(c) * src.width / out_w);
      const std::uint8_t* s = src.px(sr, sc);
      std::uint8_t* d = dst.px(r, c);
      d[0] = s[0];
      d[1] = s[1];
      d[2] = s[2];
    }
  }
  return dst;
}

}  // namespace introdrive

#endif
