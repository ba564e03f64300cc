#pragma once

// H x W x 3 images stored row-major, channel-interleaved (HWC).
//
// Both textures and observations use this type. Row 0 is the top of an
// observation. For textures, texel (row r, col c) has its center at
// u = (c + 0.5) / W, v = (r + 0.5) / H.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "advtex/geometry.hpp"

namespace advtex {

struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {
    if (h < 0 || w < 0) throw std::invalid_argument("Image: negative dimensions");
  }

  ImageSize size() const { return {height, width}; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  std::size_t index(int row, int col, int ch = 0) const {
    return (static_cast<std::size_t>(row) * width + col) * 3 + ch;
  }
  double& at(int row, int col, int ch) { return data[index(row, col, ch)]; }
  double at(int row, int col, int ch) const { return data[index(row, col, ch)]; }

  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

using Observation = Image;
using TextureMap = Image;

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": image dimensions differ (" +
                                std::to_string(a.height) + "x" + std::to_string(a.width) +
                                " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width) + ")");
}

inline double max_abs_diff(const Image& a, const Image& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

inline bool all_in_unit_range(const Image& img) {
  return std::all_of(img.data.begin(), img.data.end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

inline double dot(const Image& a, const Image& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace advtex
