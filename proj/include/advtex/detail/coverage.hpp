#pragma once

// Triangle coverage on a regular sample grid (pixel or texel centers).
//
// Coverage decisions use exact integer edge functions on vertices snapped to
// a 1/4096 sub-sample grid, with an antisymmetric tie rule for samples that
// lie exactly on an edge. Two triangles sharing an edge therefore never both
// claim a sample on that edge, and never both miss it. Barycentric weights
// are evaluated from the unsnapped coordinates and clamped to the simplex.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "advtex/geometry.hpp"

namespace advtex::detail {

inline constexpr std::int64_t kSubSample = 4096;
// Vertices farther than this (in samples) from the origin are rejected so
// the integer edge functions cannot overflow.
inline constexpr double kGuardBand = 65536.0;

struct SnappedPoint {
  std::int64_t x;
  std::int64_t y;
};

inline std::int64_t orient(const SnappedPoint& a, const SnappedPoint& b, const SnappedPoint& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// Exactly one of (a->b) and (b->a) is an owning edge.
inline bool owns_edge(const SnappedPoint& a, const SnappedPoint& b) {
  const std::int64_t dy = b.y - a.y;
  const std::int64_t dx = b.x - a.x;
  return dy > 0 || (dy == 0 && dx < 0);
}

inline bool edge_accepts(std::int64_t e, const SnappedPoint& a, const SnappedPoint& b) {
  return e > 0 || (e == 0 && owns_edge(a, b));
}

/// Calls fn(row, col, bary) for every sample center (col + 0.5, row + 0.5)
/// covered by the triangle (p0, p1, p2), given in sample units with x along
/// columns and y along rows. `bary` weights p0, p1, p2 in that order.
template <class Fn>
void scan_triangle(const Vec2& p0, const Vec2& p1, const Vec2& p2, int rows, int cols, Fn&& fn) {
  const std::array<Vec2, 3> p{p0, p1, p2};
  for (const auto& v : p) {
    if (!v.allFinite() || std::abs(v.x()) > kGuardBand || std::abs(v.y()) > kGuardBand) return;
  }
  std::array<SnappedPoint, 3> s;
  for (int i = 0; i < 3; ++i) {
    s[i] = {std::llround(p[i].x() * kSubSample), std::llround(p[i].y() * kSubSample)};
  }
  std::array<int, 3> order{0, 1, 2};
  std::int64_t area = orient(s[0], s[1], s[2]);
  if (area == 0) return;
  if (area < 0) {
    std::swap(order[1], order[2]);
    area = -area;
  }
  const SnappedPoint& a = s[order[0]];
  const SnappedPoint& b = s[order[1]];
  const SnappedPoint& c = s[order[2]];

  const double min_x = std::min({p0.x(), p1.x(), p2.x()});
  const double max_x = std::max({p0.x(), p1.x(), p2.x()});
  const double min_y = std::min({p0.y(), p1.y(), p2.y()});
  const double max_y = std::max({p0.y(), p1.y(), p2.y()});
  const int col_lo = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
  const int col_hi = std::min(cols - 1, static_cast<int>(std::ceil(max_x - 0.5)));
  const int row_lo = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
  const int row_hi = std::min(rows - 1, static_cast<int>(std::ceil(max_y - 0.5)));
  if (col_lo > col_hi || row_lo > row_hi) return;

  // Unsnapped edge functions for the barycentric weights (original order).
  const double area_d = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p1.y() - p0.y()) * (p2.x() - p0.x());

  for (int row = row_lo; row <= row_hi; ++row) {
    const std::int64_t sy = static_cast<std::int64_t>(row) * kSubSample + kSubSample / 2;
    for (int col = col_lo; col <= col_hi; ++col) {
      const SnappedPoint q{static_cast<std::int64_t>(col) * kSubSample + kSubSample / 2, sy};
      if (!edge_accepts(orient(b, c, q), b, c)) continue;
      if (!edge_accepts(orient(c, a, q), c, a)) continue;
      if (!edge_accepts(orient(a, b, q), a, b)) continue;

      const double qx = col + 0.5;
      const double qy = row + 0.5;
      std::array<double, 3> bary{
          ((p1.x() - qx) * (p2.y() - qy) - (p1.y() - qy) * (p2.x() - qx)) / area_d,
          ((p2.x() - qx) * (p0.y() - qy) - (p2.y() - qy) * (p0.x() - qx)) / area_d,
          ((p0.x() - qx) * (p1.y() - qy) - (p0.y() - qy) * (p1.x() - qx)) / area_d};
      double sum = 0.0;
      for (double& w : bary) {
        w = std::max(w, 0.0);
        sum += w;
      }
      if (sum <= 0.0) continue;
      for (double& w : bary) w /= sum;
      fn(row, col, bary);
    }
  }
}

}  // namespace advtex::detail
