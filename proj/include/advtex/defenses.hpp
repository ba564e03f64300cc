#pragma once

// Input-space defenses applied to observations before the policy. They are
// used only when evaluating a finished texture, never inside the attack.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "advtex/image.hpp"
#include "advtex/rng.hpp"

namespace advtex {

enum class DefenseKind { none, additive_noise, median_blur, bit_depth };

struct DefenseSpec {
  DefenseKind kind = DefenseKind::none;
  double sigma = 0.05;  // additive_noise
  int kernel = 3;       // median_blur, odd, in {3, 5, 7}
  int bits = 5;         // bit_depth, in [1, 7]
  std::uint64_t seed = 0;
};

inline void validate_defense(const DefenseSpec& d) {
  switch (d.kind) {
    case DefenseKind::none:
      break;
    case DefenseKind::additive_noise:
      if (!(d.sigma >= 0.0 && std::isfinite(d.sigma))) throw std::invalid_argument("defense: sigma must be >= 0");
      break;
    case DefenseKind::median_blur:
      if (d.kernel != 3 && d.kernel != 5 && d.kernel != 7) throw std::invalid_argument("defense: kernel must be 3, 5 or 7");
      break;
    case DefenseKind::bit_depth:
      if (d.bits < 1 || d.bits > 7) throw std::invalid_argument("defense: bits must lie in [1, 7]");
      break;
  }
}

inline std::string to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::none: return "none";
    case DefenseKind::additive_noise: return "noise";
    case DefenseKind::median_blur: return "median";
    case DefenseKind::bit_depth: return "bitdepth";
  }
  return "?";
}

inline Observation bit_depth_reduce(const Observation& obs, int bits) {
  const double levels = std::ldexp(1.0, bits) - 1.0;
  Observation out = obs;
  for (double& v : out.data) v = std::round(std::clamp(v, 0.0, 1.0) * levels) / levels;
  return out;
}

/// Per-channel k x k median with edge replication.
inline Observation median_blur(const Observation& obs, int kernel) {
  const int r = kernel / 2;
  Observation out(obs.height, obs.width);
  std::vector<double> window(static_cast<std::size_t>(kernel) * kernel);
  for (int row = 0; row < obs.height; ++row) {
    for (int col = 0; col < obs.width; ++col) {
      for (int ch = 0; ch < 3; ++ch) {
        std::size_t n = 0;
        for (int dr = -r; dr <= r; ++dr) {
          const int rr = std::clamp(row + dr, 0, obs.height - 1);
          for (int dc = -r; dc <= r; ++dc) window[n++] = obs.at(rr, std::clamp(col + dc, 0, obs.width - 1), ch);
        }
        auto mid = window.begin() + static_cast<std::ptrdiff_t>(n / 2);
        std::nth_element(window.begin(), mid, window.end());
        out.at(row, col, ch) = *mid;
      }
    }
  }
  return out;
}

inline Observation additive_noise(const Observation& obs, double sigma, std::uint64_t seed) {
  Rng rng(seed, "noise-defense");
  Observation out = obs;
  for (double& v : out.data) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
  return out;
}

inline Observation apply_defense(const Observation& obs, const DefenseSpec& spec) {
  validate_defense(spec);
  switch (spec.kind) {
    case DefenseKind::none: return obs;
    case DefenseKind::additive_noise: return additive_noise(obs, spec.sigma, spec.seed);
    case DefenseKind::median_blur: return median_blur(obs, spec.kernel);
    case DefenseKind::bit_depth: return bit_depth_reduce(obs, spec.bits);
  }
  return obs;
}

}  // namespace advtex
