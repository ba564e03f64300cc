#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "advtex/image.hpp"
#include "advtex/policy.hpp"

namespace advtex {

/// Mean SSIM over all 8x8 windows (stride 1) and channels, data range 1.
/// Windows shrink to the image size for images smaller than 8 pixels.
inline double compute_ssim(const Observation& a, const Observation& b) {
  require_same_shape(a, b, "compute_ssim");
  if (a.height == 0 || a.width == 0) throw std::invalid_argument("compute_ssim: empty image");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int wh = std::min(8, a.height);
  const int ww = std::min(8, a.width);
  const double n = static_cast<double>(wh) * ww;
  double total = 0.0;
  long windows = 0;
  for (int ch = 0; ch < 3; ++ch) {
    for (int r0 = 0; r0 + wh <= a.height; ++r0) {
      for (int c0 = 0; c0 + ww <= a.width; ++c0) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int r = r0; r < r0 + wh; ++r)
          for (int c = c0; c < c0 + ww; ++c) {
            const double x = a.at(r, c, ch), y = b.at(r, c, ch);
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
            sab += x * y;
          }
        const double ma = sa / n, mb = sb / n;
        const double va = std::max(0.0, saa / n - ma * ma);
        const double vb = std::max(0.0, sbb / n - mb * mb);
        const double cov = sab / n - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++windows;
      }
    }
  }
  return total / static_cast<double>(windows);
}

/// Mean over timesteps of the mean absolute difference over the 7 channels.
inline double compute_action_l1(const std::vector<ActionVector>& a, const std::vector<ActionVector>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("compute_action_l1: sequence lengths differ");
  if (a.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    double s = 0.0;
    for (int k = 0; k < kActionDim; ++k) s += std::abs(a[t][k] - b[t][k]);
    total += s / kActionDim;
  }
  return total / static_cast<double>(a.size());
}

/// Root mean square over all channels and timesteps.
inline double action_rms(const std::vector<ActionVector>& actions) {
  if (actions.empty()) return 0.0;
  double s = 0.0;
  for (const auto& a : actions)
    for (double v : a) s += v * v;
  return std::sqrt(s / (static_cast<double>(actions.size()) * kActionDim));
}

/// Fraction of trials whose trajectory-mean deviation exceeds `threshold`.
inline double failure_rate(const std::vector<double>& trial_deviations, double threshold) {
  if (trial_deviations.empty()) return 0.0;
  const auto failed = std::count_if(trial_deviations.begin(), trial_deviations.end(),
                                    [&](double d) { return d > threshold; });
  return static_cast<double>(failed) / static_cast<double>(trial_deviations.size());
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace advtex
