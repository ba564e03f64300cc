#pragma once

// Trajectory-aware frame weighting.
//
// Each observation is encoded to a latent vector f_t; central differences
// give the latent velocity v_t = |f_{t+1} - f_{t-1}| / 2 and acceleration
// a_t = |v_t - v_{t-1}|. Both are min-max normalized over the trajectory,
// the criticality is s_t = max(v_hat_t, a_hat_t), and the frame weights are
// a temperature-scaled softmax of s.
//
// Boundary frames, where the differences are undefined, copy the nearest
// interior value. A constant sequence normalizes to all zeros.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "advtex/image.hpp"
#include "advtex/rng.hpp"

namespace advtex {

using LatentFeature = Eigen::VectorXd;

/// Fixed encoder: grid x grid cell means (RGB) projected by a seeded
/// Gaussian matrix scaled by 1/sqrt(grid * grid * 3). No bias, no training.
class LatentEncoder {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x7a1e57ULL;

  explicit LatentEncoder(int feature_dim = 64, int grid = 8, std::uint64_t seed = kDefaultSeed)
      : grid_(grid), projection_(feature_dim, grid * grid * 3) {
    if (feature_dim <= 0 || grid <= 0) throw std::invalid_argument("encoder: dimensions must be positive");
    Rng rng(seed, "latent-encoder");
    const double scale = 1.0 / std::sqrt(static_cast<double>(grid * grid * 3));
    for (int r = 0; r < projection_.rows(); ++r)
      for (int c = 0; c < projection_.cols(); ++c) projection_(r, c) = rng.normal() * scale;
  }

  int grid() const { return grid_; }
  int feature_dim() const { return static_cast<int>(projection_.rows()); }
  const Eigen::MatrixXd& projection() const { return projection_; }

  /// Cell (i, j) spans rows [i*H/grid, (i+1)*H/grid) and likewise columns.
  Eigen::VectorXd cell_means(const Observation& obs) const {
    if (obs.height < grid_ || obs.width < grid_) throw std::invalid_argument("encoder: observation smaller than grid");
    Eigen::VectorXd g = Eigen::VectorXd::Zero(grid_ * grid_ * 3);
    for (int i = 0; i < grid_; ++i) {
      const int r0 = i * obs.height / grid_, r1 = (i + 1) * obs.height / grid_;
      for (int j = 0; j < grid_; ++j) {
        const int c0 = j * obs.width / grid_, c1 = (j + 1) * obs.width / grid_;
        const double inv = 1.0 / ((r1 - r0) * (c1 - c0));
        for (int r = r0; r < r1; ++r)
          for (int c = c0; c < c1; ++c)
            for (int ch = 0; ch < 3; ++ch) g((i * grid_ + j) * 3 + ch) += obs.at(r, c, ch) * inv;
      }
    }
    return g;
  }

  LatentFeature encode(const Observation& obs) const { return projection_ * cell_means(obs); }

 private:
  int grid_;
  Eigen::MatrixXd projection_;
};

inline LatentFeature encode_latent(const Observation& obs) {
  static const LatentEncoder encoder;
  return encoder.encode(obs);
}

struct DynamicsProfile {
  std::vector<double> velocity;
  std::vector<double> acceleration;
  std::vector<double> velocity_hat;
  std::vector<double> acceleration_hat;
  std::vector<double> criticality;

  std::size_t size() const { return velocity.size(); }
};

struct FrameWeights {
  std::vector<double> w;
  double tau = 0.25;

  std::size_t size() const { return w.size(); }
};

inline constexpr double kDefaultTemperature = 0.25;

inline DynamicsProfile latent_dynamics(const std::vector<LatentFeature>& features) {
  const std::size_t n = features.size();
  if (n < 3) throw std::invalid_argument("latent_dynamics: need at least 3 frames, got " + std::to_string(n));
  DynamicsProfile p;
  p.velocity.assign(n, 0.0);
  p.acceleration.assign(n, 0.0);
  for (std::size_t t = 1; t + 1 < n; ++t) p.velocity[t] = (features[t + 1] - features[t - 1]).norm() / 2.0;
  p.velocity[0] = p.velocity[1];
  p.velocity[n - 1] = p.velocity[n - 2];

  // Interior accelerations need two interior velocities: t in [2, n-2].
  if (n >= 4) {
    for (std::size_t t = 2; t + 1 < n; ++t) p.acceleration[t] = std::abs(p.velocity[t] - p.velocity[t - 1]);
    p.acceleration[0] = p.acceleration[1] = p.acceleration[2];
    p.acceleration[n - 1] = p.acceleration[n - 2];
  }
  return p;
}

namespace detail {
inline std::vector<double> min_max(const std::vector<double>& x) {
  if (x.empty()) return {};
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double range = *hi - *lo;
  std::vector<double> out(x.size(), 0.0);
  if (range > 0.0)
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - *lo) / range;
  return out;
}
}  // namespace detail

inline DynamicsProfile normalize_dynamics(DynamicsProfile p) {
  p.velocity_hat = detail::min_max(p.velocity);
  p.acceleration_hat = detail::min_max(p.acceleration);
  return p;
}

inline std::vector<double> criticality(const DynamicsProfile& p) {
  if (p.velocity_hat.size() != p.acceleration_hat.size())
    throw std::invalid_argument("criticality: profile is not normalized");
  std::vector<double> s(p.velocity_hat.size());
  for (std::size_t t = 0; t < s.size(); ++t) s[t] = std::max(p.velocity_hat[t], p.acceleration_hat[t]);
  return s;
}

inline FrameWeights frame_weights(const std::vector<double>& s, double tau = kDefaultTemperature) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("frame_weights: temperature must be positive");
  if (s.empty()) throw std::invalid_argument("frame_weights: empty criticality sequence");
  for (double v : s)
    if (!std::isfinite(v)) throw std::invalid_argument("frame_weights: non-finite criticality");
  const double peak = *std::max_element(s.begin(), s.end());
  FrameWeights fw;
  fw.tau = tau;
  fw.w.resize(s.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < s.size(); ++t) sum += fw.w[t] = std::exp((s[t] - peak) / tau);
  for (double& w : fw.w) w /= sum;
  return fw;
}

struct TrajectoryWeighting {
  DynamicsProfile profile;
  FrameWeights weights;
};

inline TrajectoryWeighting weigh_trajectory(const std::vector<Observation>& observations, const LatentEncoder& encoder,
                                            double tau = kDefaultTemperature) {
  std::vector<LatentFeature> features;
  features.reserve(observations.size());
  for (const auto& o : observations) features.push_back(encoder.encode(o));
  TrajectoryWeighting tw;
  tw.profile = normalize_dynamics(latent_dynamics(features));
  tw.profile.criticality = criticality(tw.profile);
  tw.weights = frame_weights(tw.profile.criticality, tau);
  return tw;
}

// Baseline schedules.

inline FrameWeights uniform_weights(std::size_t n) {
  FrameWeights fw;
  fw.w.assign(n, 1.0 / static_cast<double>(n));
  return fw;
}

inline FrameWeights single_frame_weights(std::size_t n, std::size_t frame) {
  if (frame >= n) throw std::invalid_argument("single_frame_weights: frame out of range");
  FrameWeights fw;
  fw.w.assign(n, 0.0);
  fw.w[frame] = 1.0;
  return fw;
}

/// Uniform draw from the probability simplex.
inline FrameWeights random_weights(std::size_t n, Rng& rng) {
  FrameWeights fw;
  fw.w.resize(n);
  double sum = 0.0;
  for (double& w : fw.w) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    sum += w = -std::log(u);
  }
  for (double& w : fw.w) w /= sum;
  return fw;
}

inline void write_weights_csv(const std::filesystem::path& path, const TrajectoryWeighting& tw) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(17);
  os << "step,v,alpha,v_hat,alpha_hat,s,w\n";
  const auto& p = tw.profile;
  for (std::size_t t = 0; t < tw.weights.size(); ++t) {
    os << t << ',' << p.velocity[t] << ',' << p.acceleration[t] << ',' << p.velocity_hat[t] << ','
       << p.acceleration_hat[t] << ',' << p.criticality[t] << ',' << tw.weights.w[t] << '\n';
  }
}

inline TrajectoryWeighting read_weights_csv(const std::filesystem::path& path, double tau = kDefaultTemperature) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "step,v,alpha,v_hat,alpha_hat,s,w") throw std::runtime_error(path.string() + ": unexpected header");
  TrajectoryWeighting tw;
  tw.weights.tau = tau;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != 7) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    tw.profile.velocity.push_back(row[1]);
    tw.profile.acceleration.push_back(row[2]);
    tw.profile.velocity_hat.push_back(row[3]);
    tw.profile.acceleration_hat.push_back(row[4]);
    tw.profile.criticality.push_back(row[5]);
    tw.weights.w.push_back(row[6]);
  }
  return tw;
}

}  // namespace advtex
