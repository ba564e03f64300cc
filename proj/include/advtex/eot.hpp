#pragma once

// Expectation over transformations and multi-view sampling.
//
// A transformation has a 3D part, applied to the scene before rendering
// (object yaw and table-plane shift, camera orbit about the look-at point,
// camera distance scale), and a 2D part applied to the composited
// observation:
//
//   y = clamp(contrast * (box_blur(x) - 0.5) + 0.5 + brightness, 0, 1)
//
// The 2D part is linear before the clamp, so its adjoint is exact. Every
// parameter is drawn uniformly from its range; components at their identity
// value are skipped so that an all-zero configuration reproduces the
// untransformed path bit for bit.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "advtex/fbd.hpp"
#include "advtex/geometry.hpp"
#include "advtex/image.hpp"
#include "advtex/rng.hpp"

namespace advtex {

struct EotConfig {
  bool enabled = false;
  double max_rotation = 0.0;     // radians, object yaw
  double max_translation = 0.0;  // scene units, object shift in the x-z plane
  double max_orbit = 0.0;        // radians, camera yaw and pitch about the target point
  double min_distance_scale = 1.0;
  double max_distance_scale = 1.0;
  double max_brightness = 0.0;
  double min_contrast = 1.0;
  double max_contrast = 1.0;
  std::vector<int> blur_kernels{1};  // odd box sizes; 1 = no blur
};

inline void validate_eot(const EotConfig& c) {
  for (double v : {c.max_rotation, c.max_translation, c.max_orbit, c.max_brightness})
    if (!(v >= 0.0 && std::isfinite(v))) throw std::invalid_argument("eot: maxima must be finite and >= 0");
  if (!(c.min_distance_scale > 0.0 && c.min_distance_scale <= 1.0 && c.max_distance_scale >= 1.0 &&
        std::isfinite(c.max_distance_scale)))
    throw std::invalid_argument("eot: distance scale range must contain 1");
  if (!(c.min_contrast > 0.0 && c.min_contrast <= 1.0 && c.max_contrast >= 1.0 && std::isfinite(c.max_contrast)))
    throw std::invalid_argument("eot: contrast range must contain 1");
  if (c.blur_kernels.empty() || std::find(c.blur_kernels.begin(), c.blur_kernels.end(), 1) == c.blur_kernels.end())
    throw std::invalid_argument("eot: blur kernel set must contain 1");
  for (int k : c.blur_kernels)
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("eot: blur kernels must be odd and positive");
}

struct EotSample {
  double rotation = 0.0;
  double shift_x = 0.0;
  double shift_z = 0.0;
  double orbit_yaw = 0.0;
  double orbit_pitch = 0.0;
  double distance_scale = 1.0;
  double brightness = 0.0;
  double contrast = 1.0;
  int blur = 1;
};

/// Always consumes the same number of draws regardless of the ranges.
inline EotSample draw_eot(const EotConfig& c, Rng& rng) {
  EotSample s;
  s.rotation = rng.uniform(-c.max_rotation, c.max_rotation);
  s.shift_x = rng.uniform(-c.max_translation, c.max_translation);
  s.shift_z = rng.uniform(-c.max_translation, c.max_translation);
  s.orbit_yaw = rng.uniform(-c.max_orbit, c.max_orbit);
  s.orbit_pitch = rng.uniform(-c.max_orbit, c.max_orbit);
  s.distance_scale = rng.uniform(c.min_distance_scale, c.max_distance_scale);
  s.brightness = rng.uniform(-c.max_brightness, c.max_brightness);
  s.contrast = rng.uniform(c.min_contrast, c.max_contrast);
  s.blur = c.blur_kernels[rng.below(c.blur_kernels.size())];
  if (c.max_rotation == 0.0) s.rotation = 0.0;
  if (c.max_translation == 0.0) s.shift_x = s.shift_z = 0.0;
  if (c.max_orbit == 0.0) s.orbit_yaw = s.orbit_pitch = 0.0;
  return s;
}

/// Rotates the eye about the look-at point (yaw about `up`, then pitch about
/// the camera's horizontal axis) and scales its distance.
inline CameraSpec orbit_camera(CameraSpec camera, double yaw, double pitch, double distance_scale = 1.0) {
  if (yaw == 0.0 && pitch == 0.0 && distance_scale == 1.0) return camera;
  Vec3 offset = camera.eye - camera.target;
  const Vec3 up = camera.up.normalized();
  if (yaw != 0.0) offset = Eigen::AngleAxisd(yaw, up) * offset;
  if (pitch != 0.0) {
    const Vec3 right = offset.cross(up);
    if (right.norm() > 0.0) offset = Eigen::AngleAxisd(pitch, right.normalized()) * offset;
  }
  camera.eye = camera.target + distance_scale * offset;
  return camera;
}

inline SceneFrame apply_pose_perturbation(SceneFrame frame, double rotation, double shift_x, double shift_z) {
  if (rotation != 0.0) frame.target_model = frame.target_model * rotation_y(rotation);
  if (shift_x != 0.0 || shift_z != 0.0) frame.target_model = translation(Vec3(shift_x, 0.0, shift_z)) * frame.target_model;
  return frame;
}

inline SceneFrame apply_eot_3d(SceneFrame frame, const EotSample& s) {
  frame = apply_pose_perturbation(std::move(frame), s.rotation, s.shift_x, s.shift_z);
  frame.camera = orbit_camera(frame.camera, s.orbit_yaw, s.orbit_pitch, s.distance_scale);
  return frame;
}

/// Pixel-space part of a transformation, with its adjoint.
struct ImageTransform {
  double brightness = 0.0;
  double contrast = 1.0;
  int blur = 1;

  bool is_identity() const { return brightness == 0.0 && contrast == 1.0 && blur == 1; }

  Observation apply(const Observation& x) const {
    if (is_identity()) return x;
    Observation y = blur > 1 ? box_blur(x, blur) : x;
    for (double& v : y.data) v = std::clamp(affine(v), 0.0, 1.0);
    return y;
  }

  /// Gradient with respect to the input `x` given d_out at the output.
  Image backward(const Observation& x, const Image& d_out) const {
    require_same_shape(x, d_out, "ImageTransform::backward");
    if (is_identity()) return d_out;
    const Observation pre = blur > 1 ? box_blur(x, blur) : x;
    Image d_pre(x.height, x.width, 0.0);
    for (std::size_t i = 0; i < pre.data.size(); ++i) {
      const double u = affine(pre.data[i]);
      if (u >= 0.0 && u <= 1.0) d_pre.data[i] = contrast * d_out.data[i];
    }
    return blur > 1 ? box_blur_adjoint(d_pre, blur) : d_pre;
  }

  double affine(double v) const {
    if (contrast != 1.0) v = contrast * (v - 0.5) + 0.5;
    return v + brightness;
  }

  /// k x k mean with edge replication.
  static Observation box_blur(const Observation& x, int k) {
    const int r = k / 2;
    const double inv = 1.0 / (k * k);
    Observation y(x.height, x.width, 0.0);
    for (int row = 0; row < x.height; ++row)
      for (int col = 0; col < x.width; ++col)
        for (int dr = -r; dr <= r; ++dr) {
          const int rr = std::clamp(row + dr, 0, x.height - 1);
          for (int dc = -r; dc <= r; ++dc) {
            const int cc = std::clamp(col + dc, 0, x.width - 1);
            for (int ch = 0; ch < 3; ++ch) y.at(row, col, ch) += x.at(rr, cc, ch) * inv;
          }
        }
    return y;
  }

  static Image box_blur_adjoint(const Image& d_y, int k) {
    const int r = k / 2;
    const double inv = 1.0 / (k * k);
    Image d_x(d_y.height, d_y.width, 0.0);
    for (int row = 0; row < d_y.height; ++row)
      for (int col = 0; col < d_y.width; ++col)
        for (int dr = -r; dr <= r; ++dr) {
          const int rr = std::clamp(row + dr, 0, d_y.height - 1);
          for (int dc = -r; dc <= r; ++dc) {
            const int cc = std::clamp(col + dc, 0, d_y.width - 1);
            for (int ch = 0; ch < 3; ++ch) d_x.at(rr, cc, ch) += d_y.at(row, col, ch) * inv;
          }
        }
    return d_x;
  }
};

inline ImageTransform image_transform_of(const EotSample& s) { return {s.brightness, s.contrast, s.blur}; }

struct EotDraw {
  SceneFrame frame;
  ImageTransform transform;
  EotSample sample;
};

inline EotDraw sample_eot(const EotConfig& cfg, const SceneFrame& frame, Rng& rng) {
  validate_eot(cfg);
  const EotSample s = draw_eot(cfg, rng);
  return {apply_eot_3d(frame, s), image_transform_of(s), s};
}

/// View 0 is `frame` itself; views 1..count-1 orbit the camera about its
/// look-at point by yaw and pitch drawn uniformly from [-max_orbit, max_orbit].
inline std::vector<SceneFrame> sample_views(const SceneFrame& frame, int count, double max_orbit, Rng& rng) {
  if (count < 1) throw std::invalid_argument("sample_views: need at least one view");
  if (!(max_orbit >= 0.0)) throw std::invalid_argument("sample_views: orbit bound must be >= 0");
  std::vector<SceneFrame> views{frame};
  for (int m = 1; m < count; ++m) {
    const double yaw = rng.uniform(-max_orbit, max_orbit);
    const double pitch = rng.uniform(-max_orbit, max_orbit);
    SceneFrame v = frame;
    if (max_orbit > 0.0) v.camera = orbit_camera(frame.camera, yaw, pitch);
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace advtex
