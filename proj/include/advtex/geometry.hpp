#pragma once

// Homogeneous transforms and camera math shared by both renderers.
//
// Conventions (used everywhere in the library):
//  * Mat4 is stored row-major and acts on column vectors: p' = M * p.
//    A composed transform C = P * V * M applies M first, then V, then P.
//  * Camera space is right-handed, the camera looks down -z, +y is up.
//  * Clip space follows the OpenGL convention: after division by w the
//    visible volume is x, y, z in [-1, 1]; z = -1 on the near plane and
//    z = +1 on the far plane.

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

namespace advtex {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
using Mat4 = Eigen::Matrix<double, 4, 4, Eigen::RowMajor>;

/// Clip-space position (x, y, z, w). No perspective division applied.
struct HomogeneousVertex {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double w = 1.0;

  Vec4 vec() const { return {x, y, z, w}; }
};

struct ImageSize {
  int height = 0;
  int width = 0;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

struct CameraSpec {
  Vec3 eye = Vec3(0.0, 0.0, 0.0);
  Vec3 target = Vec3(0.0, 0.0, -1.0);
  Vec3 up = Vec3(0.0, 1.0, 0.0);
  double fov_y = std::numbers::pi / 2.0;  // radians
  double near_clip = 0.1;
  double far_clip = 100.0;
  int width = 64;
  int height = 64;

  ImageSize size() const { return {height, width}; }
};

inline Mat4 identity4() { return Mat4::Identity(); }

inline Mat4 translation(const Vec3& t) {
  Mat4 m = Mat4::Identity();
  m(0, 3) = t.x();
  m(1, 3) = t.y();
  m(2, 3) = t.z();
  return m;
}

inline Mat4 scaling(const Vec3& s) {
  Mat4 m = Mat4::Identity();
  m(0, 0) = s.x();
  m(1, 1) = s.y();
  m(2, 2) = s.z();
  return m;
}

/// Right-handed rotation by `angle` radians about the unit `axis`.
inline Mat4 rotation(const Vec3& axis, double angle) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  return m;
}

inline Mat4 rotation_x(double angle) { return rotation(Vec3::UnitX(), angle); }
inline Mat4 rotation_y(double angle) { return rotation(Vec3::UnitY(), angle); }
inline Mat4 rotation_z(double angle) { return rotation(Vec3::UnitZ(), angle); }

/// C = P * V * M, in that order.
inline Mat4 compose_mvp(const Mat4& projection, const Mat4& view, const Mat4& model) {
  return projection * view * model;
}

inline HomogeneousVertex to_clip(const Mat4& mvp, const Vec3& vertex) {
  const Vec4 c = mvp * Vec4(vertex.x(), vertex.y(), vertex.z(), 1.0);
  return {c.x(), c.y(), c.z(), c.w()};
}

inline void validate_camera(const CameraSpec& camera) {
  if (!(camera.fov_y > 0.0 && camera.fov_y < std::numbers::pi))
    throw std::invalid_argument("camera: fov_y must lie in (0, pi)");
  if (!(camera.near_clip > 0.0 && camera.near_clip < camera.far_clip))
    throw std::invalid_argument("camera: require 0 < near < far");
  if (camera.width <= 0 || camera.height <= 0)
    throw std::invalid_argument("camera: image size must be positive");
}

/// Standard OpenGL-style perspective projection (see conventions above).
inline Mat4 perspective(const CameraSpec& camera) {
  validate_camera(camera);
  const double f = 1.0 / std::tan(camera.fov_y / 2.0);
  const double aspect = static_cast<double>(camera.width) / camera.height;
  const double n = camera.near_clip;
  const double fa = camera.far_clip;
  Mat4 p = Mat4::Zero();
  p(0, 0) = f / aspect;
  p(1, 1) = f;
  p(2, 2) = (fa + n) / (n - fa);
  p(2, 3) = 2.0 * fa * n / (n - fa);
  p(3, 2) = -1.0;
  return p;
}

/// World-to-camera rigid transform.
inline Mat4 look_at(const CameraSpec& camera) {
  const Vec3 forward_raw = camera.target - camera.eye;
  if (forward_raw.norm() <= 0.0 || !forward_raw.allFinite())
    throw std::invalid_argument("look_at: eye and target coincide");
  const Vec3 forward = forward_raw.normalized();
  const Vec3 side_raw = forward.cross(camera.up);
  if (side_raw.norm() <= 1e-12 * camera.up.norm() || camera.up.norm() == 0.0)
    throw std::invalid_argument("look_at: up vector is parallel to the view direction");
  const Vec3 side = side_raw.normalized();
  const Vec3 up = side.cross(forward);

  Mat4 v = Mat4::Identity();
  v.block<1, 3>(0, 0) = side.transpose();
  v.block<1, 3>(1, 0) = up.transpose();
  v.block<1, 3>(2, 0) = -forward.transpose();
  v(0, 3) = -side.dot(camera.eye);
  v(1, 3) = -up.dot(camera.eye);
  v(2, 3) = forward.dot(camera.eye);
  return v;
}

/// Inverse-transpose of the upper-left 3x3 block; maps object-space normals
/// to world space.
inline Mat3 normal_matrix(const Mat4& model) {
  const Mat3 linear = model.topLeftCorner<3, 3>();
  return linear.inverse().transpose();
}

/// Maps an NDC point back to camera/world space through `inverse_transform`.
inline Vec3 unproject(const Mat4& inverse_transform, const Vec3& ndc) {
  const Vec4 h = inverse_transform * Vec4(ndc.x(), ndc.y(), ndc.z(), 1.0);
  return h.head<3>() / h.w();
}

}  // namespace advtex
