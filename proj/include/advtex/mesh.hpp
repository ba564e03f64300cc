#pragma once

// Mesh data model and the vertex-color -> texture map.
//
// The attack optimizes N_v per-vertex colors rather than the H_t x W_t
// texels of a texture map. The texture is recovered by rasterizing every
// face into UV space and blending its three vertex colors with the texel
// center's barycentric weights. With N_v much smaller than H_t * W_t this
// keeps the perturbation on a smooth, low-dimensional family tied to the
// mesh; the library does not enforce the size ratio.
//
// Texels not covered by any face get the fill value 0.5 and never receive
// gradient. Where UV faces overlap, the lowest face index owns the texel.

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "advtex/detail/coverage.hpp"
#include "advtex/geometry.hpp"
#include "advtex/image.hpp"

namespace advtex {

using Face = std::array<int, 3>;

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec2> uvs;
  std::vector<Vec3> normals;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }
};

/// Per-vertex RGB, flat storage (vertex-major).
struct VertexColors {
  std::vector<double> rgb;

  VertexColors() = default;
  explicit VertexColors(std::size_t vertex_count, double fill = 0.0) : rgb(vertex_count * 3, fill) {}

  std::size_t vertex_count() const { return rgb.size() / 3; }
  double& at(std::size_t v, int ch) { return rgb[v * 3 + ch]; }
  double at(std::size_t v, int ch) const { return rgb[v * 3 + ch]; }

  static VertexColors uniform(std::size_t vertex_count, const Vec3& color) {
    VertexColors c(vertex_count);
    for (std::size_t v = 0; v < vertex_count; ++v)
      for (int ch = 0; ch < 3; ++ch) c.at(v, ch) = color[ch];
    return c;
  }

  friend bool operator==(const VertexColors&, const VertexColors&) = default;
};

inline constexpr double kTextureFill = 0.5;

inline void validate_mesh(const Mesh& mesh) {
  const std::size_t n = mesh.vertex_count();
  if (mesh.uvs.size() != n || mesh.normals.size() != n)
    throw std::invalid_argument("mesh: uvs/normals must have one entry per vertex");
  for (std::size_t i = 0; i < n; ++i) {
    if (!mesh.vertices[i].allFinite()) throw std::invalid_argument("mesh: non-finite vertex " + std::to_string(i));
    const Vec2& uv = mesh.uvs[i];
    if (!(uv.x() >= 0.0 && uv.x() <= 1.0 && uv.y() >= 0.0 && uv.y() <= 1.0))
      throw std::invalid_argument("mesh: uv outside [0,1] at vertex " + std::to_string(i));
    if (std::abs(mesh.normals[i].norm() - 1.0) > 1e-6)
      throw std::invalid_argument("mesh: normal not unit length at vertex " + std::to_string(i));
  }
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int idx : mesh.faces[f]) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= n)
        throw std::invalid_argument("mesh: face " + std::to_string(f) + " index out of range");
    }
    const auto& [a, b, c] = mesh.faces[f];
    const double area = (mesh.vertices[b] - mesh.vertices[a]).cross(mesh.vertices[c] - mesh.vertices[a]).norm();
    if (!(area > 0.0)) throw std::invalid_argument("mesh: face " + std::to_string(f) + " is degenerate");
  }
}

inline void validate_colors(const Mesh& mesh, const VertexColors& colors) {
  if (colors.vertex_count() != mesh.vertex_count() || colors.rgb.size() % 3 != 0)
    throw std::invalid_argument("vertex colors: expected " + std::to_string(mesh.vertex_count()) +
                                " vertices, got " + std::to_string(colors.vertex_count()));
}

/// Precomputed UV-space coverage of a fixed mesh. bake() is phi(c) and
/// backward() its exact adjoint; both are linear in their argument.
class VertexColorBaker {
 public:
  VertexColorBaker(const Mesh& mesh, ImageSize texture_size)
      : faces_(mesh.faces), vertex_count_(mesh.vertex_count()), size_(texture_size) {
    if (size_.height <= 0 || size_.width <= 0) throw std::invalid_argument("bake: texture size must be positive");
    if (mesh.uvs.size() != mesh.vertex_count()) throw std::invalid_argument("bake: mesh has no per-vertex uvs");

    std::string degenerate;
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const auto& [a, b, c] = faces_[f];
      const Vec2 e1 = mesh.uvs[b] - mesh.uvs[a];
      const Vec2 e2 = mesh.uvs[c] - mesh.uvs[a];
      if (e1.x() * e2.y() - e1.y() * e2.x() == 0.0) degenerate += (degenerate.empty() ? "" : ", ") + std::to_string(f);
    }
    if (!degenerate.empty()) throw std::invalid_argument("bake: zero-area UV faces: " + degenerate);

    const std::size_t texels = static_cast<std::size_t>(size_.height) * size_.width;
    texel_face_.assign(texels, -1);
    texel_bary_.assign(texels, {0.0, 0.0, 0.0});
    const Vec2 scale(size_.width, size_.height);
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const auto& [a, b, c] = faces_[f];
      detail::scan_triangle(mesh.uvs[a].cwiseProduct(scale), mesh.uvs[b].cwiseProduct(scale),
                            mesh.uvs[c].cwiseProduct(scale), size_.height, size_.width,
                            [&](int row, int col, const std::array<double, 3>& bary) {
                              const std::size_t t = static_cast<std::size_t>(row) * size_.width + col;
                              if (texel_face_[t] >= 0) return;
                              texel_face_[t] = static_cast<int>(f);
                              texel_bary_[t] = bary;
                            });
    }
  }

  ImageSize texture_size() const { return size_; }
  std::size_t vertex_count() const { return vertex_count_; }
  const std::vector<Face>& faces() const { return faces_; }

  /// Owning face of texel t (row-major), or -1 when uncovered.
  int texel_face(std::size_t t) const { return texel_face_[t]; }
  const std::array<double, 3>& texel_bary(std::size_t t) const { return texel_bary_[t]; }

  TextureMap bake(const VertexColors& colors) const {
    if (colors.vertex_count() != vertex_count_ || colors.rgb.size() != vertex_count_ * 3)
      throw std::invalid_argument("bake: vertex color count does not match mesh");
    TextureMap tex(size_.height, size_.width, kTextureFill);
    for (std::size_t t = 0; t < texel_face_.size(); ++t) {
      const int f = texel_face_[t];
      if (f < 0) continue;
      const Face& face = faces_[f];
      const auto& w = texel_bary_[t];
      for (int ch = 0; ch < 3; ++ch) {
        tex.data[t * 3 + ch] =
            w[0] * colors.at(face[0], ch) + w[1] * colors.at(face[1], ch) + w[2] * colors.at(face[2], ch);
      }
    }
    return tex;
  }

  /// Accumulates the adjoint of bake() into `grad`.
  void backward_accumulate(const TextureMap& d_texture, VertexColors& grad) const {
    if (d_texture.height != size_.height || d_texture.width != size_.width)
      throw std::invalid_argument("bake_backward: gradient shape does not match texture size");
    if (grad.vertex_count() != vertex_count_) grad = VertexColors(vertex_count_);
    for (std::size_t t = 0; t < texel_face_.size(); ++t) {
      const int f = texel_face_[t];
      if (f < 0) continue;
      const Face& face = faces_[f];
      const auto& w = texel_bary_[t];
      for (int k = 0; k < 3; ++k)
        for (int ch = 0; ch < 3; ++ch) grad.at(face[k], ch) += w[k] * d_texture.data[t * 3 + ch];
    }
  }

  VertexColors backward(const TextureMap& d_texture) const {
    VertexColors grad(vertex_count_);
    backward_accumulate(d_texture, grad);
    return grad;
  }

 private:
  std::vector<Face> faces_;
  std::size_t vertex_count_;
  ImageSize size_;
  std::vector<int> texel_face_;
  std::vector<std::array<double, 3>> texel_bary_;
};

inline TextureMap bake_vertex_colors(const Mesh& mesh, const VertexColors& colors, ImageSize out_size) {
  validate_colors(mesh, colors);
  return VertexColorBaker(mesh, out_size).bake(colors);
}

inline VertexColors bake_backward(const Mesh& mesh, const TextureMap& d_texture) {
  return VertexColorBaker(mesh, d_texture.size()).backward(d_texture);
}

}  // namespace advtex
