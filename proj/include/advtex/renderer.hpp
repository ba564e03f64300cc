#pragma once

// Deterministic software rasterizer with Lambertian shading and a hand-written
// backward pass from image gradients to texels and vertex colors.
//
// Forward, per covered pixel and channel:
//   color = clamp(rho * (I_a + I_d * max(0, n . l)) * bilinear(texture, uv), 0, 1)
// where n is the renormalized, perspective-correct interpolation of the
// vertex normals (in world space) and l points toward the light.
//
// Coverage is binary (no anti-aliasing), so only texture values carry
// gradient; the geometry is treated as constant. A channel whose unclamped
// value lies outside [0, 1] passes zero gradient.
//
// Triangles with a vertex behind the near plane (clip z < -w or w <= 0) are
// culled whole. Fragments with NDC depth outside [-1, 1] are discarded. The
// depth test is strict, so among equal depths the lowest face index wins.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "advtex/detail/coverage.hpp"
#include "advtex/geometry.hpp"
#include "advtex/image.hpp"
#include "advtex/mesh.hpp"

namespace advtex {

struct Lighting {
  double ambient = 0.4;      // I_a
  double diffuse = 0.6;      // I_d
  double reflectance = 1.0;  // rho
  Vec3 direction = Vec3(0.0, 1.0, 0.0);  // unit, world space, toward the light

  friend bool operator==(const Lighting&, const Lighting&) = default;
};

inline void validate_lighting(const Lighting& l) {
  if (!(std::isfinite(l.ambient) && l.ambient >= 0.0 && std::isfinite(l.diffuse) && l.diffuse >= 0.0))
    throw std::invalid_argument("lighting: intensities must be finite and nonnegative");
  if (!(l.reflectance >= 0.0 && l.reflectance <= 1.0))
    throw std::invalid_argument("lighting: reflectance must lie in [0,1]");
  if (std::abs(l.direction.norm() - 1.0) > 1e-9) throw std::invalid_argument("lighting: direction must be unit length");
}

struct Fragment {
  int face = -1;
  std::array<double, 3> bary{0.0, 0.0, 0.0};  // perspective-correct
  double depth = 0.0;                         // NDC z
  Vec2 uv = Vec2::Zero();
  Vec3 normal = Vec3::Zero();  // world space, unit (or zero if degenerate)

  bool covered() const { return face >= 0; }
};

struct FragmentBuffer {
  int height = 0;
  int width = 0;
  std::vector<Fragment> pixels;

  FragmentBuffer() = default;
  explicit FragmentBuffer(ImageSize s)
      : height(s.height), width(s.width), pixels(static_cast<std::size_t>(s.height) * s.width) {}

  ImageSize size() const { return {height, width}; }
  Fragment& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  const Fragment& at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }

  std::size_t covered_count() const {
    return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](const Fragment& f) { return f.covered(); }));
  }
};

/// Screen-space position of a clip-space vertex: x right, y down, in pixels.
inline Vec2 clip_to_pixel(const HomogeneousVertex& c, ImageSize size) {
  return {(c.x / c.w + 1.0) * 0.5 * size.width, (1.0 - c.y / c.w) * 0.5 * size.height};
}

/// `model` only orients the normals; positions are transformed by `mvp`.
inline FragmentBuffer rasterize(const Mesh& mesh, const Mat4& mvp, ImageSize size,
                                const Mat4& model = Mat4::Identity()) {
  if (size.height <= 0 || size.width <= 0) throw std::invalid_argument("rasterize: image size must be positive");
  FragmentBuffer buf(size);
  std::vector<double> zbuf(buf.pixels.size(), std::numeric_limits<double>::infinity());

  std::vector<HomogeneousVertex> clip(mesh.vertex_count());
  for (std::size_t i = 0; i < clip.size(); ++i) clip[i] = to_clip(mvp, mesh.vertices[i]);
  const Mat3 nmat = normal_matrix(model);

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    const HomogeneousVertex& c0 = clip[face[0]];
    const HomogeneousVertex& c1 = clip[face[1]];
    const HomogeneousVertex& c2 = clip[face[2]];
    bool culled = false;
    for (const auto* c : {&c0, &c1, &c2}) culled = culled || !(c->w > 0.0) || c->z < -c->w;
    if (culled) continue;

    const std::array<double, 3> inv_w{1.0 / c0.w, 1.0 / c1.w, 1.0 / c2.w};
    const std::array<double, 3> ndc_z{c0.z * inv_w[0], c1.z * inv_w[1], c2.z * inv_w[2]};

    detail::scan_triangle(
        clip_to_pixel(c0, size), clip_to_pixel(c1, size), clip_to_pixel(c2, size), size.height, size.width,
        [&](int row, int col, const std::array<double, 3>& b) {
          const double depth = b[0] * ndc_z[0] + b[1] * ndc_z[1] + b[2] * ndc_z[2];
          if (depth < -1.0 || depth > 1.0) return;
          const std::size_t p = static_cast<std::size_t>(row) * size.width + col;
          if (!(depth < zbuf[p])) return;
          zbuf[p] = depth;

          std::array<double, 3> lam{b[0] * inv_w[0], b[1] * inv_w[1], b[2] * inv_w[2]};
          const double s = lam[0] + lam[1] + lam[2];
          for (double& l : lam) l /= s;

          Fragment& frag = buf.pixels[p];
          frag.face = static_cast<int>(f);
          frag.bary = lam;
          frag.depth = depth;
          frag.uv = lam[0] * mesh.uvs[face[0]] + lam[1] * mesh.uvs[face[1]] + lam[2] * mesh.uvs[face[2]];
          const Vec3 n = nmat * (lam[0] * mesh.normals[face[0]] + lam[1] * mesh.normals[face[1]] +
                                 lam[2] * mesh.normals[face[2]]);
          const double len = n.norm();
          frag.normal = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
        });
  }
  return buf;
}

/// Bilinear sampling footprint: four texels (row-major indices) and weights.
struct TexelFootprint {
  std::array<std::size_t, 4> texel{};
  std::array<double, 4> weight{};
};

/// Clamp-to-edge bilinear footprint for texture coordinate `uv`.
inline TexelFootprint bilinear_footprint(const Vec2& uv, ImageSize tex) {
  const double x = uv.x() * tex.width - 0.5;
  const double y = uv.y() * tex.height - 0.5;
  const double x0f = std::floor(x);
  const double y0f = std::floor(y);
  const double fx = x - x0f;
  const double fy = y - y0f;
  const auto clamp_col = [&](double c) { return static_cast<std::size_t>(std::clamp(c, 0.0, tex.width - 1.0)); };
  const auto clamp_row = [&](double r) { return static_cast<std::size_t>(std::clamp(r, 0.0, tex.height - 1.0)); };
  const std::size_t c0 = clamp_col(x0f), c1 = clamp_col(x0f + 1.0);
  const std::size_t r0 = clamp_row(y0f), r1 = clamp_row(y0f + 1.0);
  const std::size_t w = static_cast<std::size_t>(tex.width);
  TexelFootprint fp;
  fp.texel = {r0 * w + c0, r0 * w + c1, r1 * w + c0, r1 * w + c1};
  fp.weight = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
  return fp;
}

inline double shading_scalar(const Vec3& normal, const Lighting& lighting) {
  return lighting.reflectance * (lighting.ambient + lighting.diffuse * std::max(0.0, normal.dot(lighting.direction)));
}

struct ShadedPixel {
  TexelFootprint footprint;
  double shading = 0.0;
  std::array<double, 3> unclamped{};
};

/// The single shading routine used by both the taped and the tape-free path.
inline ShadedPixel shade_fragment(const Fragment& frag, const TextureMap& texture, const Lighting& lighting) {
  ShadedPixel px;
  px.footprint = bilinear_footprint(frag.uv, texture.size());
  px.shading = shading_scalar(frag.normal, lighting);
  for (int ch = 0; ch < 3; ++ch) {
    double sample = 0.0;
    for (int k = 0; k < 4; ++k) sample += px.footprint.weight[k] * texture.data[px.footprint.texel[k] * 3 + ch];
    px.unclamped[ch] = px.shading * sample;
  }
  return px;
}

inline bool clamped(double v) { return v < 0.0 || v > 1.0; }

/// Everything needed to replay the chain rule for one forward render.
struct RenderTape {
  FragmentBuffer frags;
  std::vector<ShadedPixel> shaded;  // one per pixel; meaningful where covered
  ImageSize texture_size;
  std::shared_ptr<const VertexColorBaker> baker;  // null when shaded from a raw texture
};

inline Observation shade_reference(const FragmentBuffer& frags, const TextureMap& texture, const Lighting& lighting) {
  Observation img(frags.height, frags.width, 0.0);
  for (std::size_t p = 0; p < frags.pixels.size(); ++p) {
    if (!frags.pixels[p].covered()) continue;
    const ShadedPixel px = shade_fragment(frags.pixels[p], texture, lighting);
    for (int ch = 0; ch < 3; ++ch) img.data[p * 3 + ch] = std::clamp(px.unclamped[ch], 0.0, 1.0);
  }
  return img;
}

inline std::pair<Observation, RenderTape> shade(const FragmentBuffer& frags, const TextureMap& texture,
                                                const Lighting& lighting) {
  Observation img(frags.height, frags.width, 0.0);
  RenderTape tape;
  tape.frags = frags;
  tape.texture_size = texture.size();
  tape.shaded.resize(frags.pixels.size());
  for (std::size_t p = 0; p < frags.pixels.size(); ++p) {
    if (!frags.pixels[p].covered()) continue;
    tape.shaded[p] = shade_fragment(frags.pixels[p], texture, lighting);
    for (int ch = 0; ch < 3; ++ch) img.data[p * 3 + ch] = std::clamp(tape.shaded[p].unclamped[ch], 0.0, 1.0);
  }
  return {std::move(img), std::move(tape)};
}

/// Accumulates d(loss)/d(texture) for one render into `d_texture`.
inline void texture_backward_accumulate(const RenderTape& tape, const Image& d_image, TextureMap& d_texture) {
  if (d_image.height != tape.frags.height || d_image.width != tape.frags.width)
    throw std::invalid_argument("render_backward: d_image shape does not match the rendered image");
  if (d_texture.height != tape.texture_size.height || d_texture.width != tape.texture_size.width)
    d_texture = TextureMap(tape.texture_size.height, tape.texture_size.width, 0.0);
  for (std::size_t p = 0; p < tape.frags.pixels.size(); ++p) {
    if (!tape.frags.pixels[p].covered()) continue;
    const ShadedPixel& px = tape.shaded[p];
    for (int ch = 0; ch < 3; ++ch) {
      const double g = d_image.data[p * 3 + ch];
      if (g == 0.0 || clamped(px.unclamped[ch])) continue;
      const double gs = g * px.shading;
      for (int k = 0; k < 4; ++k) d_texture.data[px.footprint.texel[k] * 3 + ch] += gs * px.footprint.weight[k];
    }
  }
}

inline TextureMap texture_backward(const RenderTape& tape, const Image& d_image) {
  TextureMap d_texture(tape.texture_size.height, tape.texture_size.width, 0.0);
  texture_backward_accumulate(tape, d_image, d_texture);
  return d_texture;
}

/// bake -> rasterize -> shade. The image is a function of `colors` only.
inline std::pair<Observation, RenderTape> render_foreground(const Mesh& mesh,
                                                            std::shared_ptr<const VertexColorBaker> baker,
                                                            const VertexColors& colors, const Mat4& mvp,
                                                            const Mat4& model, const Lighting& lighting,
                                                            ImageSize image_size) {
  if (!baker) throw std::invalid_argument("render_foreground: missing baker");
  const TextureMap texture = baker->bake(colors);
  auto result = shade(rasterize(mesh, mvp, image_size, model), texture, lighting);
  result.second.baker = std::move(baker);
  return result;
}

/// Gradient of <image, d_image> with respect to the vertex colors.
inline VertexColors render_backward(const RenderTape& tape, const Image& d_image) {
  if (!tape.baker) throw std::invalid_argument("render_backward: tape has no vertex-color baker");
  return tape.baker->backward(texture_backward(tape, d_image));
}

}  // namespace advtex
