#pragma once

// Foreground-background decoupling.
//
// The reference path renders the whole scene (target with its clean
// texture plus every background object) without recording a tape. The
// differentiable path renders only the target, from vertex colors, using
// the exact MVP and lighting the reference path used for it. The two are
// composited with the target's occlusion-aware silhouette mask:
//
//   O = m * fg + (1 - m) * bg
//
// Both paths share rasterize() and shade_fragment(), so with clean colors the
// composite reproduces the reference render bit for bit.

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "advtex/geometry.hpp"
#include "advtex/image.hpp"
#include "advtex/logging.hpp"
#include "advtex/mesh.hpp"
#include "advtex/renderer.hpp"

namespace advtex {

/// The attacked object: fixed geometry plus its clean appearance.
struct TargetObject {
  std::shared_ptr<const Mesh> mesh;
  std::shared_ptr<const VertexColorBaker> baker;
  VertexColors clean_colors;
  TextureMap clean_texture;

  static std::shared_ptr<const TargetObject> make(Mesh mesh, VertexColors clean_colors, ImageSize texture_size) {
    validate_mesh(mesh);
    validate_colors(mesh, clean_colors);
    auto t = std::make_shared<TargetObject>();
    t->mesh = std::make_shared<const Mesh>(std::move(mesh));
    t->baker = std::make_shared<const VertexColorBaker>(*t->mesh, texture_size);
    t->clean_texture = t->baker->bake(clean_colors);
    t->clean_colors = std::move(clean_colors);
    return t;
  }
};

struct BackgroundObject {
  std::shared_ptr<const Mesh> mesh;
  Mat4 model = Mat4::Identity();
  TextureMap texture;
  double reflectance = 1.0;
};

using BackgroundList = std::vector<BackgroundObject>;

/// Everything needed to render one timestep. `lighting.reflectance` is the
/// target's material reflectance; background objects carry their own.
struct SceneFrame {
  int t = 0;
  Mat4 target_model = Mat4::Identity();
  CameraSpec camera;
  Lighting lighting;
  std::shared_ptr<const TargetObject> target;
  std::shared_ptr<const BackgroundList> background;
};

struct SilhouetteMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  SilhouetteMask() = default;
  SilhouetteMask(ImageSize s, std::uint8_t fill)
      : height(s.height), width(s.width), values(static_cast<std::size_t>(s.height) * s.width, fill) {}

  ImageSize size() const { return {height, width}; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values) n += v;
    return n;
  }
  friend bool operator==(const SilhouetteMask&, const SilhouetteMask&) = default;
};

struct AlignedParameters {
  Mat4 mvp;
  Mat4 model;  // orients normals
  Lighting lighting;
};

inline void validate_frame(const SceneFrame& frame) {
  if (!frame.target || !frame.target->mesh) throw std::invalid_argument("scene frame: missing target object");
  if (!frame.target_model.allFinite()) throw std::invalid_argument("scene frame: non-finite target model matrix");
  validate_camera(frame.camera);
  validate_lighting(frame.lighting);
}

/// Single source of truth for the target's render parameters.
inline AlignedParameters align_parameters(const SceneFrame& frame) {
  validate_frame(frame);
  const Mat4 projection = perspective(frame.camera);
  const Mat4 view = look_at(frame.camera);
  return {compose_mvp(projection, view, frame.target_model), frame.target_model, frame.lighting};
}

/// One reference (tape-free) render of the full scene.
struct SceneRender {
  Observation image;          // x_bg
  SilhouetteMask mask;        // m
  FragmentBuffer target_frags;  // target rendered alone, aligned parameters
  AlignedParameters aligned;
};

inline SceneRender render_scene(const SceneFrame& frame) {
  SceneRender out;
  out.aligned = align_parameters(frame);
  const ImageSize size = frame.camera.size();
  const Mesh& target_mesh = *frame.target->mesh;
  out.target_frags = rasterize(target_mesh, out.aligned.mvp, size, out.aligned.model);

  const Mat4 view_projection = perspective(frame.camera) * look_at(frame.camera);
  std::vector<FragmentBuffer> bg_frags;
  if (frame.background) {
    for (const auto& obj : *frame.background)
      bg_frags.push_back(rasterize(*obj.mesh, compose_mvp(view_projection, Mat4::Identity(), obj.model), size, obj.model));
  }

  out.image = Observation(size.height, size.width, 0.0);
  out.mask = SilhouetteMask(size, 0);
  for (std::size_t p = 0; p < out.target_frags.pixels.size(); ++p) {
    // Owner -1 is the target; ties in depth keep the earlier object.
    int owner = out.target_frags.pixels[p].covered() ? -1 : -2;
    double depth = owner == -1 ? out.target_frags.pixels[p].depth : 0.0;
    for (std::size_t b = 0; b < bg_frags.size(); ++b) {
      const Fragment& f = bg_frags[b].pixels[p];
      if (f.covered() && (owner == -2 || f.depth < depth)) {
        owner = static_cast<int>(b);
        depth = f.depth;
      }
    }
    if (owner == -2) continue;
    ShadedPixel px;
    if (owner == -1) {
      out.mask.values[p] = 1;
      px = shade_fragment(out.target_frags.pixels[p], frame.target->clean_texture, frame.lighting);
    } else {
      const BackgroundObject& obj = (*frame.background)[owner];
      Lighting lighting = frame.lighting;
      lighting.reflectance = obj.reflectance;
      px = shade_fragment(bg_frags[owner].pixels[p], obj.texture, lighting);
    }
    for (int ch = 0; ch < 3; ++ch) out.image.data[p * 3 + ch] = std::clamp(px.unclamped[ch], 0.0, 1.0);
  }
  if (target_mesh.face_count() > 0 && out.target_frags.covered_count() > 0 && out.mask.count() == 0)
    log_warning("frame " + std::to_string(frame.t) + ": target fully occluded, mask is empty");
  return out;
}

inline Observation render_background(const SceneFrame& frame) { return render_scene(frame).image; }

inline SilhouetteMask extract_mask(const SceneFrame& frame) { return render_scene(frame).mask; }

inline void require_mask_shape(const SilhouetteMask& mask, const Image& img, const char* what) {
  if (mask.height != img.height || mask.width != img.width)
    throw std::invalid_argument(std::string(what) + ": mask and image dimensions differ");
}

inline Observation composite(const SilhouetteMask& mask, const Observation& fg, const Observation& bg) {
  require_same_shape(fg, bg, "composite");
  require_mask_shape(mask, fg, "composite");
  Observation out(fg.height, fg.width);
  for (std::size_t p = 0; p < mask.values.size(); ++p) {
    const double m = mask.values[p];
    for (int ch = 0; ch < 3; ++ch) {
      const std::size_t i = p * 3 + ch;
      out.data[i] = m * fg.data[i] + (1.0 - m) * bg.data[i];
    }
  }
  return out;
}

/// d_fg = m * d_obs. The background is a constant of the attack.
inline Image composite_backward(const SilhouetteMask& mask, const Image& d_obs) {
  require_mask_shape(mask, d_obs, "composite_backward");
  Image d_fg(d_obs.height, d_obs.width, 0.0);
  for (std::size_t p = 0; p < mask.values.size(); ++p) {
    if (!mask.values[p]) continue;
    for (int ch = 0; ch < 3; ++ch) d_fg.data[p * 3 + ch] = d_obs.data[p * 3 + ch];
  }
  return d_fg;
}

inline std::pair<Observation, RenderTape> render_foreground(const SceneFrame& frame, const VertexColors& colors) {
  const AlignedParameters a = align_parameters(frame);
  return render_foreground(*frame.target->mesh, frame.target->baker, colors, a.mvp, a.model, a.lighting,
                           frame.camera.size());
}

struct AdversarialTape {
  RenderTape render;
  SilhouetteMask mask;
};

inline std::pair<Observation, AdversarialTape> render_adversarial_observation(const SceneFrame& frame,
                                                                              const VertexColors& colors) {
  validate_colors(*frame.target->mesh, colors);
  const SceneRender scene = render_scene(frame);
  auto [fg, tape] = render_foreground(frame, colors);
  Observation obs = composite(scene.mask, fg, scene.image);
  return {std::move(obs), AdversarialTape{std::move(tape), scene.mask}};
}

/// Gradient of <O, d_obs> with respect to the target's vertex colors.
inline VertexColors adversarial_backward(const AdversarialTape& tape, const Image& d_obs) {
  return render_backward(tape.render, composite_backward(tape.mask, d_obs));
}

/// A frame whose reference render is cached; only the target's texture
/// varies between calls. Used by the optimizer when views are fixed.
struct PreparedFrame {
  SceneRender scene;

  explicit PreparedFrame(const SceneFrame& frame) : scene(render_scene(frame)) {}

  /// Composited observation for an already-baked adversarial texture. The
  /// returned tape has no baker; gradients stop at the texture.
  std::pair<Observation, RenderTape> observe(const TextureMap& adv_texture) const {
    auto [fg, tape] = shade(scene.target_frags, adv_texture, scene.aligned.lighting);
    return {composite(scene.mask, fg, scene.image), std::move(tape)};
  }
};

}  // namespace advtex
