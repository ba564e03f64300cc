#pragma once

// Scenario files: a scripted tabletop episode.
//
// Schema (JSON; paths are relative to the scenario file):
//
//   {
//     "name": "tabletop",
//     "image": {"width": 64, "height": 64},
//     "texture_size": {"width": 96, "height": 64},
//     "instruction": 3,
//     "camera": {"eye": [x,y,z], "target": [x,y,z], "up": [0,1,0],
//                "fov_y_deg": 50, "near": 0.1, "far": 20},
//     "lighting": {"ambient": 0.4, "diffuse": 0.6, "direction": [x,y,z]},
//     "target": {"mesh": "target.obj", "reflectance": 0.9,
//                one of "clean_colors": "target.vcol" | "clean_texture": "t.ppm"
//                       | "clean_color": [r,g,b]},
//     "background": [{"mesh": "table.obj", "pose": POSE, "reflectance": 0.8,
//                     one of "color": [r,g,b]
//                            | "checker": {"colors": [[r,g,b],[r,g,b]], "cells": 8}}],
//     "frames": [{"pose": POSE}, ...]            (at least 3)
//   }
//
//   POSE = {"translation": [x,y,z], "rotation_deg": [rx,ry,rz], "scale": s | [sx,sy,sz]}
//          (M = T * Rz * Ry * Rx * S, every key optional)
//        | {"matrix": [16 numbers, row-major]}
//
// The lighting direction points from the surface towards the light and is
// normalized on load.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "advtex/fbd.hpp"
#include "advtex/io.hpp"
#include "advtex/json_reader.hpp"
#include "advtex/policy.hpp"

namespace advtex {

inline constexpr int kMinFrames = 3;

struct Scenario {
  std::string name;
  std::filesystem::path file;
  ImageSize image;
  ImageSize texture_size;
  Instruction instruction;
  CameraSpec camera;
  Lighting lighting;  // reflectance is the target's
  Mesh target_mesh;
  VertexColors clean_colors;
  BackgroundList background;
  std::vector<Mat4> target_poses;
  std::string raw;  // file bytes, for content hashing

  std::size_t frame_count() const { return target_poses.size(); }
};

inline Mat4 pose_from_euler(const Vec3& translation_v, const Vec3& rotation_deg, const Vec3& scale) {
  const double k = std::numbers::pi / 180.0;
  return translation(translation_v) * rotation_z(rotation_deg.z() * k) * rotation_y(rotation_deg.y() * k) *
         rotation_x(rotation_deg.x() * k) * scaling(scale);
}

namespace detail {

inline Mat4 read_pose(const JsonReader& r) {
  if (r.has("matrix")) {
    r.only_keys({"matrix"});
    const auto v = r.at("matrix").numbers(16);
    Mat4 m;
    for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = v[static_cast<std::size_t>(i)];
    if (std::abs(m.topLeftCorner<3, 3>().determinant()) < 1e-12) r.at("matrix").fail("singular pose matrix");
    return m;
  }
  r.only_keys({"translation", "rotation_deg", "scale"});
  const Vec3 t = r.has("translation") ? r.at("translation").vec3() : Vec3::Zero();
  const Vec3 rot = r.has("rotation_deg") ? r.at("rotation_deg").vec3() : Vec3::Zero();
  Vec3 s = Vec3::Ones();
  if (r.has("scale")) {
    const JsonReader sr = r.at("scale");
    s = sr.node().is_array() ? sr.vec3() : Vec3::Constant(sr.number());
    if ((s.array() <= 0.0).any()) sr.fail("scale must be positive");
  }
  return pose_from_euler(t, rot, s);
}

inline ImageSize read_size(const JsonReader& r, int max_side) {
  r.only_keys({"width", "height"});
  return {r.at("height").integer_in(1, max_side), r.at("width").integer_in(1, max_side)};
}

inline Mesh read_mesh(const JsonReader& r, const std::filesystem::path& base) {
  const auto path = base / r.string();
  if (!std::filesystem::exists(path)) r.fail("mesh file not found: " + path.string());
  Mesh m = load_mesh(path);
  try {
    validate_mesh(m);
  } catch (const std::exception& e) {
    r.fail(e.what());
  }
  return m;
}

/// Clean vertex colors sampled from a texture at each vertex's UV.
inline VertexColors colors_from_texture(const Mesh& mesh, const TextureMap& texture) {
  VertexColors c(mesh.vertex_count());
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    const TexelFootprint fp = bilinear_footprint(mesh.uvs[v], {texture.height, texture.width});
    for (int ch = 0; ch < 3; ++ch) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += fp.weight[k] * texture.data[fp.texel[k] * 3 + ch];
      c.at(v, ch) = s;
    }
  }
  return c;
}

inline TextureMap solid_texture(const Vec3& color) {
  TextureMap t(4, 4);
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = color[static_cast<int>(i % 3)];
  return t;
}

inline TextureMap checker_texture(const Vec3& a, const Vec3& b, int cells) {
  const int side = cells * 4;
  TextureMap t(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      const Vec3& col = ((r / 4) + (c / 4)) % 2 == 0 ? a : b;
      for (int ch = 0; ch < 3; ++ch) t.at(r, c, ch) = col[ch];
    }
  return t;
}

}  // namespace detail

inline Scenario parse_scenario(const Json& doc, const std::filesystem::path& file) {
  const std::string fname = file.string();
  const std::filesystem::path base = file.has_parent_path() ? file.parent_path() : std::filesystem::path(".");
  const JsonReader root(doc, fname);
  root.only_keys({"name", "image", "texture_size", "instruction", "camera", "lighting", "target", "background",
                  "frames"});
  Scenario s;
  s.file = file;
  s.name = root.string_or("name", file.stem().string());
  s.image = detail::read_size(root.at("image"), 4096);
  s.texture_size = detail::read_size(root.at("texture_size"), 8192);
  s.instruction.id = root.has("instruction") ? root.at("instruction").integer_in(0, 1 << 20) : 0;

  const JsonReader cam = root.at("camera");
  cam.only_keys({"eye", "target", "up", "fov_y_deg", "near", "far"});
  s.camera.eye = cam.at("eye").vec3();
  s.camera.target = cam.at("target").vec3();
  s.camera.up = cam.has("up") ? cam.at("up").vec3() : Vec3(0, 1, 0);
  s.camera.fov_y = cam.at("fov_y_deg").number_in(1.0, 179.0) * std::numbers::pi / 180.0;
  s.camera.near_clip = cam.has("near") ? cam.at("near").number() : 0.1;
  s.camera.far_clip = cam.has("far") ? cam.at("far").number() : 100.0;
  s.camera.width = s.image.width;
  s.camera.height = s.image.height;
  try {
    validate_camera(s.camera);
    look_at(s.camera);
  } catch (const std::exception& e) {
    cam.fail(e.what());
  }

  const JsonReader light = root.at("lighting");
  light.only_keys({"ambient", "diffuse", "direction"});
  s.lighting.ambient = light.at("ambient").number_in(0.0, 10.0);
  s.lighting.diffuse = light.at("diffuse").number_in(0.0, 10.0);
  const Vec3 dir = light.at("direction").vec3();
  if (dir.norm() == 0.0) light.at("direction").fail("direction must be non-zero");
  s.lighting.direction = dir.normalized();

  const JsonReader tgt = root.at("target");
  tgt.only_keys({"mesh", "reflectance", "clean_colors", "clean_texture", "clean_color"});
  s.target_mesh = detail::read_mesh(tgt.at("mesh"), base);
  s.lighting.reflectance = tgt.has("reflectance") ? tgt.at("reflectance").number_in(0.0, 10.0) : 1.0;
  const int sources = tgt.has("clean_colors") + tgt.has("clean_texture") + tgt.has("clean_color");
  if (sources != 1) tgt.fail("exactly one of clean_colors, clean_texture, clean_color is required");
  if (tgt.has("clean_colors")) {
    const JsonReader r = tgt.at("clean_colors");
    s.clean_colors = load_vertex_colors(base / r.string());
    if (s.clean_colors.vertex_count() != s.target_mesh.vertex_count())
      r.fail("color file has " + std::to_string(s.clean_colors.vertex_count()) + " vertices, mesh has " +
             std::to_string(s.target_mesh.vertex_count()));
  } else if (tgt.has("clean_texture")) {
    s.clean_colors = detail::colors_from_texture(s.target_mesh, load_texture(base / tgt.at("clean_texture").string()));
  } else {
    s.clean_colors = VertexColors::uniform(s.target_mesh.vertex_count(), tgt.at("clean_color").color());
  }
  for (double v : s.clean_colors.rgb)
    if (!(v >= 0.0 && v <= 1.0)) tgt.fail("clean colors must lie in [0, 1]");

  if (root.has("background")) {
    const JsonReader bg = root.at("background");
    for (std::size_t i = 0; i < bg.size(); ++i) {
      const JsonReader b = bg.at(i);
      b.only_keys({"mesh", "pose", "reflectance", "color", "checker"});
      BackgroundObject obj;
      obj.mesh = std::make_shared<const Mesh>(detail::read_mesh(b.at("mesh"), base));
      obj.model = b.has("pose") ? detail::read_pose(b.at("pose")) : Mat4::Identity();
      obj.reflectance = b.has("reflectance") ? b.at("reflectance").number_in(0.0, 10.0) : 1.0;
      if (b.has("color") == b.has("checker")) b.fail("exactly one of color, checker is required");
      if (b.has("color")) {
        obj.texture = detail::solid_texture(b.at("color").color());
      } else {
        const JsonReader ck = b.at("checker");
        ck.only_keys({"colors", "cells"});
        const JsonReader cols = ck.at("colors");
        if (cols.size() != 2) cols.fail("expected two colors");
        obj.texture = detail::checker_texture(cols.at(0).color(), cols.at(1).color(), ck.at("cells").integer_in(1, 256));
      }
      s.background.push_back(std::move(obj));
    }
  }

  const JsonReader frames = root.at("frames");
  if (frames.size() < kMinFrames)
    frames.fail("need at least " + std::to_string(kMinFrames) + " frames, got " + std::to_string(frames.size()));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const JsonReader f = frames.at(t);
    f.only_keys({"pose"});
    s.target_poses.push_back(detail::read_pose(f.at("pose")));
  }
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& file) {
  std::string raw;
  const Json doc = parse_json_file(file.string(), &raw);
  Scenario s = parse_scenario(doc, file);
  s.raw = std::move(raw);
  return s;
}

/// One SceneFrame per timestep, all sharing a single target object.
inline std::vector<SceneFrame> build_frames(const Scenario& s) {
  auto target = TargetObject::make(s.target_mesh, s.clean_colors, s.texture_size);
  auto background = std::make_shared<const BackgroundList>(s.background);
  std::vector<SceneFrame> frames;
  for (std::size_t t = 0; t < s.target_poses.size(); ++t) {
    SceneFrame f;
    f.t = static_cast<int>(t);
    f.target_model = s.target_poses[t];
    f.camera = s.camera;
    f.lighting = s.lighting;
    f.target = target;
    f.background = background;
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace advtex
