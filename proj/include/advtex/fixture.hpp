#pragma once

// Generator for the tabletop fixture: a checkered table plane, two
// distractor boxes, and a subdivided cube target (216 vertices, 300
// triangles) whose UV atlas tiles the whole texture. The target slides
// slowly across the table, is lifted in a short burst at frame 20 (the
// "grasp"), then drifts again: 40 frames at 64 x 64.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "advtex/io.hpp"
#include "advtex/json_reader.hpp"
#include "advtex/mesh.hpp"

namespace advtex {

inline constexpr int kFixtureFrames = 40;
inline constexpr int kFixtureGraspFrame = 20;

/// Axis-aligned cube of half-size `half`, each face split into n x n quads.
/// Face f occupies UV cell (f % 3, f / 3) of a 3 x 2 atlas.
inline Mesh subdivided_cube(double half, int n) {
  struct Side {
    Vec3 corner, u, v;
  };
  const Side sides[6] = {
      {Vec3(1, -1, 1), Vec3(0, 0, -1), Vec3(0, 1, 0)},   {Vec3(-1, -1, -1), Vec3(0, 0, 1), Vec3(0, 1, 0)},
      {Vec3(-1, 1, 1), Vec3(1, 0, 0), Vec3(0, 0, -1)},   {Vec3(-1, -1, -1), Vec3(1, 0, 0), Vec3(0, 0, 1)},
      {Vec3(-1, -1, 1), Vec3(1, 0, 0), Vec3(0, 1, 0)},   {Vec3(1, -1, -1), Vec3(-1, 0, 0), Vec3(0, 1, 0)}};
  Mesh m;
  for (int f = 0; f < 6; ++f) {
    const Side& s = sides[f];
    const Vec3 normal = s.u.cross(s.v);
    const int base = static_cast<int>(m.vertices.size());
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) {
        const double a = static_cast<double>(i) / n, b = static_cast<double>(j) / n;
        m.vertices.push_back(half * (s.corner + 2.0 * a * s.u + 2.0 * b * s.v));
        m.uvs.emplace_back(((f % 3) + a) / 3.0, ((f / 3) + b) / 2.0);
        m.normals.push_back(normal);
      }
    const auto id = [&](int i, int j) { return base + j * (n + 1) + i; };
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
        m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
      }
  }
  return m;
}

/// Horizontal plane y = 0 spanning [x0, x1] x [z0, z1], facing +y.
inline Mesh floor_plane(double x0, double x1, double z0, double z1) {
  Mesh m;
  m.vertices = {Vec3(x0, 0, z1), Vec3(x1, 0, z1), Vec3(x1, 0, z0), Vec3(x0, 0, z0)};
  m.uvs = {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
  m.normals.assign(4, Vec3(0, 1, 0));
  m.faces = {Face{0, 1, 2}, Face{0, 2, 3}};
  return m;
}

/// Painted appearance of the target: a warm base color with a soft
/// per-face tint and a diagonal stripe.
inline VertexColors fixture_clean_colors(const Mesh& cube) {
  const Vec3 base(0.70, 0.38, 0.30);
  const Vec3 tints[6] = {Vec3(0.04, 0.02, 0.0),  Vec3(-0.03, 0.03, 0.02), Vec3(0.02, -0.02, 0.05),
                         Vec3(-0.02, 0.0, -0.03), Vec3(0.0, 0.04, 0.0),    Vec3(0.03, -0.03, 0.03)};
  VertexColors c(cube.vertex_count());
  const std::size_t per_face = cube.vertex_count() / 6;
  for (std::size_t v = 0; v < cube.vertex_count(); ++v) {
    const std::size_t f = v / per_face;
    const Vec2 uv = cube.uvs[v];
    const double a = uv.x() * 3.0 - static_cast<double>(f % 3), b = uv.y() * 2.0 - static_cast<double>(f / 3);
    const double stripe = std::abs(a - b) < 0.25 ? 0.12 : 0.0;
    for (int ch = 0; ch < 3; ++ch) c.at(v, ch) = std::clamp(base[ch] + tints[f][ch] + stripe, 0.0, 1.0);
  }
  return c;
}

/// Target pose per frame: translation (x, y, z) and yaw in degrees.
struct FixturePose {
  Vec3 translation;
  double yaw_deg = 0.0;
};

inline std::vector<FixturePose> fixture_trajectory() {
  // Lift increments around the grasp: the largest latent speed and
  // acceleration both fall on kFixtureGraspFrame.
  const double burst[4] = {0.10, 0.20, 0.06, 0.02};
  std::vector<FixturePose> poses;
  double x = -0.25, y = 0.2, z = 0.05, yaw = 10.0;
  for (int t = 0; t < kFixtureFrames; ++t) {
    poses.push_back({Vec3(x, y, z), yaw});
    const int k = t - (kFixtureGraspFrame - 1);
    if (k >= 0 && k < 4) {
      y += burst[k];
    } else {
      x += t < kFixtureGraspFrame ? 0.012 : 0.006;
      z -= 0.004;
      yaw += 0.8;
    }
  }
  return poses;
}

inline Json fixture_config_json() {
  return {{"seed", 7},
          {"policy", {{"seed", 11}, {"patch", 8}, {"hidden", {64, 64}}, {"embed_dim", 16}, {"weight_gain", 2.0}}},
          {"transfer_policy", {{"seed", 23}, {"patch", 8}, {"hidden", {64, 64}}, {"embed_dim", 16}, {"weight_gain", 2.0}}},
          {"taao", {{"tau", 0.25}}},
          {"attack",
           {{"mode", "untargeted"},
            {"level", "L3"},
            {"iterations", 200},
            {"views", 2},
            {"view_orbit_deg", 4.0},
            {"weighting", "taao"},
            {"eot",
             {{"enabled", true},
              {"rotation_deg", 6.0},
              {"translation", 0.03},
              {"orbit_deg", 3.0},
              {"distance_scale", {0.95, 1.05}},
              {"brightness", 0.04},
              {"contrast", {0.9, 1.1}},
              {"blur_kernels", {1, 3}}}}}},
          {"target", {{"alt_point", {0.6, -2.0, 0.8}}, {"gripper_open", -0.5}}},
          {"evaluation",
           {{"trials", 50},
            {"threshold_factor", 0.5},
            {"gaussian_sigma_factor", 1.0},
            {"perturbation",
             {{"enabled", true},
              {"rotation_deg", 5.0},
              {"translation", 0.02},
              {"orbit_deg", 2.0},
              {"distance_scale", {0.97, 1.03}},
              {"brightness", 0.03},
              {"contrast", {0.95, 1.05}},
              {"blur_kernels", {1}}}},
            {"defense", "none"}}}};
}

/// Targeted variant with uniform frame weights.
inline Json fixture_targeted_config_json() {
  Json c = fixture_config_json();
  c["attack"]["mode"] = "targeted";
  c["attack"]["weighting"] = "uniform";
  return c;
}

inline Json fixture_scenario_json() {
  Json frames = Json::array();
  for (const auto& p : fixture_trajectory())
    frames.push_back({{"pose",
                       {{"translation", {p.translation.x(), p.translation.y(), p.translation.z()}},
                        {"rotation_deg", {0.0, p.yaw_deg, 0.0}}}}});
  return {{"name", "tabletop"},
          {"image", {{"width", 64}, {"height", 64}}},
          {"texture_size", {{"width", 96}, {"height", 64}}},
          {"instruction", 3},
          {"camera",
           {{"eye", {0.0, 0.95, 1.35}}, {"target", {0.0, 0.32, -0.05}}, {"up", {0, 1, 0}}, {"fov_y_deg", 45.0},
            {"near", 0.1}, {"far", 10.0}}},
          {"lighting", {{"ambient", 0.45}, {"diffuse", 0.55}, {"direction", {0.4, 1.0, 0.6}}}},
          {"target", {{"mesh", "target.obj"}, {"reflectance", 0.9}, {"clean_colors", "target.vcol"}}},
          {"background",
           {{{"mesh", "table.obj"},
             {"reflectance", 0.85},
             {"checker", {{"colors", {{0.62, 0.50, 0.36}, {0.52, 0.41, 0.29}}}, {"cells", 8}}}},
            {{"mesh", "box.obj"},
             {"pose", {{"translation", {-0.62, 0.14, -0.35}}, {"rotation_deg", {0, 25, 0}}, {"scale", 0.14}}},
             {"reflectance", 0.9},
             {"color", {0.25, 0.40, 0.70}}},
            {{"mesh", "box.obj"},
             {"pose", {{"translation", {0.62, 0.1, -0.45}}, {"rotation_deg", {0, -35, 0}}, {"scale", 0.1}}},
             {"reflectance", 0.9},
             {"color", {0.30, 0.62, 0.35}}}}},
          {"frames", frames}};
}

/// Writes scenario.json, config.json, config_targeted.json, the OBJ meshes
/// and target.vcol.
inline void write_tabletop_fixture(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Mesh target = subdivided_cube(0.18, 5);
  save_mesh(target, dir / "target.obj");
  save_vertex_colors(fixture_clean_colors(target), dir / "target.vcol");
  save_mesh(floor_plane(-1.6, 1.6, -1.6, 1.2), dir / "table.obj");
  save_mesh(subdivided_cube(1.0, 1), dir / "box.obj");
  for (const auto& [name, doc] : {std::pair{"scenario.json", fixture_scenario_json()},
                                  std::pair{"config.json", fixture_config_json()},
                                  std::pair{"config_targeted.json", fixture_targeted_config_json()}}) {
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    os << doc.dump(2) << '\n';
  }
}

}  // namespace advtex
