#include <gtest/gtest.h>

#include <limits>

#include "test_support.hpp"

using namespace advtex;
using namespace advtex::testing;

namespace {

/// Screen-space brute force: point-in-triangle at each pixel center, nearest
/// depth wins. Returns the face per pixel (-1 when none) and the distance of
/// the decision from any tie (edge or depth), in pixels or NDC units.
struct PixelOracle {
  int face = -1;
  double margin = 1e9;
};

std::vector<PixelOracle> brute_force_raster(const Mesh& mesh, const Mat4& mvp, ImageSize size) {
  std::vector<PixelOracle> out(static_cast<std::size_t>(size.height) * size.width);
  std::vector<Vec4> clip;
  for (const auto& v : mesh.vertices) clip.push_back(mvp * Vec4(v.x(), v.y(), v.z(), 1.0));
  for (int r = 0; r < size.height; ++r)
    for (int c = 0; c < size.width; ++c) {
      const Vec2 p(c + 0.5, r + 0.5);
      double best = std::numeric_limits<double>::infinity(), second = best;
      PixelOracle& o = out[static_cast<std::size_t>(r) * size.width + c];
      for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        std::array<Vec2, 3> s;
        std::array<double, 3> z;
        bool ok = true;
        for (int k = 0; k < 3; ++k) {
          const Vec4& h = clip[mesh.faces[f][k]];
          if (h.w() <= 0 || h.z() < -h.w()) ok = false;
          s[k] = Vec2((h.x() / h.w() + 1) * 0.5 * size.width, (1 - h.y() / h.w()) * 0.5 * size.height);
          z[k] = h.z() / h.w();
        }
        if (!ok) continue;
        const double area = (s[1] - s[0]).x() * (s[2] - s[0]).y() - (s[1] - s[0]).y() * (s[2] - s[0]).x();
        if (area == 0) continue;
        std::array<double, 3> b;
        for (int k = 0; k < 3; ++k) {
          const Vec2& a1 = s[(k + 1) % 3];
          const Vec2& a2 = s[(k + 2) % 3];
          b[k] = ((a1 - p).x() * (a2 - p).y() - (a1 - p).y() * (a2 - p).x()) / area;
          const double edge_len = (a2 - a1).norm();
          o.margin = std::min(o.margin, std::abs(b[k] * area) / edge_len);
        }
        if (b[0] < 0 || b[1] < 0 || b[2] < 0) continue;
        const double depth = b[0] * z[0] + b[1] * z[1] + b[2] * z[2];
        if (depth < -1 || depth > 1) continue;
        if (depth < best) {
          second = best;
          best = depth;
          o.face = static_cast<int>(f);
        } else {
          second = std::min(second, depth);
        }
      }
      if (std::isfinite(second)) o.margin = std::min(o.margin, second - best);
    }
  return out;
}

/// Random triangles inside the view volume of a front camera.
Mesh random_triangle_soup(Rng& rng, int faces) {
  Mesh m;
  for (int f = 0; f < faces; ++f) {
    const Vec3 center(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    for (int k = 0; k < 3; ++k) {
      m.vertices.push_back(center + Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3)));
      m.uvs.emplace_back(rng.uniform(), rng.uniform());
      m.normals.push_back(Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 1.0).normalized());
    }
    m.faces.push_back({3 * f, 3 * f + 1, 3 * f + 2});
  }
  return m;
}

Mat4 front_mvp(const CameraSpec& cam, const Mat4& model = Mat4::Identity()) {
  return compose_mvp(perspective(cam), look_at(cam), model);
}

Lighting ambient_only() {
  Lighting l;
  l.ambient = 1.0;
  l.diffuse = 0.0;
  l.reflectance = 1.0;
  l.direction = Vec3(0, 0, 1);
  return l;
}

/// Straight-line bilinear sample with clamp-to-edge addressing.
double sample_bilinear(const TextureMap& tex, const Vec2& uv, int ch) {
  const double x = uv.x() * tex.width - 0.5, y = uv.y() * tex.height - 0.5;
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto texel = [&](int r, int c) {
    return tex.at(std::clamp(r, 0, tex.height - 1), std::clamp(c, 0, tex.width - 1), ch);
  };
  return (1 - fx) * (1 - fy) * texel(y0, x0) + fx * (1 - fy) * texel(y0, x0 + 1) + (1 - fx) * fy * texel(y0 + 1, x0) +
         fx * fy * texel(y0 + 1, x0 + 1);
}

}  // namespace

TEST(Rasterize, FullScreenTriangleCoversEverything) {
  Mesh m;
  m.vertices = {Vec3(-1, -1, 0), Vec3(3, -1, 0), Vec3(-1, 3, 0)};
  m.uvs.assign(3, Vec2(0.5, 0.5));
  m.normals.assign(3, Vec3(0, 0, 1));
  m.faces = {Face{0, 1, 2}};
  const FragmentBuffer buf = rasterize(m, Mat4::Identity(), {16, 16});
  for (const auto& f : buf.pixels) EXPECT_EQ(f.face, 0);
}

TEST(Rasterize, NearerTriangleWins) {
  Mesh m;
  m.vertices = {Vec3(-1, -1, 0.5), Vec3(3, -1, 0.5), Vec3(-1, 3, 0.5), Vec3(-1, -1, -0.5), Vec3(3, -1, -0.5),
                Vec3(-1, 3, -0.5)};
  m.uvs.assign(6, Vec2(0.5, 0.5));
  m.normals.assign(6, Vec3(0, 0, 1));
  m.faces = {Face{0, 1, 2}, Face{3, 4, 5}};
  const FragmentBuffer buf = rasterize(m, Mat4::Identity(), {8, 8});
  for (const auto& f : buf.pixels) EXPECT_EQ(f.face, 1);
}

TEST(Rasterize, FullyClippedMeshIsEmpty) {
  const Mesh m = unit_quad(1.0, Vec3(0, 0, 5));  // behind the camera at z = 2
  const CameraSpec cam = front_camera(16);
  EXPECT_EQ(rasterize(m, front_mvp(cam), {16, 16}).covered_count(), 0u);
}

TEST(Rasterize, MatchesBruteForceOracle) {
  const CameraSpec cam = front_camera(16);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed, "raster");
    const Mesh m = random_triangle_soup(rng, 6);
    const Mat4 mvp = front_mvp(cam);
    const FragmentBuffer buf = rasterize(m, mvp, cam.size());
    const auto oracle = brute_force_raster(m, mvp, cam.size());
    int checked = 0;
    for (std::size_t p = 0; p < oracle.size(); ++p) {
      if (oracle[p].margin < 1e-3) continue;
      ++checked;
      EXPECT_EQ(buf.pixels[p].face, oracle[p].face) << "seed " << seed << " pixel " << p;
    }
    EXPECT_GT(checked, 200);
  }
}

TEST(Rasterize, FragmentInvariants) {
  Rng rng(6, "raster");
  const CameraSpec cam = front_camera(24);
  const Mesh m = random_triangle_soup(rng, 8);
  const FragmentBuffer buf = rasterize(m, front_mvp(cam), cam.size());
  ASSERT_GT(buf.covered_count(), 0u);
  for (const auto& f : buf.pixels) {
    if (!f.covered()) continue;
    EXPECT_NEAR(f.bary[0] + f.bary[1] + f.bary[2], 1.0, 1e-6);
    for (double b : f.bary) EXPECT_GE(b, 0.0);
    EXPECT_GE(f.depth, -1.0);
    EXPECT_LE(f.depth, 1.0);
  }
}

TEST(Rasterize, SharedEdgeCoveredExactlyOnce) {
  // Two faces of a quad seen head-on: every pixel inside is claimed by one face.
  const CameraSpec cam = front_camera(32, 1.0);
  const Mesh m = unit_quad(3.0);
  const FragmentBuffer buf = rasterize(m, front_mvp(cam), cam.size());
  EXPECT_EQ(buf.covered_count(), 32u * 32u);
}

TEST(Shade, AmbientOnlyEqualsTextureSample) {
  Rng rng(7, "shade");
  const CameraSpec cam = front_camera(16, 1.5);
  const Mesh m = unit_quad(1.0);
  const TextureMap tex = random_image(5, 7, rng);
  const FragmentBuffer frags = rasterize(m, front_mvp(cam), cam.size());
  const Observation img = shade(frags, tex, ambient_only()).first;
  for (std::size_t p = 0; p < frags.pixels.size(); ++p) {
    const Fragment& f = frags.pixels[p];
    for (int ch = 0; ch < 3; ++ch) {
      const double expected = f.covered() ? sample_bilinear(tex, f.uv, ch) : 0.0;
      EXPECT_NEAR(img.data[p * 3 + ch], expected, 1e-15);
    }
  }
}

TEST(Shade, BacklitPixelsAreBlack) {
  const CameraSpec cam = front_camera(8, 1.5);
  const Mesh m = unit_quad(1.0);
  Lighting l;
  l.ambient = 0.0;
  l.diffuse = 1.0;
  l.direction = Vec3(1, 0, 0);
  const Observation img = shade(rasterize(m, front_mvp(cam), cam.size()), TextureMap(4, 4, 0.8), l).first;
  for (double v : img.data) EXPECT_EQ(v, 0.0);
}

TEST(Shade, MatchesStraightLineOracle) {
  Rng rng(8, "shade");
  const CameraSpec cam = front_camera(16);
  const Mesh m = random_triangle_soup(rng, 5);
  const Mat4 model = rotation_y(0.2);
  const Lighting light = soft_lighting();
  const TextureMap tex = random_image(8, 8, rng);
  const Mat4 mvp = front_mvp(cam, model);
  const FragmentBuffer frags = rasterize(m, mvp, cam.size(), model);
  const Observation img = shade(frags, tex, light).first;
  const Mat3 nmat = model.topLeftCorner<3, 3>().inverse().transpose();
  for (std::size_t p = 0; p < frags.pixels.size(); ++p) {
    const Fragment& f = frags.pixels[p];
    if (!f.covered()) continue;
    const Face& face = m.faces[f.face];
    // Perspective-correct weights recomputed from clip w and the screen-space barycentrics.
    std::array<Vec2, 3> s;
    std::array<double, 3> w;
    for (int k = 0; k < 3; ++k) {
      const Vec4 h = mvp * Vec4(m.vertices[face[k]].x(), m.vertices[face[k]].y(), m.vertices[face[k]].z(), 1.0);
      s[k] = Vec2((h.x() / h.w() + 1) * 0.5 * cam.width, (1 - h.y() / h.w()) * 0.5 * cam.height);
      w[k] = h.w();
    }
    const Vec2 q((p % cam.width) + 0.5, (p / cam.width) + 0.5);
    const double area = (s[1] - s[0]).x() * (s[2] - s[0]).y() - (s[1] - s[0]).y() * (s[2] - s[0]).x();
    std::array<double, 3> lam;
    double sum = 0;
    for (int k = 0; k < 3; ++k) {
      const Vec2& a1 = s[(k + 1) % 3];
      const Vec2& a2 = s[(k + 2) % 3];
      lam[k] = std::max(0.0, ((a1 - q).x() * (a2 - q).y() - (a1 - q).y() * (a2 - q).x()) / area) / w[k];
      sum += lam[k];
    }
    Vec2 uv = Vec2::Zero();
    Vec3 n = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
      uv += lam[k] / sum * m.uvs[face[k]];
      n += lam[k] / sum * m.normals[face[k]];
    }
    n = (nmat * n).normalized();
    const double shading = light.reflectance * (light.ambient + light.diffuse * std::max(0.0, n.dot(light.direction)));
    for (int ch = 0; ch < 3; ++ch)
      EXPECT_NEAR(img.data[p * 3 + ch], std::clamp(shading * sample_bilinear(tex, uv, ch), 0.0, 1.0), 1e-9);
  }
}

TEST(Shade, TapeFreePathMatchesTapedPath) {
  Rng rng(9, "shade");
  const CameraSpec cam = front_camera(16);
  const Mesh m = random_triangle_soup(rng, 5);
  const TextureMap tex = random_image(8, 8, rng);
  const FragmentBuffer frags = rasterize(m, front_mvp(cam), cam.size());
  EXPECT_EQ(shade(frags, tex, soft_lighting()).first, shade_reference(frags, tex, soft_lighting()));
}

namespace {

struct StripScene {
  Mesh mesh = six_vertex_strip();
  std::shared_ptr<const VertexColorBaker> baker = std::make_shared<const VertexColorBaker>(mesh, ImageSize{16, 16});
  CameraSpec cam = front_camera(24);
  Mat4 model = rotation_y(0.15) * rotation_x(-0.1);
  Mat4 mvp = front_mvp(cam, model);
  Lighting light = soft_lighting();

  std::pair<Observation, RenderTape> render(const VertexColors& c) const {
    return render_foreground(mesh, baker, c, mvp, model, light, cam.size());
  }
};

}  // namespace

TEST(RenderForeground, WhiteAmbientIsWhite) {
  StripScene s;
  s.light = ambient_only();
  const Observation img = s.render(VertexColors::uniform(6, Vec3(1, 1, 1))).first;
  const FragmentBuffer frags = rasterize(s.mesh, s.mvp, s.cam.size(), s.model);
  for (std::size_t p = 0; p < frags.pixels.size(); ++p)
    for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(img.data[p * 3 + ch], frags.pixels[p].covered() ? 1.0 : 0.0, 1e-12);
}

TEST(RenderForeground, ZeroColorsAreBlack) {
  StripScene s;
  s.light.ambient = 5.0;
  const Observation img = s.render(VertexColors(6, 0.0)).first;
  for (double v : img.data) EXPECT_EQ(v, 0.0);
}

TEST(RenderForeground, EqualsManualComposition) {
  Rng rng(10, "render");
  StripScene s;
  const VertexColors c = random_colors(6, rng);
  const TextureMap tex = bake_vertex_colors(s.mesh, c, {16, 16});
  const Observation manual = shade(rasterize(s.mesh, s.mvp, s.cam.size(), s.model), tex, s.light).first;
  EXPECT_EQ(s.render(c).first, manual);
}

TEST(RenderForeground, IsDeterministic) {
  Rng rng(11, "render");
  StripScene s;
  const VertexColors c = random_colors(6, rng);
  EXPECT_EQ(s.render(c).first, s.render(c).first);
}

TEST(RenderBackward, ZeroUpstreamGivesZero) {
  StripScene s;
  const auto tape = s.render(VertexColors(6, 0.5)).second;
  for (double v : render_backward(tape, Image(24, 24, 0.0)).rgb) EXPECT_EQ(v, 0.0);
}

TEST(RenderBackward, RejectsShapeMismatch) {
  StripScene s;
  const auto tape = s.render(VertexColors(6, 0.5)).second;
  EXPECT_THROW(render_backward(tape, Image(23, 24, 0.0)), std::invalid_argument);
}

TEST(RenderBackward, SinglePixelFollowsOnePath) {
  StripScene s;
  s.light = ambient_only();
  const auto [img, tape] = s.render(VertexColors(6, 0.5));
  std::size_t p = 0;
  while (!tape.frags.pixels[p].covered()) ++p;
  p += 3;  // a pixel inside the silhouette
  ASSERT_TRUE(tape.frags.pixels[p].covered());
  Image d(24, 24, 0.0);
  d.data[p * 3 + 1] = 1.0;
  const TextureMap dt = texture_backward(tape, d);
  const TexelFootprint fp = bilinear_footprint(tape.frags.pixels[p].uv, {16, 16});
  TextureMap expected(16, 16, 0.0);
  for (int k = 0; k < 4; ++k) expected.data[fp.texel[k] * 3 + 1] += fp.weight[k];
  EXPECT_LT(max_abs_diff(dt, expected), 1e-15);
  const VertexColors g = render_backward(tape, d);
  EXPECT_EQ(g, s.baker->backward(expected));
}

TEST(RenderBackward, ClampedPixelsPassNoGradient) {
  StripScene s;
  s.light.ambient = 3.0;  // every covered pixel saturates
  const auto tape = s.render(VertexColors(6, 0.9)).second;
  Rng rng(12, "render");
  for (double v : render_backward(tape, random_image(24, 24, rng, -1, 1)).rgb) EXPECT_EQ(v, 0.0);
}

TEST(RenderBackward, MatchesFiniteDifferences) {
  Rng rng(13, "render");
  StripScene s;
  const VertexColors c0 = random_colors(6, rng, 0.3, 0.7);
  const Image d = random_image(24, 24, rng, -1.0, 1.0);
  auto f = [&](const std::vector<double>& x) {
    VertexColors c;
    c.rgb = x;
    return dot(s.render(c).first, d);
  };
  const auto tape = s.render(c0).second;
  EXPECT_LT(relative_error(render_backward(tape, d).rgb, finite_difference(f, c0.rgb, 1e-6)), 1e-4);
}

TEST(RenderBackward, DirectionalAdjointIdentity) {
  StripScene s;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed, "render-adjoint");
    const VertexColors c = random_colors(6, rng, 0.3, 0.7);
    const VertexColors delta = random_colors(6, rng, -1.0, 1.0);
    const Image g = random_image(24, 24, rng, -1.0, 1.0);
    const double eps = 1e-3;
    VertexColors cp = c, cm = c;
    for (std::size_t i = 0; i < c.rgb.size(); ++i) {
      cp.rgb[i] += eps * delta.rgb[i];
      cm.rgb[i] -= eps * delta.rgb[i];
    }
    const double lhs = (dot(s.render(cp).first, g) - dot(s.render(cm).first, g)) / (2 * eps);
    const VertexColors grad = render_backward(s.render(c).second, g);
    double rhs = 0.0;
    for (std::size_t i = 0; i < c.rgb.size(); ++i) rhs += delta.rgb[i] * grad.rgb[i];
    EXPECT_LT(std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)), 1e-4) << "seed " << seed;
  }
}

TEST(RenderBackward, UnseenFacesGetZeroGradient) {
  // Face 2 of the strip is pushed behind the camera.
  Mesh m;
  m.vertices = {Vec3(-0.5, -0.5, 0), Vec3(0.5, -0.5, 0), Vec3(0, 0.5, 0), Vec3(-0.5, -0.5, 5), Vec3(0.5, -0.5, 5),
                Vec3(0, 0.5, 5)};
  m.uvs = {Vec2(0.1, 0.1), Vec2(0.4, 0.1), Vec2(0.25, 0.4), Vec2(0.6, 0.6), Vec2(0.9, 0.6), Vec2(0.75, 0.9)};
  m.normals.assign(6, Vec3(0, 0, 1));
  m.faces = {Face{0, 1, 2}, Face{3, 4, 5}};
  auto baker = std::make_shared<const VertexColorBaker>(m, ImageSize{16, 16});
  const CameraSpec cam = front_camera(16);
  const auto tape = render_foreground(m, baker, VertexColors(6, 0.5), front_mvp(cam), Mat4::Identity(),
                                      soft_lighting(), cam.size())
                        .second;
  Rng rng(14, "render");
  const VertexColors g = render_backward(tape, random_image(16, 16, rng, -1, 1));
  for (int v = 3; v < 6; ++v)
    for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(g.at(v, ch), 0.0);
  double front = 0.0;
  for (int v = 0; v < 3; ++v)
    for (int ch = 0; ch < 3; ++ch) front += std::abs(g.at(v, ch));
  EXPECT_GT(front, 0.0);
}
