#pragma once

// Finite-difference gradient checks on small seeded scenes.
//
// A micro-scene is a <= 8-vertex target in front of a background plane,
// rendered at 24 x 24 over a few frames, with a small seeded policy. Each
// suite compares an analytic gradient against central differences and
// reports ||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||).

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "advtex/attack.hpp"
#include "advtex/fbd.hpp"
#include "advtex/policy.hpp"
#include "advtex/taao.hpp"

namespace advtex {

struct MicroScene {
  std::vector<SceneFrame> frames;
  std::shared_ptr<const PatchPoolPolicy> policy;
  Instruction instruction{1};
};

inline constexpr int kMicroImage = 24;

/// 3 x 2 vertex strip (6 vertices) with jittered positions and normals.
inline Mesh micro_target_mesh(Rng& rng) {
  Mesh m;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      m.vertices.emplace_back(-0.6 + 0.6 * c + rng.uniform(-0.05, 0.05), -0.4 + 0.8 * r + rng.uniform(-0.05, 0.05),
                              rng.uniform(-0.05, 0.05));
      m.uvs.emplace_back(c / 2.0, static_cast<double>(r));
      m.normals.push_back(Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1.0).normalized());
    }
  m.faces = {Face{0, 1, 4}, Face{0, 4, 3}, Face{1, 2, 5}, Face{1, 5, 4}};
  return m;
}

inline Mesh micro_plane(double half, double z) {
  Mesh m;
  m.vertices = {Vec3(-half, -half, z), Vec3(half, -half, z), Vec3(half, half, z), Vec3(-half, half, z)};
  m.uvs = {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
  m.normals.assign(4, Vec3(0, 0, 1));
  m.faces = {Face{0, 1, 2}, Face{0, 2, 3}};
  return m;
}

inline MicroScene make_micro_scene(std::uint64_t seed, int frames = 4) {
  Rng rng(seed, "micro-scene");
  Mesh mesh = micro_target_mesh(rng);
  VertexColors clean(mesh.vertex_count());
  for (double& v : clean.rgb) v = rng.uniform(0.25, 0.75);
  auto target = TargetObject::make(std::move(mesh), clean, {16, 16});

  auto background = std::make_shared<BackgroundList>();
  BackgroundObject plane;
  plane.mesh = std::make_shared<const Mesh>(micro_plane(2.0, -0.5));
  plane.texture = TextureMap(8, 8);
  for (double& v : plane.texture.data) v = rng.uniform(0.2, 0.8);
  plane.reflectance = 0.8;
  background->push_back(std::move(plane));

  CameraSpec cam;
  cam.eye = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 2.2);
  cam.target = Vec3::Zero();
  cam.fov_y = 45.0 * std::numbers::pi / 180.0;
  cam.near_clip = 0.1;
  cam.far_clip = 10.0;
  cam.width = cam.height = kMicroImage;

  Lighting light;
  light.ambient = 0.35;
  light.diffuse = 0.45;
  light.reflectance = 0.9;
  light.direction = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 1.0).normalized();

  MicroScene s;
  for (int t = 0; t < frames; ++t) {
    SceneFrame f;
    f.t = t;
    f.target_model = translation(Vec3(0.05 * t, rng.uniform(-0.05, 0.05), 0.0)) * rotation_y(0.1 * t) *
                     rotation_z(rng.uniform(-0.2, 0.2));
    f.camera = cam;
    f.lighting = light;
    f.target = target;
    f.background = background;
    s.frames.push_back(std::move(f));
  }
  PolicySpec spec;
  spec.seed = seed;
  spec.height = spec.width = kMicroImage;
  spec.patch = 4;
  spec.hidden = {16, 16};
  spec.embed_dim = 4;
  spec.instruction_count = 2;
  spec.weight_gain = 2.0;
  s.policy = build_policy(spec);
  return s;
}

struct GradCheckResult {
  std::string name;
  double rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t parameters = 0;

  bool passed() const { return rel_error < tolerance; }
};

namespace detail {

inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double gradient_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
  return std::sqrt(d) / scale;
}

inline Image random_direction(int h, int w, Rng& rng) {
  Image d(h, w);
  for (double& v : d.data) v = rng.uniform(-1.0, 1.0);
  return d;
}

}  // namespace detail

/// <bake(c), D> against VertexColorBaker::backward(D).
inline GradCheckResult check_bake_adjoint(std::uint64_t seed) {
  const MicroScene s = make_micro_scene(seed);
  const VertexColorBaker& baker = *s.frames.front().target->baker;
  Rng rng(seed, "gradcheck-bake");
  const Image d = detail::random_direction(baker.texture_size().height, baker.texture_size().width, rng);
  const VertexColors c0 = s.frames.front().target->clean_colors;
  auto f = [&](const std::vector<double>& x) {
    VertexColors c;
    c.rgb = x;
    return dot(baker.bake(c), d);
  };
  const auto fd = detail::central_differences(f, c0.rgb, 1e-6);
  return {"bake adjoint", detail::gradient_rel_error(baker.backward(d).rgb, fd), 1e-4, fd.size()};
}

/// <O_fg(c), D> against the renderer's backward pass (bake included).
inline GradCheckResult check_renderer_backward(std::uint64_t seed) {
  const MicroScene s = make_micro_scene(seed);
  Rng rng(seed, "gradcheck-render");
  const SceneFrame& frame = s.frames[1];
  const Image d = detail::random_direction(kMicroImage, kMicroImage, rng);
  const VertexColors c0 = frame.target->clean_colors;
  auto f = [&](const std::vector<double>& x) {
    VertexColors c;
    c.rgb = x;
    return dot(render_foreground(frame, c).first, d);
  };
  const auto tape = render_foreground(frame, c0).second;
  const auto fd = detail::central_differences(f, c0.rgb, 1e-6);
  return {"renderer backward", detail::gradient_rel_error(render_backward(tape, d).rgb, fd), 1e-4, fd.size()};
}

/// <pi(x), d> against Policy::input_gradient at a random observation.
inline GradCheckResult check_policy_gradient(std::uint64_t seed) {
  const MicroScene s = make_micro_scene(seed);
  Rng rng(seed, "gradcheck-policy");
  Observation x = detail::random_direction(kMicroImage, kMicroImage, rng);
  for (double& v : x.data) v = 0.5 + 0.5 * v;
  ActionVector d{};
  for (double& v : d) v = rng.uniform(-1.0, 1.0);
  auto f = [&](const std::vector<double>& flat) {
    Observation o = x;
    o.data = flat;
    const ActionVector a = s.policy->forward(o, s.instruction);
    double sum = 0.0;
    for (int k = 0; k < kActionDim; ++k) sum += a[k] * d[k];
    return sum;
  };
  const auto fd = detail::central_differences(f, x.data, 1e-5);
  const Observation g = s.policy->input_gradient(x, s.instruction, d);
  return {"policy input gradient", detail::gradient_rel_error(g.data, fd), 1e-5, fd.size()};
}

/// Full attack loss (TAAO weights, two views, EoT) with respect to the vertex
/// colors, evaluated away from the clean point where the loss is not smooth.
inline GradCheckResult check_attack_loss(std::uint64_t seed, AttackMode mode = AttackMode::untargeted) {
  const MicroScene s = make_micro_scene(seed);
  std::vector<Observation> clean_obs;
  std::vector<ActionVector> clean_actions;
  for (const auto& f : s.frames) {
    clean_obs.push_back(render_scene(f).image);
    clean_actions.push_back(s.policy->forward(clean_obs.back(), s.instruction));
  }
  const LatentEncoder encoder(16, 4);
  const FrameWeights weights = weigh_trajectory(clean_obs, encoder).weights;
  AttackProblem problem = make_attack_problem(s.policy, s.instruction, s.frames, weights, 2, 0.1, seed);
  problem.target_actions = make_target_trajectory(clean_actions, Vec3(0.3, -0.2, 0.1), 0.5);

  AttackConfig cfg = AttackConfig::for_level(PerturbationLevel::L2, mode);
  cfg.seed = seed;
  cfg.eot.enabled = true;
  cfg.eot.max_rotation = 0.1;
  cfg.eot.max_orbit = 0.05;
  cfg.eot.max_brightness = 0.03;
  cfg.eot.min_contrast = 0.9;
  cfg.eot.max_contrast = 1.1;
  cfg.eot.blur_kernels = {1, 3};

  Rng rng(seed, "gradcheck-attack");
  VertexColors c = problem.target->clean_colors;
  for (double& v : c.rgb) v += rng.uniform(-cfg.epsilon, cfg.epsilon);

  auto loss_at = [&](const VertexColors& colors, bool grad) {
    Rng eot_rng(seed, "eot");
    return evaluate_attack_loss(problem, colors, cfg, &eot_rng, grad);
  };
  auto f = [&](const std::vector<double>& x) {
    VertexColors cc;
    cc.rgb = x;
    return loss_at(cc, false).loss;
  };
  const auto fd = detail::central_differences(f, c.rgb, 1e-6);
  const std::string name = std::string("attack loss (") + (mode == AttackMode::untargeted ? "untargeted" : "targeted") +
                           ", seed " + std::to_string(seed) + ")";
  return {name, detail::gradient_rel_error(loss_at(c, true).gradient.rgb, fd), 1e-3, fd.size()};
}

/// Every suite: module checks on the first seed, pipeline checks on all.
inline std::vector<GradCheckResult> run_gradient_checks(const std::vector<std::uint64_t>& seeds) {
  std::vector<GradCheckResult> out;
  if (seeds.empty()) return out;
  out.push_back(check_bake_adjoint(seeds.front()));
  out.push_back(check_renderer_backward(seeds.front()));
  out.push_back(check_policy_gradient(seeds.front()));
  for (std::size_t i = 0; i < seeds.size(); ++i)
    out.push_back(check_attack_loss(seeds[i], i % 2 == 0 ? AttackMode::untargeted : AttackMode::targeted));
  return out;
}

}  // namespace advtex
