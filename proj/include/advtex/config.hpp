#pragma once

// Run configuration (JSON). Every key is optional; omitted keys take the
// defaults below. Schema:
//
//   {
//     "seed": 0,                                   root of every random stream
//     "policy":          POLICY,                   attacked policy
//     "transfer_policy": POLICY,                   held-out policy for transfer
//     "taao": {"tau": 0.25, "feature_dim": 64, "grid": 8, "encoder_seed": 8003159},
//     "attack": {
//       "mode": "untargeted" | "targeted", "level": "L0".."L3" | "custom",
//       "epsilon": e (custom only), "lambda_mse": l, "step_size": s,
//       "iterations": 200, "views": 1, "view_orbit_deg": 0,
//       "weighting": "taao" | "uniform" | "single_frame" | "random",
//       "single_frame": -1, "keep_best": true, "eot": EOT
//     },
//     "target": {"alt_point": [x,y,z], "gripper_open": -1},
//     "evaluation": {
//       "trials": 50, "threshold": t | "threshold_factor": 0.5,
//       "gaussian_sigma_factor": 1.0, "perturbation": EOT, "defense": "none"
//     }
//   }
//
//   POLICY = {"seed", "patch", "hidden": [h1, h2], "embed_dim",
//             "instruction_count", "weight_gain", "activation": "tanh" | "identity"}
//   EOT    = {"enabled", "rotation_deg", "translation", "orbit_deg",
//             "distance_scale": [lo, hi], "brightness", "contrast": [lo, hi],
//             "blur_kernels": [1, 3]}
//   defense strings: "none", "noise:<sigma>", "median:<k>", "bitdepth:<bits>"
//
// The failure threshold is `threshold` when given, otherwise
// threshold_factor times the RMS of the clean reference actions.

#include <cstdint>
#include <optional>
#include <string>

#include "advtex/attack.hpp"
#include "advtex/defenses.hpp"
#include "advtex/json_reader.hpp"
#include "advtex/policy.hpp"
#include "advtex/taao.hpp"

namespace advtex {

struct TaaoSettings {
  double tau = kDefaultTemperature;
  int feature_dim = 64;
  int grid = 8;
  std::uint64_t encoder_seed = LatentEncoder::kDefaultSeed;
};

struct TargetSettings {
  Vec3 alt_point = Vec3(0.5, 0.5, 0.5);
  double gripper_open = -1.0;
};

struct EvaluationSettings {
  int trials = 50;
  std::optional<double> threshold;
  double threshold_factor = 0.5;
  double gaussian_sigma_factor = 1.0;
  EotConfig perturbation;
  DefenseSpec defense;
};

struct RunConfig {
  std::uint64_t seed = 0;
  PolicySpec policy;
  PolicySpec transfer_policy;
  TaaoSettings taao;
  AttackConfig attack;
  TargetSettings target;
  EvaluationSettings evaluation;
  std::string raw;  // file bytes, for content hashing

  RunConfig() { transfer_policy.seed = 1; }
};

inline std::string to_string(AttackMode m) { return m == AttackMode::untargeted ? "untargeted" : "targeted"; }

inline std::string to_string(PerturbationLevel l) {
  switch (l) {
    case PerturbationLevel::L0: return "L0";
    case PerturbationLevel::L1: return "L1";
    case PerturbationLevel::L2: return "L2";
    case PerturbationLevel::L3: return "L3";
    case PerturbationLevel::custom: return "custom";
  }
  return "?";
}

inline std::string to_string(WeightingScheme w) {
  switch (w) {
    case WeightingScheme::taao: return "taao";
    case WeightingScheme::uniform: return "uniform";
    case WeightingScheme::single_frame: return "single_frame";
    case WeightingScheme::random: return "random";
  }
  return "?";
}

inline AttackMode parse_attack_mode(const std::string& s) {
  if (s == "untargeted") return AttackMode::untargeted;
  if (s == "targeted") return AttackMode::targeted;
  throw std::invalid_argument("unknown attack mode '" + s + "' (expected untargeted or targeted)");
}

inline PerturbationLevel parse_level(const std::string& s) {
  for (auto l : {PerturbationLevel::L0, PerturbationLevel::L1, PerturbationLevel::L2, PerturbationLevel::L3,
                 PerturbationLevel::custom})
    if (s == to_string(l)) return l;
  throw std::invalid_argument("unknown perturbation level '" + s + "' (expected L0, L1, L2, L3 or custom)");
}

inline WeightingScheme parse_weighting(const std::string& s) {
  for (auto w : {WeightingScheme::taao, WeightingScheme::uniform, WeightingScheme::single_frame,
                 WeightingScheme::random})
    if (s == to_string(w)) return w;
  throw std::invalid_argument("unknown weighting '" + s + "'");
}

/// "none", "noise:0.05", "median:3", "bitdepth:7".
inline DefenseSpec parse_defense(const std::string& s) {
  DefenseSpec d;
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : s.substr(colon + 1);
  try {
    if (kind == "none") {
      d.kind = DefenseKind::none;
    } else if (kind == "noise") {
      d.kind = DefenseKind::additive_noise;
      if (!arg.empty()) d.sigma = std::stod(arg);
    } else if (kind == "median") {
      d.kind = DefenseKind::median_blur;
      if (!arg.empty()) d.kernel = std::stoi(arg);
    } else if (kind == "bitdepth") {
      d.kind = DefenseKind::bit_depth;
      if (!arg.empty()) d.bits = std::stoi(arg);
    } else {
      throw std::invalid_argument("");
    }
  } catch (const std::logic_error&) {
    throw std::invalid_argument("bad defense '" + s + "' (expected none, noise:<sigma>, median:<k> or bitdepth:<bits>)");
  }
  validate_defense(d);
  return d;
}

inline std::string defense_string(const DefenseSpec& d) {
  switch (d.kind) {
    case DefenseKind::none: return "none";
    case DefenseKind::additive_noise: {
      std::ostringstream os;
      os.precision(17);
      os << "noise:" << d.sigma;
      return os.str();
    }
    case DefenseKind::median_blur: return "median:" + std::to_string(d.kernel);
    case DefenseKind::bit_depth: return "bitdepth:" + std::to_string(d.bits);
  }
  return "none";
}

namespace detail {

inline constexpr double kDeg = std::numbers::pi / 180.0;

inline PolicySpec read_policy(const JsonReader& r, PolicySpec p) {
  r.only_keys({"seed", "patch", "hidden", "embed_dim", "instruction_count", "weight_gain", "activation"});
  if (r.has("seed")) p.seed = r.at("seed").seed();
  if (r.has("patch")) p.patch = r.at("patch").integer_in(1, 4096);
  if (r.has("hidden")) {
    const JsonReader h = r.at("hidden");
    if (h.size() != 2) h.fail("expected two hidden widths");
    p.hidden = {h.at(0).integer_in(1, 1 << 16), h.at(1).integer_in(1, 1 << 16)};
  }
  if (r.has("embed_dim")) p.embed_dim = r.at("embed_dim").integer_in(0, 1 << 16);
  if (r.has("instruction_count")) p.instruction_count = r.at("instruction_count").integer_in(1, 1 << 20);
  if (r.has("weight_gain")) p.weight_gain = r.at("weight_gain").number_in(1e-6, 1e6);
  if (r.has("activation")) {
    const std::string a = r.at("activation").string();
    if (a == "tanh") p.activation = Activation::tanh;
    else if (a == "identity") p.activation = Activation::identity;
    else r.at("activation").fail("expected tanh or identity");
  }
  return p;
}

inline std::pair<double, double> read_range(const JsonReader& r) {
  const auto v = r.numbers(2);
  if (v[0] > v[1]) r.fail("range must be [lo, hi] with lo <= hi");
  return {v[0], v[1]};
}

inline EotConfig read_eot(const JsonReader& r) {
  r.only_keys({"enabled", "rotation_deg", "translation", "orbit_deg", "distance_scale", "brightness", "contrast",
               "blur_kernels"});
  EotConfig e;
  e.enabled = r.boolean_or("enabled", true);
  if (r.has("rotation_deg")) e.max_rotation = r.at("rotation_deg").number_in(0.0, 180.0) * kDeg;
  if (r.has("translation")) e.max_translation = r.at("translation").number_in(0.0, 1e3);
  if (r.has("orbit_deg")) e.max_orbit = r.at("orbit_deg").number_in(0.0, 89.0) * kDeg;
  if (r.has("distance_scale")) std::tie(e.min_distance_scale, e.max_distance_scale) = read_range(r.at("distance_scale"));
  if (r.has("brightness")) e.max_brightness = r.at("brightness").number_in(0.0, 1.0);
  if (r.has("contrast")) std::tie(e.min_contrast, e.max_contrast) = read_range(r.at("contrast"));
  if (r.has("blur_kernels")) {
    const JsonReader k = r.at("blur_kernels");
    e.blur_kernels.clear();
    for (std::size_t i = 0; i < k.size(); ++i) e.blur_kernels.push_back(k.at(i).integer_in(1, 15));
  }
  try {
    validate_eot(e);
  } catch (const std::exception& ex) {
    r.fail(ex.what());
  }
  return e;
}

template <class F>
auto checked(const JsonReader& r, F&& f) {
  try {
    return f();
  } catch (const SchemaError&) {
    throw;
  } catch (const std::exception& e) {
    r.fail(e.what());
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const Json& doc, const std::string& file) {
  const JsonReader root(doc, file);
  root.only_keys({"seed", "policy", "transfer_policy", "taao", "attack", "target", "evaluation"});
  RunConfig c;
  if (root.has("seed")) c.seed = root.at("seed").seed();
  if (root.has("policy")) c.policy = detail::read_policy(root.at("policy"), c.policy);
  if (root.has("transfer_policy")) c.transfer_policy = detail::read_policy(root.at("transfer_policy"), c.transfer_policy);

  if (root.has("taao")) {
    const JsonReader t = root.at("taao");
    t.only_keys({"tau", "feature_dim", "grid", "encoder_seed"});
    if (t.has("tau")) c.taao.tau = t.at("tau").number_in(1e-6, 1e6);
    if (t.has("feature_dim")) c.taao.feature_dim = t.at("feature_dim").integer_in(1, 1 << 16);
    if (t.has("grid")) c.taao.grid = t.at("grid").integer_in(1, 1024);
    if (t.has("encoder_seed")) c.taao.encoder_seed = t.at("encoder_seed").seed();
  }

  if (root.has("attack")) {
    const JsonReader a = root.at("attack");
    a.only_keys({"mode", "level", "epsilon", "lambda_mse", "step_size", "iterations", "views", "view_orbit_deg",
                 "weighting", "single_frame", "keep_best", "eot"});
    AttackConfig& ac = c.attack;
    if (a.has("mode")) ac.mode = detail::checked(a.at("mode"), [&] { return parse_attack_mode(a.at("mode").string()); });
    if (a.has("level")) ac.set_level(detail::checked(a.at("level"), [&] { return parse_level(a.at("level").string()); }));
    if (a.has("epsilon")) {
      if (ac.level != PerturbationLevel::custom) a.at("epsilon").fail("epsilon may only be set with level 'custom'");
      ac.epsilon = a.at("epsilon").number_in(0.0, 1.0);
      ac.step_size = ac.epsilon > 0.0 ? ac.epsilon / 10.0 : 1e-3;
    }
    if (a.has("lambda_mse")) ac.lambda_mse = a.at("lambda_mse").number_in(0.0, 1e6);
    if (a.has("step_size")) ac.step_size = a.at("step_size").number_in(1e-12, 1.0);
    if (a.has("iterations")) ac.iterations = a.at("iterations").integer_in(1, 1000000);
    if (a.has("views")) ac.views = a.at("views").integer_in(1, 64);
    if (a.has("view_orbit_deg")) ac.view_orbit = a.at("view_orbit_deg").number_in(0.0, 89.0) * detail::kDeg;
    if (a.has("weighting"))
      ac.weighting = detail::checked(a.at("weighting"), [&] { return parse_weighting(a.at("weighting").string()); });
    if (a.has("single_frame")) ac.single_frame = a.at("single_frame").integer_in(-1, 1 << 20);
    if (a.has("keep_best")) ac.keep_best = a.at("keep_best").boolean();
    if (a.has("eot")) ac.eot = detail::read_eot(a.at("eot"));
    detail::checked(a, [&] {
      validate_attack_config(ac);
      return 0;
    });
  }
  c.attack.tau = c.taao.tau;

  if (root.has("target")) {
    const JsonReader t = root.at("target");
    t.only_keys({"alt_point", "gripper_open"});
    if (t.has("alt_point")) c.target.alt_point = t.at("alt_point").vec3();
    if (t.has("gripper_open")) c.target.gripper_open = t.at("gripper_open").number_in(-1.0, 1.0);
  }

  if (root.has("evaluation")) {
    const JsonReader e = root.at("evaluation");
    e.only_keys({"trials", "threshold", "threshold_factor", "gaussian_sigma_factor", "perturbation", "defense"});
    EvaluationSettings& ev = c.evaluation;
    if (e.has("trials")) ev.trials = e.at("trials").integer_in(1, 1000000);
    if (e.has("threshold") && e.has("threshold_factor")) e.fail("give either threshold or threshold_factor");
    if (e.has("threshold")) ev.threshold = e.at("threshold").number_in(0.0, 1e6);
    if (e.has("threshold_factor")) ev.threshold_factor = e.at("threshold_factor").number_in(0.0, 1e6);
    if (e.has("gaussian_sigma_factor")) ev.gaussian_sigma_factor = e.at("gaussian_sigma_factor").number_in(0.0, 1e3);
    if (e.has("perturbation")) ev.perturbation = detail::read_eot(e.at("perturbation"));
    if (e.has("defense"))
      ev.defense = detail::checked(e.at("defense"), [&] { return parse_defense(e.at("defense").string()); });
  }
  return c;
}

inline RunConfig load_run_config(const std::string& file) {
  std::string raw;
  const Json doc = parse_json_file(file, &raw);
  RunConfig c = parse_run_config(doc, file);
  c.raw = std::move(raw);
  return c;
}

namespace detail {

inline Json policy_json(const PolicySpec& p) {
  return {{"seed", p.seed},
          {"patch", p.patch},
          {"hidden", {p.hidden[0], p.hidden[1]}},
          {"embed_dim", p.embed_dim},
          {"instruction_count", p.instruction_count},
          {"weight_gain", p.weight_gain},
          {"activation", p.activation == Activation::tanh ? "tanh" : "identity"}};
}

inline Json eot_json(const EotConfig& e) {
  return {{"enabled", e.enabled},
          {"rotation_deg", e.max_rotation / kDeg},
          {"translation", e.max_translation},
          {"orbit_deg", e.max_orbit / kDeg},
          {"distance_scale", {e.min_distance_scale, e.max_distance_scale}},
          {"brightness", e.max_brightness},
          {"contrast", {e.min_contrast, e.max_contrast}},
          {"blur_kernels", e.blur_kernels}};
}

}  // namespace detail

/// Fully resolved configuration, including defaults and CLI overrides.
inline Json config_json(const RunConfig& c) {
  const AttackConfig& a = c.attack;
  Json attack = {{"mode", to_string(a.mode)},
                 {"level", to_string(a.level)},
                 {"epsilon", a.epsilon},
                 {"lambda_mse", a.lambda_mse},
                 {"step_size", a.step_size},
                 {"iterations", a.iterations},
                 {"views", a.views},
                 {"view_orbit_deg", a.view_orbit / detail::kDeg},
                 {"weighting", to_string(a.weighting)},
                 {"single_frame", a.single_frame},
                 {"keep_best", a.keep_best},
                 {"eot", detail::eot_json(a.eot)}};
  Json evaluation = {{"trials", c.evaluation.trials},
                     {"threshold_factor", c.evaluation.threshold_factor},
                     {"gaussian_sigma_factor", c.evaluation.gaussian_sigma_factor},
                     {"perturbation", detail::eot_json(c.evaluation.perturbation)},
                     {"defense", defense_string(c.evaluation.defense)}};
  if (c.evaluation.threshold) evaluation["threshold"] = *c.evaluation.threshold;
  return {{"seed", c.seed},
          {"policy", detail::policy_json(c.policy)},
          {"transfer_policy", detail::policy_json(c.transfer_policy)},
          {"taao",
           {{"tau", c.taao.tau},
            {"feature_dim", c.taao.feature_dim},
            {"grid", c.taao.grid},
            {"encoder_seed", c.taao.encoder_seed}}},
          {"attack", attack},
          {"target",
           {{"alt_point", {c.target.alt_point.x(), c.target.alt_point.y(), c.target.alt_point.z()}},
            {"gripper_open", c.target.gripper_open}}},
          {"evaluation", evaluation}};
}

}  // namespace advtex
