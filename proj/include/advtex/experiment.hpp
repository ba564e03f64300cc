#pragma once

// Experiment orchestration: clean rollouts, attack runs, seeded evaluation
// trials, sweeps and run reports.
//
// Evaluation protocol. Trial k draws, for every frame t, one mild
// perturbation (stream "evaluation", index k) from the configured
// perturbation ranges. Every condition in the trial (attacked texture,
// clean texture, Gaussian control, ...) is rendered under the same draw,
// optionally passed through a defense, and fed to the policy. The
// deviation of frame t is |pi(O) - a*_t|_2 where a*_t is the policy's
// action on the unperturbed clean frame; a trial's deviation is the mean
// over frames, and the trial fails when it exceeds the threshold.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "advtex/attack.hpp"
#include "advtex/config.hpp"
#include "advtex/defenses.hpp"
#include "advtex/eot.hpp"
#include "advtex/io.hpp"
#include "advtex/metrics.hpp"
#include "advtex/scenario.hpp"
#include "advtex/taao.hpp"

namespace advtex {

namespace fs = std::filesystem;

/// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads. Results
/// must be written to per-index slots; the first exception is rethrown.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string content_hash(const std::string& bytes) { return hex64(fnv1a64(bytes)); }

/// Rounds to single precision (the VCOL storage format) without leaving the
/// budget around `clean` or the unit interval.
inline VertexColors to_storage_precision(const VertexColors& c, const VertexColors& clean, double epsilon) {
  VertexColors out = c;
  for (std::size_t i = 0; i < out.rgb.size(); ++i) {
    float f = static_cast<float>(c.rgb[i]);
    const float toward = static_cast<float>(clean.rgb[i]);
    while (std::abs(static_cast<double>(f) - clean.rgb[i]) > epsilon || f < 0.0f || f > 1.0f)
      f = std::nextafter(f, toward);
    out.rgb[i] = f;
  }
  return out;
}

struct Experiment {
  Scenario scenario;
  RunConfig config;
  std::vector<SceneFrame> frames;
  std::shared_ptr<const Policy> policy;
  std::shared_ptr<const Policy> transfer_policy;
  std::shared_ptr<const LatentEncoder> encoder;

  std::size_t frame_count() const { return frames.size(); }
  const VertexColors& clean_colors() const { return frames.front().target->clean_colors; }
};

inline Experiment make_experiment(Scenario scenario, RunConfig config) {
  Experiment e;
  config.attack.seed = config.seed;
  config.attack.tau = config.taao.tau;
  for (PolicySpec* p : {&config.policy, &config.transfer_policy}) {
    p->height = scenario.image.height;
    p->width = scenario.image.width;
  }
  if (scenario.instruction.id >= config.policy.instruction_count ||
      scenario.instruction.id >= config.transfer_policy.instruction_count)
    throw std::invalid_argument("instruction id " + std::to_string(scenario.instruction.id) +
                                " exceeds the policy's instruction table");
  e.frames = build_frames(scenario);
  e.policy = build_policy(config.policy);
  e.transfer_policy = build_policy(config.transfer_policy);
  e.encoder = std::make_shared<const LatentEncoder>(config.taao.feature_dim, config.taao.grid, config.taao.encoder_seed);
  e.scenario = std::move(scenario);
  e.config = std::move(config);
  return e;
}

inline Experiment load_experiment(const fs::path& scenario_file, const fs::path& config_file) {
  return make_experiment(load_scenario(scenario_file), load_run_config(config_file.string()));
}

// ---------------------------------------------------------------------------
// Clean rollout

struct Rollout {
  std::vector<Observation> observations;  // reference renders
  std::vector<ActionVector> actions;      // a*_t
  TrajectoryWeighting weighting;
};

inline Rollout clean_rollout(const Experiment& e, const Policy& policy) {
  Rollout r;
  for (const auto& f : e.frames) {
    r.observations.push_back(render_scene(f).image);
    r.actions.push_back(policy.forward(r.observations.back(), e.scenario.instruction));
  }
  r.weighting = weigh_trajectory(r.observations, *e.encoder, e.config.taao.tau);
  return r;
}

inline void write_actions_csv(const fs::path& path, const std::vector<ActionVector>& actions) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(17);
  os << "step,a0,a1,a2,a3,a4,a5,a6\n";
  for (std::size_t t = 0; t < actions.size(); ++t) {
    os << t;
    for (double v : actions[t]) os << ',' << v;
    os << '\n';
  }
}

inline std::vector<ActionVector> read_actions_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  std::vector<ActionVector> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    ActionVector a{};
    for (int k = 0; k < kActionDim; ++k) {
      if (!std::getline(ls, cell, ',')) throw std::runtime_error(path.string() + ": short row");
      a[k] = std::stod(cell);
    }
    out.push_back(a);
  }
  return out;
}

inline void write_json(const fs::path& path, const Json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

/// rollout.json, observations/frame_XXX.ppm (+ .texf), reference_actions.csv,
/// taao_weights.csv.
inline void write_rollout(const Experiment& e, const Rollout& r, const fs::path& dir) {
  fs::create_directories(dir / "observations");
  for (std::size_t t = 0; t < r.observations.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.ppm", t);
    save_texture(r.observations[t], dir / "observations" / name);
  }
  write_actions_csv(dir / "reference_actions.csv", r.actions);
  write_weights_csv(dir / "taao_weights.csv", r.weighting);
  write_json(dir / "rollout.json", {{"scenario", e.scenario.name},
                                    {"scenario_hash", content_hash(e.scenario.raw)},
                                    {"config_hash", content_hash(e.config.raw)},
                                    {"frames", r.observations.size()},
                                    {"policy_seed", e.config.policy.seed},
                                    {"instruction", e.scenario.instruction.id},
                                    {"reference_actions", "reference_actions.csv"},
                                    {"weights", "taao_weights.csv"}});
}

/// Frame weights for the configured scheme.
inline FrameWeights attack_weights(const Experiment& e, const Rollout& r) {
  const AttackConfig& a = e.config.attack;
  const std::size_t n = e.frame_count();
  switch (a.weighting) {
    case WeightingScheme::taao: return r.weighting.weights;
    case WeightingScheme::uniform: return uniform_weights(n);
    case WeightingScheme::single_frame: {
      if (a.single_frame >= 0) return single_frame_weights(n, static_cast<std::size_t>(a.single_frame));
      const auto& w = r.weighting.weights.w;
      return single_frame_weights(n, static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin()));
    }
    case WeightingScheme::random: {
      Rng rng(e.config.seed, "random-weights");
      return random_weights(n, rng);
    }
  }
  return uniform_weights(n);
}

// ---------------------------------------------------------------------------
// Evaluation

/// Geometric offsets applied to every frame before the trial perturbation.
struct SweepOffset {
  double camera_yaw = 0.0;    // radians, orbit about the look-at point
  double object_yaw = 0.0;    // radians
  double object_shift = 0.0;  // scene units along x

  bool is_zero() const { return camera_yaw == 0.0 && object_yaw == 0.0 && object_shift == 0.0; }
};

inline SceneFrame apply_offset(SceneFrame f, const SweepOffset& o) {
  if (o.is_zero()) return f;
  f = apply_pose_perturbation(std::move(f), o.object_yaw, o.object_shift, 0.0);
  f.camera = orbit_camera(f.camera, o.camera_yaw, 0.0);
  return f;
}

/// Colors for one condition; may depend on the trial index.
struct Condition {
  std::string name;
  std::function<VertexColors(std::size_t trial)> colors;
};

struct ConditionResult {
  std::string name;
  std::vector<std::vector<double>> frame_deviation;  // [trial][t]
  std::vector<double> trial_deviation;               // mean over t
  double mean_deviation = 0.0;
  double failure_rate = 0.0;
};

struct EvaluationRequest {
  const Policy* policy = nullptr;
  const std::vector<ActionVector>* reference = nullptr;
  int trials = 50;
  double threshold = 0.0;
  EotConfig perturbation;
  DefenseSpec defense;
  SweepOffset offset;
  std::uint64_t seed = 0;
};

inline std::vector<ConditionResult> evaluate_conditions(const Experiment& e, const EvaluationRequest& req,
                                                        const std::vector<Condition>& conditions) {
  if (!req.policy || !req.reference) throw std::invalid_argument("evaluate: missing policy or reference actions");
  if (req.reference->size() != e.frame_count()) throw std::invalid_argument("evaluate: one reference action per frame");
  if (req.trials < 1) throw std::invalid_argument("evaluate: need at least one trial");
  validate_eot(req.perturbation);
  validate_defense(req.defense);
  const std::size_t T = e.frame_count();
  const std::size_t K = static_cast<std::size_t>(req.trials);
  std::vector<ConditionResult> out(conditions.size());
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    out[c].name = conditions[c].name;
    out[c].frame_deviation.assign(K, std::vector<double>(T, 0.0));
    out[c].trial_deviation.assign(K, 0.0);
  }
  const VertexColorBaker& baker = *e.frames.front().target->baker;

  parallel_for(K, [&](std::size_t k) {
    std::vector<TextureMap> textures;
    for (const auto& cond : conditions) textures.push_back(baker.bake(cond.colors(k)));
    Rng rng(req.seed, "evaluation", k);
    for (std::size_t t = 0; t < T; ++t) {
      const EotSample s = req.perturbation.enabled ? draw_eot(req.perturbation, rng) : EotSample{};
      const PreparedFrame prepared(apply_eot_3d(apply_offset(e.frames[t], req.offset), s));
      const ImageTransform g = image_transform_of(s);
      DefenseSpec defense = req.defense;
      defense.seed = derive_seed(req.seed, "noise-defense", k * T + t);
      for (std::size_t c = 0; c < conditions.size(); ++c) {
        const Observation obs = apply_defense(g.apply(prepared.observe(textures[c]).first), defense);
        const ActionVector a = req.policy->forward(obs, e.scenario.instruction);
        out[c].frame_deviation[k][t] = action_l2(a, (*req.reference)[t]);
      }
    }
  });

  for (auto& r : out) {
    for (std::size_t k = 0; k < K; ++k) r.trial_deviation[k] = mean(r.frame_deviation[k]);
    r.mean_deviation = mean(r.trial_deviation);
    r.failure_rate = failure_rate(r.trial_deviation, req.threshold);
  }
  return out;
}

inline double resolve_threshold(const EvaluationSettings& s, const std::vector<ActionVector>& clean_actions) {
  return s.threshold ? *s.threshold : s.threshold_factor * action_rms(clean_actions);
}

/// Clean colors plus clipped Gaussian noise of standard deviation
/// sigma_factor * epsilon, limited to the same l_inf budget and [0, 1].
inline VertexColors gaussian_control_colors(const VertexColors& clean, double epsilon, double sigma_factor,
                                            std::uint64_t seed, std::size_t trial) {
  Rng rng(seed, "gaussian-control", trial);
  VertexColors c = clean;
  const double sigma = sigma_factor * epsilon;
  for (std::size_t i = 0; i < c.rgb.size(); ++i)
    c.rgb[i] = std::clamp(clean.rgb[i] + std::clamp(sigma * rng.normal(), -epsilon, epsilon), 0.0, 1.0);
  return c;
}

inline EvaluationRequest default_request(const Experiment& e, const Policy& policy,
                                         const std::vector<ActionVector>& reference) {
  EvaluationRequest req;
  req.policy = &policy;
  req.reference = &reference;
  req.trials = e.config.evaluation.trials;
  req.threshold = resolve_threshold(e.config.evaluation, reference);
  req.perturbation = e.config.evaluation.perturbation;
  req.defense = e.config.evaluation.defense;
  req.seed = e.config.seed;
  return req;
}

// ---------------------------------------------------------------------------
// Attack runs

/// Policy actions on the unperturbed frames for the given colors.
inline std::vector<ActionVector> canonical_actions(const Experiment& e, const Policy& policy,
                                                   const VertexColors& colors, std::vector<Observation>* obs_out = nullptr) {
  const TextureMap texture = e.frames.front().target->baker->bake(colors);
  std::vector<ActionVector> actions;
  for (const auto& f : e.frames) {
    const Observation obs = PreparedFrame(f).observe(texture).first;
    actions.push_back(policy.forward(obs, e.scenario.instruction));
    if (obs_out) obs_out->push_back(obs);
  }
  return actions;
}

struct AttackRun {
  Rollout rollout;
  Rollout transfer_rollout;
  TargetTrajectory target_actions;
  OptimizationResult optimization;
  VertexColors colors;  // stored precision
  double threshold = 0.0;
  double transfer_threshold = 0.0;
  std::vector<ConditionResult> conditions;           // attack, clean, gaussian
  std::vector<ConditionResult> transfer_conditions;  // attack, clean on the transfer policy
  std::vector<ActionVector> attacked_actions;        // canonical frames
  double l1_attacked = 0.0;
  double l1_clean = 0.0;
  std::vector<double> ssim_fidelity;     // clean composite vs reference render
  std::vector<double> ssim_adversarial;  // attacked composite vs reference render
  std::vector<double> fidelity_max_diff;
  double wall_ms_optimize = 0.0;
  double wall_ms_evaluate = 0.0;
};

inline AttackRun run_attack(const Experiment& e, const IterateObserver& observer = {}) {
  using clock = std::chrono::steady_clock;
  AttackRun run;
  const AttackConfig& cfg = e.config.attack;
  run.rollout = clean_rollout(e, *e.policy);
  run.target_actions = make_target_trajectory(run.rollout.actions, e.config.target.alt_point, e.config.target.gripper_open);

  const auto t0 = clock::now();
  AttackProblem problem = make_attack_problem(e.policy, e.scenario.instruction, e.frames, attack_weights(e, run.rollout),
                                              cfg.views, cfg.view_orbit, e.config.seed);
  problem.target_actions = run.target_actions;
  run.optimization = optimize(problem, cfg, observer);
  run.colors = to_storage_precision(run.optimization.colors, e.clean_colors(), cfg.epsilon);
  const auto t1 = clock::now();

  const VertexColors clean = e.clean_colors();
  const VertexColors adv = run.colors;
  const double eps = cfg.epsilon;
  const double sigma_factor = e.config.evaluation.gaussian_sigma_factor;
  const std::uint64_t seed = e.config.seed;
  const std::vector<Condition> conditions{
      {"attack", [&](std::size_t) { return adv; }},
      {"clean", [&](std::size_t) { return clean; }},
      {"gaussian", [&](std::size_t k) { return gaussian_control_colors(clean, eps, sigma_factor, seed, k); }}};
  const EvaluationRequest req = default_request(e, *e.policy, run.rollout.actions);
  run.threshold = req.threshold;
  run.conditions = evaluate_conditions(e, req, conditions);

  run.transfer_rollout = clean_rollout(e, *e.transfer_policy);
  const EvaluationRequest treq = default_request(e, *e.transfer_policy, run.transfer_rollout.actions);
  run.transfer_threshold = treq.threshold;
  run.transfer_conditions = evaluate_conditions(e, treq, {conditions[0], conditions[1]});

  std::vector<Observation> adv_obs, clean_obs;
  run.attacked_actions = canonical_actions(e, *e.policy, adv, &adv_obs);
  canonical_actions(e, *e.policy, clean, &clean_obs);
  run.l1_attacked = compute_action_l1(run.attacked_actions, run.target_actions);
  run.l1_clean = compute_action_l1(run.rollout.actions, run.target_actions);
  for (std::size_t t = 0; t < e.frame_count(); ++t) {
    run.ssim_fidelity.push_back(compute_ssim(clean_obs[t], run.rollout.observations[t]));
    run.ssim_adversarial.push_back(compute_ssim(adv_obs[t], run.rollout.observations[t]));
    run.fidelity_max_diff.push_back(max_abs_diff(clean_obs[t], run.rollout.observations[t]));
  }
  const auto t2 = clock::now();
  run.wall_ms_optimize = std::chrono::duration<double, std::milli>(t1 - t0).count();
  run.wall_ms_evaluate = std::chrono::duration<double, std::milli>(t2 - t1).count();
  return run;
}

inline Json condition_json(const ConditionResult& c) {
  return {{"mean_deviation", c.mean_deviation}, {"failure_rate", c.failure_rate}};
}

inline const ConditionResult& find_condition(const std::vector<ConditionResult>& v, const std::string& name) {
  for (const auto& c : v)
    if (c.name == name) return c;
  throw std::invalid_argument("no condition named " + name);
}

inline Json attack_report(const Experiment& e, const AttackRun& run) {
  const AttackConfig& cfg = e.config.attack;
  const auto& sel = run.optimization.log[static_cast<std::size_t>(run.optimization.selected_iteration)];
  Json conditions = Json::object();
  for (const auto& c : run.conditions) conditions[c.name] = condition_json(c);
  Json transfer = Json::object();
  for (const auto& c : run.transfer_conditions) transfer[c.name] = condition_json(c);
  const std::uint64_t s = e.config.seed;
  return {
      {"format", "advtex-report/1"},
      {"label", "desk-scale analogue on a scripted tabletop fixture"},
      {"scenario", {{"name", e.scenario.name}, {"hash", content_hash(e.scenario.raw)}}},
      {"config_hash", content_hash(e.config.raw)},
      {"config", config_json(e.config)},
      {"seeds",
       {{"root", s},
        {"views", derive_seed(s, "views")},
        {"eot", derive_seed(s, "eot")},
        {"evaluation", derive_seed(s, "evaluation")},
        {"gaussian_control", derive_seed(s, "gaussian-control")},
        {"noise_defense", derive_seed(s, "noise-defense")}}},
      {"frames", e.frame_count()},
      {"vertices", e.clean_colors().vertex_count()},
      {"optimization",
       {{"iterations", cfg.iterations},
        {"selected_iteration", run.optimization.selected_iteration},
        {"selected_objective", sel.loss},
        {"selected_mean_deviation", sel.mean_deviation},
        {"linf_distance", linf_distance(run.colors, e.clean_colors())},
        {"epsilon", cfg.epsilon}}},
      {"evaluation",
       {{"trials", e.config.evaluation.trials},
        {"threshold", run.threshold},
        {"defense", defense_string(e.config.evaluation.defense)},
        {"conditions", conditions}}},
      {"transfer", {{"policy_seed", e.config.transfer_policy.seed}, {"threshold", run.transfer_threshold}, {"conditions", transfer}}},
      {"targeted", {{"l1_to_target_attacked", run.l1_attacked}, {"l1_to_target_clean", run.l1_clean}}},
      {"ssim", {{"fidelity", run.ssim_fidelity}, {"adversarial", run.ssim_adversarial}}},
      {"fidelity_max_abs_diff", run.fidelity_max_diff},
      {"artifacts",
       {{"weights", "rollout/taao_weights.csv"},
        {"reference_actions", "rollout/reference_actions.csv"},
        {"colors", "colors.vcol"},
        {"texture", "texture.ppm"},
        {"metrics", "metrics.csv"},
        {"trials", "trials.csv"},
        {"trial_frames", "trial_frames.csv"},
        {"actions", "actions.csv"},
        {"timing", "timing.json"}}}};
}

inline void write_trials(const fs::path& dir, const std::vector<std::pair<std::string, const std::vector<ConditionResult>*>>& groups,
                         const std::vector<double>& thresholds) {
  std::ofstream trials(dir / "trials.csv"), frames(dir / "trial_frames.csv");
  if (!trials || !frames) throw std::runtime_error("cannot write trial tables in " + dir.string());
  trials.precision(17);
  frames.precision(17);
  trials << "policy,condition,trial,mean_deviation,failed\n";
  frames << "policy,condition,trial,step,deviation\n";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& [policy, results] = groups[g];
    for (const auto& c : *results)
      for (std::size_t k = 0; k < c.trial_deviation.size(); ++k) {
        trials << policy << ',' << c.name << ',' << k << ',' << c.trial_deviation[k] << ','
               << (c.trial_deviation[k] > thresholds[g] ? 1 : 0) << '\n';
        for (std::size_t t = 0; t < c.frame_deviation[k].size(); ++t)
          frames << policy << ',' << c.name << ',' << k << ',' << t << ',' << c.frame_deviation[k][t] << '\n';
      }
  }
}

/// Writes every artifact of an attack run into `dir`.
inline Json write_attack_run(const Experiment& e, const AttackRun& run, const fs::path& dir) {
  fs::create_directories(dir);
  write_rollout(e, run.rollout, dir / "rollout");
  save_vertex_colors(run.colors, dir / "colors.vcol");
  save_texture(e.frames.front().target->baker->bake(run.colors), dir / "texture.ppm");

  {
    std::ofstream os(dir / "metrics.csv");
    os.precision(17);
    os << "iteration,loss,mean_deviation,linf_budget_used,wall_ms\n";
    for (const auto& m : run.optimization.log)
      os << m.iteration << ',' << m.loss << ',' << m.mean_deviation << ',' << m.linf_budget_used << ',' << m.wall_ms
         << '\n';
  }
  write_trials(dir, {{"attacked", &run.conditions}, {"transfer", &run.transfer_conditions}},
               {run.threshold, run.transfer_threshold});
  {
    std::ofstream os(dir / "actions.csv");
    os.precision(17);
    os << "step,kind,a0,a1,a2,a3,a4,a5,a6\n";
    const std::vector<std::pair<const char*, const std::vector<ActionVector>*>> rows{
        {"clean", &run.rollout.actions}, {"attacked", &run.attacked_actions}, {"target", &run.target_actions}};
    for (const auto& [kind, acts] : rows)
      for (std::size_t t = 0; t < acts->size(); ++t) {
        os << t << ',' << kind;
        for (double v : (*acts)[t]) os << ',' << v;
        os << '\n';
      }
  }
  const Json report = attack_report(e, run);
  write_json(dir / "report.json", report);
  write_json(dir / "timing.json", {{"optimize_ms", run.wall_ms_optimize},
                                   {"evaluate_ms", run.wall_ms_evaluate},
                                   {"total_ms", run.wall_ms_optimize + run.wall_ms_evaluate}});
  return report;
}

// ---------------------------------------------------------------------------
// Report verification

struct VerificationResult {
  std::vector<std::string> errors;
  int checks = 0;
  bool ok() const { return errors.empty(); }
};

/// Recomputes every rate and mean in report.json from the raw CSV tables.
inline VerificationResult verify_report(const fs::path& dir, double tol = 1e-12) {
  VerificationResult v;
  const Json report = parse_json_file((dir / "report.json").string());
  auto check = [&](bool ok, const std::string& what) {
    ++v.checks;
    if (!ok) v.errors.push_back(what);
  };
  auto close = [&](double a, double b) { return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)}); };

  struct Row {
    std::vector<double> frame;
    double mean = 0.0;
    int failed = 0;
  };
  std::map<std::pair<std::string, std::string>, std::map<long, Row>> table;
  {
    std::ifstream is(dir / "trial_frames.csv");
    if (!is) throw std::runtime_error("missing trial_frames.csv in " + dir.string());
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string policy, cond, trial, step, dev;
      std::getline(ls, policy, ',');
      std::getline(ls, cond, ',');
      std::getline(ls, trial, ',');
      std::getline(ls, step, ',');
      std::getline(ls, dev, ',');
      auto& row = table[{policy, cond}][std::stol(trial)];
      if (static_cast<std::size_t>(std::stol(step)) != row.frame.size())
        v.errors.push_back("trial_frames.csv: steps out of order in " + line);
      row.frame.push_back(std::stod(dev));
    }
  }
  {
    std::ifstream is(dir / "trials.csv");
    if (!is) throw std::runtime_error("missing trials.csv in " + dir.string());
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string policy, cond, trial, m, failed;
      std::getline(ls, policy, ',');
      std::getline(ls, cond, ',');
      std::getline(ls, trial, ',');
      std::getline(ls, m, ',');
      std::getline(ls, failed, ',');
      auto& row = table[{policy, cond}][std::stol(trial)];
      row.mean = std::stod(m);
      row.failed = std::stoi(failed);
      check(close(mean(row.frame), row.mean), "trial mean differs from its frame deviations: " + line);
    }
  }

  const auto verify_group = [&](const std::string& policy, const Json& group) {
    const double threshold = group.at("threshold").get<double>();
    for (const auto& [name, stats] : group.at("conditions").items()) {
      const auto it = table.find({policy, name});
      check(it != table.end(), "no raw trials for " + policy + "/" + name);
      if (it == table.end()) continue;
      std::vector<double> means;
      int failed = 0;
      for (const auto& [k, row] : it->second) {
        means.push_back(row.mean);
        check((row.mean > threshold) == (row.failed == 1), policy + "/" + name + ": failure flag of trial " +
                                                                std::to_string(k) + " disagrees with threshold");
        failed += row.mean > threshold;
      }
      check(static_cast<long>(means.size()) == report.at("evaluation").at("trials").get<long>(),
            policy + "/" + name + ": trial count mismatch");
      check(close(mean(means), stats.at("mean_deviation").get<double>()), policy + "/" + name + ": mean deviation");
      check(close(static_cast<double>(failed) / static_cast<double>(means.size()), stats.at("failure_rate").get<double>()),
            policy + "/" + name + ": failure rate");
    }
  };
  verify_group("attacked", report.at("evaluation"));
  verify_group("transfer", report.at("transfer"));

  // Targeted L1 from the logged canonical actions.
  std::map<std::string, std::vector<ActionVector>> actions;
  {
    std::ifstream is(dir / "actions.csv");
    if (!is) throw std::runtime_error("missing actions.csv in " + dir.string());
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string step, kind, cell;
      std::getline(ls, step, ',');
      std::getline(ls, kind, ',');
      ActionVector a{};
      for (int k = 0; k < kActionDim; ++k) {
        std::getline(ls, cell, ',');
        a[k] = std::stod(cell);
      }
      actions[kind].push_back(a);
    }
  }
  const Json& tg = report.at("targeted");
  check(close(compute_action_l1(actions["attacked"], actions["target"]), tg.at("l1_to_target_attacked").get<double>()),
        "targeted: attacked L1");
  check(close(compute_action_l1(actions["clean"], actions["target"]), tg.at("l1_to_target_clean").get<double>()),
        "targeted: clean L1");

  // Selected optimization entry.
  {
    std::ifstream is(dir / "metrics.csv");
    std::string line;
    std::getline(is, line);
    const long selected = report.at("optimization").at("selected_iteration").get<long>();
    bool found = false;
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string it, loss, dev;
      std::getline(ls, it, ',');
      std::getline(ls, loss, ',');
      std::getline(ls, dev, ',');
      if (std::stol(it) != selected) continue;
      found = true;
      check(close(std::stod(loss), report.at("optimization").at("selected_objective").get<double>()),
            "optimization: selected objective");
      check(close(std::stod(dev), report.at("optimization").at("selected_mean_deviation").get<double>()),
            "optimization: selected mean deviation");
    }
    check(found, "optimization: selected iteration missing from metrics.csv");
  }

  // Budget of the stored colors.
  {
    const VertexColors colors = load_vertex_colors(dir / "colors.vcol");
    const double eps = report.at("optimization").at("epsilon").get<double>();
    const double linf = report.at("optimization").at("linf_distance").get<double>();
    check(linf <= eps, "optimization: stored colors exceed the budget");
    for (double c : colors.rgb) check(c >= 0.0 && c <= 1.0, "colors.vcol: value outside [0, 1]");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { none, camera, rotation, position };

struct SweepSpec {
  SweepAxis axis = SweepAxis::none;
  std::vector<double> values{0.0};  // degrees for camera/rotation, scene units for position
};

inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::none: return "none";
    case SweepAxis::camera: return "camera";
    case SweepAxis::rotation: return "rotation";
    case SweepAxis::position: return "position";
  }
  return "?";
}

/// "camera:0,5,10", "rotation:-20,0,20", "position:0,0.05".
inline SweepSpec parse_sweep(const std::string& s) {
  SweepSpec spec;
  const auto colon = s.find(':');
  const std::string axis = s.substr(0, colon);
  if (axis == "camera") spec.axis = SweepAxis::camera;
  else if (axis == "rotation") spec.axis = SweepAxis::rotation;
  else if (axis == "position") spec.axis = SweepAxis::position;
  else if (axis == "none") return spec;
  else throw std::invalid_argument("bad sweep '" + s + "' (expected camera:, rotation: or position: with values)");
  if (colon == std::string::npos) throw std::invalid_argument("sweep '" + s + "' lists no values");
  spec.values.clear();
  std::istringstream ls(s.substr(colon + 1));
  std::string cell;
  while (std::getline(ls, cell, ',')) {
    try {
      std::size_t used = 0;
      spec.values.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument("");
    } catch (const std::logic_error&) {
      throw std::invalid_argument("sweep '" + s + "': bad value '" + cell + "'");
    }
  }
  if (spec.values.empty()) throw std::invalid_argument("sweep '" + s + "' lists no values");
  return spec;
}

inline SweepOffset sweep_offset(SweepAxis axis, double value) {
  SweepOffset o;
  const double k = std::numbers::pi / 180.0;
  switch (axis) {
    case SweepAxis::none: break;
    case SweepAxis::camera: o.camera_yaw = value * k; break;
    case SweepAxis::rotation: o.object_yaw = value * k; break;
    case SweepAxis::position: o.object_shift = value; break;
  }
  return o;
}

struct SweepRow {
  std::string axis;
  double value = 0.0;
  std::string policy;
  std::string defense;
  int trials = 0;
  double threshold = 0.0;
  ConditionResult attack;
  ConditionResult clean;
};

/// Evaluates `colors` at every sweep point against the chosen policy's own
/// clean reference actions.
inline std::vector<SweepRow> evaluate_sweep(const Experiment& e, const VertexColors& colors, const SweepSpec& sweep,
                                            const DefenseSpec& defense, bool transfer) {
  validate_colors(*e.frames.front().target->mesh, colors);
  const Policy& policy = transfer ? *e.transfer_policy : *e.policy;
  const Rollout rollout = clean_rollout(e, policy);
  EvaluationRequest req = default_request(e, policy, rollout.actions);
  req.defense = defense;
  const VertexColors clean = e.clean_colors();
  const std::vector<Condition> conditions{{"attack", [&](std::size_t) { return colors; }},
                                          {"clean", [&](std::size_t) { return clean; }}};
  std::vector<SweepRow> rows(sweep.values.size());
  for (std::size_t i = 0; i < sweep.values.size(); ++i) {
    EvaluationRequest r = req;
    r.offset = sweep_offset(sweep.axis, sweep.values[i]);
    auto res = evaluate_conditions(e, r, conditions);
    rows[i] = {to_string(sweep.axis), sweep.values[i], transfer ? "transfer" : "attacked", defense_string(defense),
               req.trials, req.threshold, std::move(res[0]), std::move(res[1])};
  }
  return rows;
}

inline void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(17);
  os << "axis,value,policy,defense,trials,threshold,attack_mean_deviation,attack_failure_rate,"
        "clean_mean_deviation,clean_failure_rate\n";
  for (const auto& r : rows)
    os << r.axis << ',' << r.value << ',' << r.policy << ',' << r.defense << ',' << r.trials << ',' << r.threshold
       << ',' << r.attack.mean_deviation << ',' << r.attack.failure_rate << ',' << r.clean.mean_deviation << ','
       << r.clean.failure_rate << '\n';
}

}  // namespace advtex
