#pragma once

// Adversarial vertex-color optimization.
//
// Objective over a trajectory of T frames, each seen from M views:
//
//   L(c) = sum_t w_t * (1/M) * sum_m || pi(O_tm(c), l) - r_tm ||_2
//
// with r_tm the clean reference action a*_tm (untargeted, maximized) or the
// target action a_tgt_t (targeted, minimized). O_tm is the composited
// observation, optionally passed through a freshly drawn EoT transformation.
// The L0 level adds lambda * ||c - c_clean||^2 as a naturalness penalty.
//
// The optimizer is projected sign-gradient ascent/descent with a constant
// step, projecting after each step onto the l_inf ball of radius epsilon
// around the clean colors intersected with [0, 1].

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "advtex/eot.hpp"
#include "advtex/fbd.hpp"
#include "advtex/policy.hpp"
#include "advtex/rng.hpp"
#include "advtex/taao.hpp"

namespace advtex {

enum class AttackMode { untargeted, targeted };
enum class PerturbationLevel { L0, L1, L2, L3, custom };
enum class WeightingScheme { taao, uniform, single_frame, random };

inline double level_epsilon(PerturbationLevel level) {
  switch (level) {
    case PerturbationLevel::L1: return 16.0 / 255.0;
    case PerturbationLevel::L2: return 32.0 / 255.0;
    case PerturbationLevel::L0:
    case PerturbationLevel::L3: return 64.0 / 255.0;
    case PerturbationLevel::custom: break;
  }
  throw std::invalid_argument("level_epsilon: custom level has no fixed budget");
}

inline constexpr double kDefaultNaturalnessWeight = 0.02;

struct AttackConfig {
  AttackMode mode = AttackMode::untargeted;
  PerturbationLevel level = PerturbationLevel::L3;
  double epsilon = 64.0 / 255.0;
  double lambda_mse = 0.0;
  double step_size = 6.4 / 255.0;
  int iterations = 200;
  int views = 1;
  double view_orbit = 0.0;  // radians, bound for views 1..M-1
  double tau = kDefaultTemperature;
  WeightingScheme weighting = WeightingScheme::taao;
  int single_frame = -1;  // -1: frame with the largest trajectory weight
  EotConfig eot;
  std::uint64_t seed = 0;
  bool keep_best = true;  // return the best logged iterate instead of the last

  /// Budget, step (epsilon / 10) and naturalness weight for a level.
  static AttackConfig for_level(PerturbationLevel level, AttackMode mode = AttackMode::untargeted) {
    AttackConfig c;
    c.mode = mode;
    c.set_level(level);
    return c;
  }

  void set_level(PerturbationLevel l) {
    level = l;
    if (l == PerturbationLevel::custom) return;
    epsilon = level_epsilon(l);
    step_size = epsilon / 10.0;
    lambda_mse = l == PerturbationLevel::L0 ? kDefaultNaturalnessWeight : 0.0;
  }
};

inline void validate_attack_config(const AttackConfig& c) {
  if (c.level != PerturbationLevel::custom) {
    if (std::abs(c.epsilon - level_epsilon(c.level)) > 1e-12)
      throw std::invalid_argument("attack: epsilon does not match the perturbation level");
    if (c.level == PerturbationLevel::L0 && !(c.lambda_mse > 0.0))
      throw std::invalid_argument("attack: L0 requires a positive naturalness weight");
    if (c.level != PerturbationLevel::L0 && c.lambda_mse != 0.0)
      throw std::invalid_argument("attack: naturalness weight is only used at L0");
  }
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw std::invalid_argument("attack: epsilon must lie in [0, 1]");
  if (!(c.lambda_mse >= 0.0)) throw std::invalid_argument("attack: lambda_mse must be >= 0");
  if (!(c.step_size > 0.0)) throw std::invalid_argument("attack: step size must be positive");
  if (c.iterations < 1) throw std::invalid_argument("attack: need at least one iteration");
  if (c.views < 1) throw std::invalid_argument("attack: need at least one view");
  if (!(c.tau > 0.0)) throw std::invalid_argument("attack: tau must be positive");
  validate_eot(c.eot);
}

using TargetTrajectory = std::vector<ActionVector>;

/// Translation channels move linearly from the clean action at t = 0 to
/// `alt_point` at t = T-1; rotations follow the clean actions; the gripper
/// is held at `gripper_open`.
inline TargetTrajectory make_target_trajectory(const std::vector<ActionVector>& clean, const Vec3& alt_point,
                                               double gripper_open = -1.0) {
  TargetTrajectory tgt = clean;
  const std::size_t n = clean.size();
  for (std::size_t t = 0; t < n; ++t) {
    const double s = n > 1 ? static_cast<double>(t) / static_cast<double>(n - 1) : 1.0;
    for (int k = 0; k < 3; ++k) tgt[t][k] = (1.0 - s) * clean[t][k] + s * alt_point[k];
    tgt[t][kGripperChannel] = gripper_open;
  }
  return tgt;
}

/// Fixed views, cached reference renders and reference actions for one run.
struct AttackProblem {
  std::shared_ptr<const Policy> policy;
  Instruction instruction;
  std::shared_ptr<const TargetObject> target;
  std::vector<std::vector<SceneFrame>> views;        // [t][m]
  std::vector<std::vector<PreparedFrame>> prepared;  // [t][m]
  std::vector<std::vector<ActionVector>> reference;  // a*_tm on clean colors, no EoT
  FrameWeights weights;
  std::optional<TargetTrajectory> target_actions;

  std::size_t frame_count() const { return views.size(); }
  std::size_t view_count() const { return views.empty() ? 0 : views.front().size(); }
};

/// Samples the views (stream "views") and caches clean renders and actions.
inline AttackProblem make_attack_problem(std::shared_ptr<const Policy> policy, Instruction instr,
                                         const std::vector<SceneFrame>& trajectory, FrameWeights weights,
                                         int view_count, double view_orbit, std::uint64_t seed) {
  if (trajectory.empty()) throw std::invalid_argument("attack: empty trajectory");
  if (weights.size() != trajectory.size()) throw std::invalid_argument("attack: one weight per frame required");
  AttackProblem p;
  p.policy = std::move(policy);
  p.instruction = instr;
  p.target = trajectory.front().target;
  p.weights = std::move(weights);
  Rng view_rng(seed, "views");
  for (const auto& frame : trajectory) {
    auto views = sample_views(frame, view_count, view_orbit, view_rng);
    std::vector<PreparedFrame> prepared;
    std::vector<ActionVector> refs;
    for (const auto& v : views) {
      prepared.emplace_back(v);
      refs.push_back(p.policy->forward(prepared.back().scene.image, instr));
    }
    p.views.push_back(std::move(views));
    p.prepared.push_back(std::move(prepared));
    p.reference.push_back(std::move(refs));
  }
  return p;
}

struct LossEvaluation {
  double loss = 0.0;            // weighted action loss, without the naturalness term
  double mean_deviation = 0.0;  // unweighted mean over (t, m) of the per-term distance
  VertexColors gradient;        // d loss / d colors (empty when not requested)
};

/// Evaluates the weighted action loss and, optionally, its gradient. EoT
/// draws come from `eot_rng` in (t, m) order when cfg.eot.enabled.
inline LossEvaluation evaluate_attack_loss(const AttackProblem& problem, const VertexColors& colors,
                                           const AttackConfig& cfg, Rng* eot_rng, bool want_gradient) {
  validate_colors(*problem.target->mesh, colors);
  const bool targeted = cfg.mode == AttackMode::targeted;
  if (targeted && (!problem.target_actions || problem.target_actions->size() != problem.frame_count()))
    throw std::invalid_argument("attack: targeted mode needs one target action per frame");
  const bool use_eot = cfg.eot.enabled;
  if (use_eot && !eot_rng) throw std::invalid_argument("attack: EoT enabled but no random stream given");

  const VertexColorBaker& baker = *problem.target->baker;
  const TextureMap texture = baker.bake(colors);
  TextureMap d_texture(texture.height, texture.width, 0.0);
  LossEvaluation out;
  const double inv_m = 1.0 / static_cast<double>(problem.view_count());
  std::size_t terms = 0;

  for (std::size_t t = 0; t < problem.frame_count(); ++t) {
    const double wt = problem.weights.w[t];
    for (std::size_t m = 0; m < problem.view_count(); ++m) {
      std::optional<PreparedFrame> transformed;
      ImageTransform g;
      if (use_eot && eot_rng) {
        EotDraw draw = sample_eot(cfg.eot, problem.views[t][m], *eot_rng);
        transformed.emplace(draw.frame);
        g = draw.transform;
      }
      const PreparedFrame& prepared = transformed ? *transformed : problem.prepared[t][m];
      auto [composited, tape] = prepared.observe(texture);
      const Observation obs = g.apply(composited);
      const ActionVector action = problem.policy->forward(obs, problem.instruction);
      const ActionVector& ref = targeted ? (*problem.target_actions)[t] : problem.reference[t][m];

      ActionVector diff{};
      for (int k = 0; k < kActionDim; ++k) diff[k] = action[k] - ref[k];
      const double dist = action_l2(action, ref);
      out.loss += wt * inv_m * dist;
      out.mean_deviation += dist;
      ++terms;

      if (!want_gradient || dist == 0.0 || wt == 0.0) continue;
      ActionVector d_action{};
      for (int k = 0; k < kActionDim; ++k) d_action[k] = wt * inv_m * diff[k] / dist;
      const Image d_obs = problem.policy->input_gradient(obs, problem.instruction, d_action);
      const Image d_composite = g.backward(composited, d_obs);
      texture_backward_accumulate(tape, composite_backward(prepared.scene.mask, d_composite), d_texture);
    }
  }
  out.mean_deviation /= static_cast<double>(terms);
  if (want_gradient) out.gradient = baker.backward(d_texture);
  return out;
}

inline LossEvaluation untargeted_step_loss(const AttackProblem& problem, const VertexColors& colors,
                                           AttackConfig cfg, Rng* eot_rng = nullptr) {
  cfg.mode = AttackMode::untargeted;
  return evaluate_attack_loss(problem, colors, cfg, eot_rng, true);
}

inline LossEvaluation targeted_step_loss(const AttackProblem& problem, const VertexColors& colors,
                                         AttackConfig cfg, Rng* eot_rng = nullptr) {
  cfg.mode = AttackMode::targeted;
  return evaluate_attack_loss(problem, colors, cfg, eot_rng, true);
}

inline double squared_distance(const VertexColors& a, const VertexColors& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) s += (a.rgb[i] - b.rgb[i]) * (a.rgb[i] - b.rgb[i]);
  return s;
}

inline double linf_distance(const VertexColors& a, const VertexColors& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) s = std::max(s, std::abs(a.rgb[i] - b.rgb[i]));
  return s;
}

/// Projects onto {|c - clean|_inf <= epsilon} intersected with [0, 1].
inline void project_to_budget(VertexColors& c, const VertexColors& clean, double epsilon) {
  for (std::size_t i = 0; i < c.rgb.size(); ++i) {
    const double lo = std::max(0.0, clean.rgb[i] - epsilon);
    const double hi = std::min(1.0, clean.rgb[i] + epsilon);
    c.rgb[i] = std::clamp(c.rgb[i], lo, hi);
  }
}

/// Objective the optimizer follows: maximized when untargeted, minimized
/// when targeted, with the naturalness penalty always opposing the attack.
inline double attack_objective(const AttackConfig& cfg, double loss, double penalty) {
  return cfg.mode == AttackMode::untargeted ? loss - cfg.lambda_mse * penalty : loss + cfg.lambda_mse * penalty;
}

struct IterationMetrics {
  int iteration = 0;
  double loss = 0.0;  // objective, including the naturalness term
  double mean_deviation = 0.0;
  double linf_budget_used = 0.0;  // |c - clean|_inf / epsilon (0 when epsilon = 0)
  double wall_ms = 0.0;
};

struct OptimizationResult {
  VertexColors colors;
  std::vector<IterationMetrics> log;
  int selected_iteration = 0;  // index into log of the returned iterate
};

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, std::string dump) : std::runtime_error(what), dump_(std::move(dump)) {}
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

/// Projected sign-gradient optimization starting from the clean colors. The
/// log has iterations + 1 entries: entry i describes the iterate before the
/// i-th update and the last entry the final iterate.
/// Called with every evaluated iterate, in order.
using IterateObserver = std::function<void(int iteration, const VertexColors& colors)>;

inline OptimizationResult optimize(const AttackProblem& problem, const AttackConfig& cfg,
                                   const IterateObserver& observer = {}) {
  validate_attack_config(cfg);
  const VertexColors& clean = problem.target->clean_colors;
  const bool ascend = cfg.mode == AttackMode::untargeted;
  Rng eot_rng(cfg.seed, "eot");
  VertexColors c = clean;
  OptimizationResult result;
  VertexColors best = c;
  double best_objective = 0.0;
  const auto start = std::chrono::steady_clock::now();

  for (int it = 0; it <= cfg.iterations; ++it) {
    const bool final_pass = it == cfg.iterations;
    if (observer) observer(it, c);
    const LossEvaluation eval = evaluate_attack_loss(problem, c, cfg, &eot_rng, !final_pass);
    const double penalty = squared_distance(c, clean);
    const double objective = attack_objective(cfg, eval.loss, penalty);
    if (!std::isfinite(objective)) {
      std::ostringstream dump;
      dump.precision(17);
      dump << "iteration " << it << "\nloss " << eval.loss << "\npenalty " << penalty << "\ncolors";
      for (double v : c.rgb) dump << ' ' << v;
      dump << '\n';
      throw NonFiniteLossError("optimize: non-finite objective at iteration " + std::to_string(it), dump.str());
    }

    IterationMetrics m;
    m.iteration = it;
    m.loss = objective;
    m.mean_deviation = eval.mean_deviation;
    m.linf_budget_used = cfg.epsilon > 0.0 ? linf_distance(c, clean) / cfg.epsilon : 0.0;
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(m);

    const bool improved = ascend ? objective > best_objective : objective < best_objective;
    if (it == 0 || improved) {
      best_objective = objective;
      best = c;
      result.selected_iteration = it;
    }
    if (final_pass) break;

    const double lambda_sign = ascend ? -1.0 : 1.0;
    for (std::size_t i = 0; i < c.rgb.size(); ++i) {
      const double g = eval.gradient.rgb[i] + lambda_sign * 2.0 * cfg.lambda_mse * (c.rgb[i] - clean.rgb[i]);
      const double s = (g > 0.0) - (g < 0.0);
      c.rgb[i] += (ascend ? 1.0 : -1.0) * cfg.step_size * s;
    }
    project_to_budget(c, clean, cfg.epsilon);
    for (std::size_t i = 0; i < c.rgb.size(); ++i) {
      if (!(std::abs(c.rgb[i] - clean.rgb[i]) <= cfg.epsilon + 1e-9 && c.rgb[i] >= 0.0 && c.rgb[i] <= 1.0))
        throw std::logic_error("optimize: projection left the feasible set");
    }
  }
  if (cfg.keep_best) {
    result.colors = best;
  } else {
    result.colors = c;
    result.selected_iteration = cfg.iterations;
  }
  return result;
}

struct RandomSearchResult {
  VertexColors best;
  double best_loss = 0.0;
};

/// Best untargeted loss over `draws` colorings drawn uniformly from the
/// feasible set (stream "random-search"). Baseline for the optimizer.
inline RandomSearchResult random_search(const AttackProblem& problem, AttackConfig cfg, int draws) {
  if (draws < 1) throw std::invalid_argument("random_search: need at least one draw");
  cfg.mode = AttackMode::untargeted;
  cfg.eot.enabled = false;
  const VertexColors& clean = problem.target->clean_colors;
  Rng rng(cfg.seed, "random-search");
  RandomSearchResult r;
  for (int d = 0; d < draws; ++d) {
    VertexColors c = clean;
    for (std::size_t i = 0; i < c.rgb.size(); ++i)
      c.rgb[i] = rng.uniform(std::max(0.0, clean.rgb[i] - cfg.epsilon), std::min(1.0, clean.rgb[i] + cfg.epsilon));
    const double loss = evaluate_attack_loss(problem, c, cfg, nullptr, false).loss;
    if (d == 0 || loss > r.best_loss) {
      r.best_loss = loss;
      r.best = std::move(c);
    }
  }
  return r;
}

}  // namespace advtex
