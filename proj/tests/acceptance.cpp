// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "advtex/advtex.hpp"

namespace fs = std::filesystem;
using namespace advtex;

namespace {

const fs::path kFixture = fs::path(ADVTEX_FIXTURE_DIR) / "tabletop";

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
  std::printf("criterion %2d: %s  %s  (%s)\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), o.detail.c_str());
  std::fflush(stdout);
  failures += !o.pass;
}

template <class F>
void run_criterion(int id, const std::string& title, F&& body) {
  try {
    report(id, title, body());
  } catch (const std::exception& e) {
    report(id, title, {false, std::string("exception: ") + e.what()});
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Experiment fixture_experiment(const std::string& config, std::optional<PerturbationLevel> level = {}) {
  Scenario s = load_scenario(kFixture / "scenario.json");
  RunConfig c = load_run_config((kFixture / config).string());
  if (level) c.attack.set_level(*level);
  return make_experiment(std::move(s), std::move(c));
}

/// Fixture attack runs shared between criteria, keyed by label.
struct FixtureRuns {
  fs::path root = fs::temp_directory_path() / "advtex_acceptance";
  std::map<std::string, AttackRun> runs;
  std::map<std::string, double> seconds;
  std::map<std::string, bool> feasible;
  std::map<std::string, int> observed;

  FixtureRuns() {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~FixtureRuns() { fs::remove_all(root); }

  const AttackRun& get(const std::string& label, const std::string& config, std::optional<PerturbationLevel> level) {
    if (auto it = runs.find(label); it != runs.end()) return it->second;
    const auto t0 = Clock::now();
    const Experiment e = fixture_experiment(config, level);
    const VertexColors clean = e.clean_colors();
    const double eps = e.config.attack.epsilon;
    bool ok = true;
    int count = 0;
    AttackRun run = run_attack(e, [&](int, const VertexColors& c) {
      ++count;
      for (std::size_t i = 0; i < c.rgb.size(); ++i)
        ok = ok && std::abs(c.rgb[i] - clean.rgb[i]) <= eps && c.rgb[i] >= 0.0 && c.rgb[i] <= 1.0;
    });
    write_attack_run(e, run, root / label);
    seconds[label] = seconds_since(t0);
    feasible[label] = ok;
    observed[label] = count;
    return runs.emplace(label, std::move(run)).first->second;
  }
};

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  const auto results = run_gradient_checks({1, 2, 3, 4, 5});
  bool pass = true;
  double worst_pipeline = 0.0;
  std::string modules;
  for (const auto& r : results) {
    pass = pass && r.passed();
    if (r.name.rfind("attack loss", 0) == 0) {
      worst_pipeline = std::max(worst_pipeline, r.rel_error);
    } else {
      modules += fmt("%s %.1e < %.0e, ", r.name.c_str(), r.rel_error, r.tolerance);
    }
  }
  const double secs = seconds_since(t0);
  pass = pass && results.size() == 8 && secs < 120.0;
  return {pass, modules + fmt("pipeline worst %.1e < 1e-3 over 5 micro-scenes, %.1f s < 120 s", worst_pipeline, secs)};
}

Outcome criterion_fidelity() {
  const auto t0 = Clock::now();
  const Experiment e = fixture_experiment("config.json");
  const TextureMap texture = e.frames.front().target->baker->bake(e.clean_colors());
  double worst_diff = 0.0, worst_ssim = 1.0;
  for (const auto& f : e.frames) {
    const Observation reference = render_scene(f).image;
    const Observation composited = PreparedFrame(f).observe(texture).first;
    worst_diff = std::max(worst_diff, max_abs_diff(composited, reference));
    worst_ssim = std::min(worst_ssim, compute_ssim(composited, reference));
  }
  const double secs = seconds_since(t0);
  return {worst_diff <= 1e-6 && worst_ssim >= 0.999 && secs < 10.0,
          fmt("%zu frames, max diff %.2e <= 1e-6, min SSIM %.6f >= 0.999, %.2f s < 10 s", e.frame_count(), worst_diff,
              worst_ssim, secs)};
}

Outcome criterion_compositing() {
  const auto t0 = Clock::now();
  const Experiment e = fixture_experiment("config.json");
  Rng rng(1, "acceptance-composite");
  const ImageSize size = e.frames.front().camera.size();
  auto random_image = [&] {
    Observation x(size.height, size.width);
    for (double& v : x.data) v = rng.uniform();
    return x;
  };
  const Observation fg = random_image(), bg = random_image();
  bool ones = composite(SilhouetteMask(size, 1), fg, bg) == fg;
  bool zeros = composite(SilhouetteMask(size, 0), fg, bg) == bg;
  bool partition = true;
  std::size_t checked = 0;
  for (std::size_t t = 0; t < e.frame_count(); t += 13) {
    const SilhouetteMask m = render_scene(e.frames[t]).mask;
    SilhouetteMask inverse = m;
    for (auto& v : inverse.values) v = static_cast<std::uint8_t>(1 - v);
    const Observation a = composite(m, fg, bg), b = composite(inverse, fg, bg);
    for (std::size_t p = 0; p < m.values.size(); ++p)
      for (int ch = 0; ch < 3; ++ch) {
        const std::size_t i = p * 3 + ch;
        const double expect = m.values[p] ? fg.data[i] : bg.data[i];
        partition = partition && a.data[i] == expect && a.data[i] + b.data[i] == fg.data[i] + bg.data[i];
        ++checked;
      }
  }
  const double secs = seconds_since(t0);
  return {ones && zeros && partition && secs < 1.0,
          fmt("ones->fg %s, zeros->bg %s, partition over %zu values %s, %.2f s < 1 s", ones ? "exact" : "differs",
              zeros ? "exact" : "differs", checked, partition ? "exact" : "broken", secs)};
}

Outcome criterion_taao() {
  const auto t0 = Clock::now();
  Rng rng(4, "acceptance-taao");
  bool sums = true, uniform = true, order = true, shift = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(3 + trial % 40);
    for (double& v : s) v = rng.uniform();
    const double tau = 0.05 + rng.uniform();
    const auto w = frame_weights(s, tau).w;
    double total = 0.0;
    for (double v : w) total += v;
    sums = sums && std::abs(total - 1.0) <= 1e-9;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j) order = order && (s[i] < s[j]) <= (w[i] < w[j]);
    std::vector<double> shifted = s;
    for (double& v : shifted) v += 2.5;
    const auto w2 = frame_weights(shifted, tau).w;
    for (std::size_t i = 0; i < s.size(); ++i) shift = shift && std::abs(w[i] - w2[i]) <= 1e-12;
    const auto u = frame_weights(std::vector<double>(s.size(), s[0]), tau).w;
    for (double v : u) uniform = uniform && std::abs(v - 1.0 / static_cast<double>(s.size())) <= 1e-12;
  }

  // Latent trajectory moving slowly except for a burst around frame k.
  const int n = 20, k = 9;
  std::vector<double> steps(n - 1, 0.03);
  const double burst[4] = {1.0, 2.0, 0.6, 0.2};
  for (int i = 0; i < 4; ++i) steps[k - 1 + i] = burst[i];
  std::vector<Observation> obs;
  double level = 0.1;
  obs.emplace_back(16, 16, level);
  for (double d : steps) obs.emplace_back(16, 16, level += 0.2 * d);
  const auto w = weigh_trajectory(obs, LatentEncoder(16, 4)).weights.w;
  const int peak = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
  const double secs = seconds_since(t0);
  return {sums && uniform && order && shift && peak == k && secs < 5.0,
          fmt("sum %s, constant->uniform %s, order %s, shift %s, spike peak at frame %d (expected %d), %.2f s < 5 s",
              sums ? "ok" : "bad", uniform ? "ok" : "bad", order ? "ok" : "bad", shift ? "ok" : "bad", peak, k, secs)};
}

Outcome criterion_attack_vs_control(FixtureRuns& runs) {
  const AttackRun& run = runs.get("L3", "config.json", PerturbationLevel::L3);
  const auto& attack = find_condition(run.conditions, "attack");
  const auto& gaussian = find_condition(run.conditions, "gaussian");
  const double gap = attack.failure_rate - gaussian.failure_rate;
  const int trials = static_cast<int>(attack.trial_deviation.size());
  const double secs = runs.seconds["L3"];
  return {gap >= 0.20 && trials == 50 && secs < 1800.0,
          fmt("attack failure %.0f%% vs gaussian %.0f%% (gap %.0f pp >= 20) over %d trials, deviation %.3f vs %.3f, "
              "%.0f s < 1800 s",
              100 * attack.failure_rate, 100 * gaussian.failure_rate, 100 * gap, trials, attack.mean_deviation,
              gaussian.mean_deviation, secs)};
}

Outcome criterion_random_search() {
  const auto t0 = Clock::now();
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const MicroScene s = make_micro_scene(seed, 4);
    std::vector<Observation> obs;
    for (const auto& f : s.frames) obs.push_back(render_scene(f).image);
    const FrameWeights w = weigh_trajectory(obs, LatentEncoder(16, 4)).weights;
    const AttackProblem p = make_attack_problem(s.policy, s.instruction, s.frames, w, 2, 0.1, seed);
    AttackConfig cfg = AttackConfig::for_level(PerturbationLevel::L3);
    cfg.seed = seed;
    cfg.iterations = 200;
    cfg.eot.enabled = true;
    cfg.eot.max_rotation = 0.1;
    cfg.eot.max_orbit = 0.05;
    cfg.eot.max_brightness = 0.03;
    cfg.eot.min_contrast = 0.9;
    cfg.eot.max_contrast = 1.1;
    cfg.eot.blur_kernels = {1, 3};
    const OptimizationResult r = optimize(p, cfg);
    AttackConfig plain = cfg;
    plain.eot.enabled = false;
    const double pgd = evaluate_attack_loss(p, r.colors, plain, nullptr, false).loss;
    const double best = random_search(p, cfg, 2000).best_loss;
    const double ratio = pgd / best;
    pass = pass && ratio >= 0.9;
    detail += fmt("seed %llu %.2f, ", static_cast<unsigned long long>(seed), ratio);
  }
  const double secs = seconds_since(t0);
  return {pass && secs < 600.0, "PGD / random-search loss: " + detail + fmt("all >= 0.9, %.0f s < 600 s", secs)};
}

Outcome criterion_monotonicity(FixtureRuns& runs) {
  std::map<std::string, double> dev;
  for (const auto& [label, level] : std::vector<std::pair<std::string, PerturbationLevel>>{
           {"L0", PerturbationLevel::L0},
           {"L1", PerturbationLevel::L1},
           {"L2", PerturbationLevel::L2},
           {"L3", PerturbationLevel::L3}})
    dev[label] = find_condition(runs.get(label, "config.json", level).conditions, "attack").mean_deviation;
  const bool pass = dev["L1"] <= dev["L2"] && dev["L2"] <= dev["L3"] && dev["L0"] <= dev["L3"];
  return {pass, fmt("mean deviation L1 %.3f <= L2 %.3f <= L3 %.3f, L0 %.3f <= L3", dev["L1"], dev["L2"], dev["L3"],
                    dev["L0"])};
}

Outcome criterion_targeted(FixtureRuns& runs) {
  const AttackRun& run = runs.get("targeted", "config_targeted.json", {});
  const double reduction = 1.0 - run.l1_attacked / run.l1_clean;
  const double secs = runs.seconds["targeted"];
  return {reduction >= 0.5 && secs < 900.0,
          fmt("L1 to target %.4f attacked vs %.4f clean (reduction %.0f%% >= 50%%), %.0f s < 900 s", run.l1_attacked,
              run.l1_clean, 100 * reduction, secs)};
}

Outcome criterion_determinism(FixtureRuns& runs) {
  runs.get("L3", "config.json", PerturbationLevel::L3);
  runs.get("L3-rerun", "config.json", PerturbationLevel::L3);
  bool feasible = true;
  int iterates = 0;
  for (const auto& [label, ok] : runs.feasible) {
    feasible = feasible && ok;
    iterates += runs.observed[label];
  }
  bool identical = true;
  for (const char* f : {"report.json", "texture.ppm", "colors.vcol", "trials.csv", "actions.csv"})
    identical = identical && read_file(runs.root / "L3" / f) == read_file(runs.root / "L3-rerun" / f);
  return {feasible && identical, fmt("%d iterates over %zu runs %s the budget and [0,1], rerun artifacts %s", iterates,
                                     runs.feasible.size(), feasible ? "inside" : "outside",
                                     identical ? "bit-identical" : "differ")};
}

Outcome criterion_transfer(FixtureRuns& runs) {
  const AttackRun& run = runs.get("L3", "config.json", PerturbationLevel::L3);
  const auto& attack = find_condition(run.transfer_conditions, "attack");
  const auto& clean = find_condition(run.transfer_conditions, "clean");
  return {attack.mean_deviation > clean.mean_deviation,
          fmt("transfer policy deviation %.3f attacked vs %.3f clean", attack.mean_deviation, clean.mean_deviation)};
}

}  // namespace

int main() {
  FixtureRuns runs;
  run_criterion(1, "gradient checks", criterion_gradients);
  run_criterion(2, "dual-renderer fidelity", criterion_fidelity);
  run_criterion(3, "compositing identities", criterion_compositing);
  run_criterion(4, "trajectory weights", criterion_taao);
  run_criterion(5, "attack vs gaussian control", [&] { return criterion_attack_vs_control(runs); });
  run_criterion(6, "optimizer vs random search", criterion_random_search);
  run_criterion(7, "budget monotonicity", [&] { return criterion_monotonicity(runs); });
  run_criterion(8, "targeted convergence", [&] { return criterion_targeted(runs); });
  run_criterion(9, "projection and determinism", [&] { return criterion_determinism(runs); });
  run_criterion(10, "transfer", [&] { return criterion_transfer(runs); });
  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
