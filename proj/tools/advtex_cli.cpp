// Command-line front end: rollout, attack, evaluate, verify-report,
// grad-check and make-fixture.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "advtex/advtex.hpp"

namespace fs = std::filesystem;
using namespace advtex;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<std::string> level;
  std::optional<std::string> mode;
  std::optional<std::string> defense;
};

void add_overrides(CLI::App* cmd, Overrides& o, bool attack_flags) {
  cmd->add_option("--seed", o.seed, "Root seed (overrides the config)");
  cmd->add_option("--trials", o.trials, "Evaluation trials (overrides the config)")->check(CLI::PositiveNumber);
  cmd->add_option("--defense", o.defense, "none | noise:<sigma> | median:<k> | bitdepth:<bits>");
  if (attack_flags) {
    cmd->add_option("--level", o.level, "Perturbation level")->check(CLI::IsMember({"L0", "L1", "L2", "L3"}));
    cmd->add_option("--mode", o.mode, "Attack mode")->check(CLI::IsMember({"untargeted", "targeted"}));
  }
}

Experiment load(const std::string& scenario, const std::string& config, const Overrides& o) {
  Scenario s = load_scenario(scenario);
  RunConfig c = load_run_config(config);
  if (o.seed) c.seed = *o.seed;
  if (o.trials) c.evaluation.trials = *o.trials;
  if (o.level) c.attack.set_level(parse_level(*o.level));
  if (o.mode) c.attack.mode = parse_attack_mode(*o.mode);
  if (o.defense) c.evaluation.defense = parse_defense(*o.defense);
  validate_attack_config(c.attack);
  return make_experiment(std::move(s), std::move(c));
}

void print_condition(const char* label, const ConditionResult& c) {
  std::printf("  %-10s mean deviation %.6f  failure rate %.3f\n", label, c.mean_deviation, c.failure_rate);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial vertex-color textures against a seeded visuomotor policy"};
  app.require_subcommand(1);

  std::string scenario, config, out, colors, run_dir;
  Overrides ov;

  auto* rollout = app.add_subcommand("rollout", "Clean rollout: observations, reference actions, frame weights");
  rollout->add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  rollout->add_option("--config", config, "Run config JSON")->required()->check(CLI::ExistingFile);
  rollout->add_option("--out", out, "Output directory")->required();
  add_overrides(rollout, ov, false);

  auto* attack = app.add_subcommand("attack", "Optimize a texture and evaluate it over seeded trials");
  attack->add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  attack->add_option("--config", config, "Run config JSON")->required()->check(CLI::ExistingFile);
  attack->add_option("--out", out, "Output directory")->required();
  add_overrides(attack, ov, true);

  std::vector<std::string> sweeps;
  bool transfer = false;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate saved vertex colors under sweeps, defenses, transfer");
  evaluate->add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--config", config, "Run config JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--colors", colors, "VCOL file with the attacked colors")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", out, "Output CSV path")->required();
  evaluate->add_option("--sweep", sweeps, "camera:<deg,...> | rotation:<deg,...> | position:<units,...>");
  evaluate->add_flag("--transfer", transfer, "Evaluate on the transfer policy instead of the attacked one");
  add_overrides(evaluate, ov, false);

  auto* verify = app.add_subcommand("verify-report", "Recompute report numbers from the raw trial tables");
  verify->add_option("--run", run_dir, "Attack output directory")->required()->check(CLI::ExistingDirectory);

  int seed_count = 5;
  auto* gradcheck = app.add_subcommand("grad-check", "Run every finite-difference gradient suite");
  gradcheck->add_option("--seeds", seed_count, "Number of micro-scenes")->check(CLI::Range(1, 100));

  auto* fixture = app.add_subcommand("make-fixture", "Write the tabletop fixture");
  fixture->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*rollout) {
      const Experiment e = load(scenario, config, ov);
      const Rollout r = clean_rollout(e, *e.policy);
      write_rollout(e, r, out);
      std::printf("rollout: %zu frames written to %s\n", r.observations.size(), out.c_str());
      return 0;
    }
    if (*attack) {
      const Experiment e = load(scenario, config, ov);
      AttackRun run;
      try {
        run = run_attack(e);
      } catch (const NonFiniteLossError& err) {
        fs::create_directories(out);
        std::ofstream(fs::path(out) / "nonfinite_dump.txt") << err.dump();
        std::fprintf(stderr, "error: %s (state dumped to %s/nonfinite_dump.txt)\n", err.what(), out.c_str());
        return 1;
      }
      write_attack_run(e, run, out);
      std::printf("attack: %s %s, selected iteration %d, threshold %.6f\n", to_string(e.config.attack.mode).c_str(),
                  to_string(e.config.attack.level).c_str(), run.optimization.selected_iteration, run.threshold);
      for (const auto& c : run.conditions) print_condition(c.name.c_str(), c);
      std::printf("  transfer policy (seed %llu):\n", static_cast<unsigned long long>(e.config.transfer_policy.seed));
      for (const auto& c : run.transfer_conditions) print_condition(c.name.c_str(), c);
      std::printf("  L1 to target: attacked %.6f, clean %.6f\n", run.l1_attacked, run.l1_clean);
      return 0;
    }
    if (*evaluate) {
      const Experiment e = load(scenario, config, ov);
      const VertexColors c = load_vertex_colors(colors);
      std::vector<SweepRow> rows;
      if (sweeps.empty()) sweeps.push_back("none");
      for (const auto& s : sweeps) {
        auto part = evaluate_sweep(e, c, parse_sweep(s), e.config.evaluation.defense, transfer);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      write_sweep_csv(out, rows);
      for (const auto& r : rows)
        std::printf("%-8s %8.3f  attack %.6f (%.3f)  clean %.6f (%.3f)\n", r.axis.c_str(), r.value,
                    r.attack.mean_deviation, r.attack.failure_rate, r.clean.mean_deviation, r.clean.failure_rate);
      return 0;
    }
    if (*verify) {
      const VerificationResult v = verify_report(run_dir);
      for (const auto& err : v.errors) std::printf("MISMATCH %s\n", err.c_str());
      std::printf("verify-report: %d checks, %zu mismatches\n", v.checks, v.errors.size());
      return v.ok() ? 0 : 1;
    }
    if (*gradcheck) {
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < seed_count; ++i) seeds.push_back(static_cast<std::uint64_t>(101 + i));
      bool ok = true;
      for (const auto& r : run_gradient_checks(seeds)) {
        std::printf("%s %-40s rel err %.3e (tol %.0e, %zu params)\n", r.passed() ? "PASS" : "FAIL", r.name.c_str(),
                    r.rel_error, r.tolerance, r.parameters);
        ok = ok && r.passed();
      }
      return ok ? 0 : 1;
    }
    if (*fixture) {
      write_tabletop_fixture(out);
      std::printf("fixture written to %s\n", out.c_str());
      return 0;
    }
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  }
  return 0;
}
