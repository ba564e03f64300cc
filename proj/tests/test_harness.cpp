#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"

using namespace advtex;
using namespace advtex::testing;
namespace fs = std::filesystem;

namespace {

const fs::path kFixture = fs::path(ADVTEX_FIXTURE_DIR) / "tabletop";

/// Fixture experiment cut down to `frames` frames and a few cheap iterations.
Experiment small_experiment(std::size_t frames = 5, int iterations = 4, int trials = 3) {
  Scenario s = load_scenario(kFixture / "scenario.json");
  s.target_poses.resize(frames);
  RunConfig c = load_run_config((kFixture / "config.json").string());
  c.attack.iterations = iterations;
  c.attack.views = 1;
  c.evaluation.trials = trials;
  return make_experiment(std::move(s), std::move(c));
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Json fixture_json(const std::string& name) { return parse_json_file((kFixture / name).string()); }

/// Json path of the SchemaError raised while parsing, or "" if none.
template <class F>
std::string schema_error_path(F&& parse) {
  try {
    parse();
  } catch (const SchemaError& e) {
    return e.json_path();
  }
  return "";
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Golden, CleanRolloutMatchesStoredFrames) {
  const Experiment e = load_experiment(kFixture / "scenario.json", kFixture / "config.json");
  const Rollout r = clean_rollout(e, *e.policy);
  ASSERT_EQ(r.observations.size(), 40u);
  for (int t : {0, 20, 39}) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03d.texf", t);
    const Image golden = read_texf(kFixture / "golden" / name);
    const Observation& obs = r.observations[static_cast<std::size_t>(t)];
    ASSERT_EQ(golden.height, obs.height);
    ASSERT_EQ(golden.width, obs.width);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < obs.data.size(); ++i)
      mismatches += static_cast<float>(obs.data[i]) != static_cast<float>(golden.data[i]);
    EXPECT_EQ(mismatches, 0u) << name;
  }
  const auto golden_actions = read_actions_csv(kFixture / "golden" / "reference_actions.csv");
  ASSERT_EQ(golden_actions.size(), r.actions.size());
  for (std::size_t t = 0; t < r.actions.size(); ++t)
    for (int k = 0; k < kActionDim; ++k) EXPECT_NEAR(r.actions[t][k], golden_actions[t][k], 1e-12) << t << ' ' << k;
  const TrajectoryWeighting golden_w = read_weights_csv(kFixture / "golden" / "taao_weights.csv", e.config.taao.tau);
  ASSERT_EQ(golden_w.weights.w.size(), r.weighting.weights.w.size());
  for (std::size_t t = 0; t < golden_w.weights.w.size(); ++t)
    EXPECT_NEAR(r.weighting.weights.w[t], golden_w.weights.w[t], 1e-12);
}

TEST(Schema, UnknownScenarioKeyIsNamed) {
  Json doc = fixture_json("scenario.json");
  doc["camera"]["fov"] = 40.0;
  EXPECT_EQ(schema_error_path([&] { parse_scenario(doc, kFixture / "scenario.json"); }), "$.camera.fov");
  doc = fixture_json("scenario.json");
  doc["colour"] = 1;
  EXPECT_EQ(schema_error_path([&] { parse_scenario(doc, kFixture / "scenario.json"); }), "$.colour");
}

TEST(Schema, MissingScenarioKeyNamesItsParent) {
  Json doc = fixture_json("scenario.json");
  doc["lighting"].erase("ambient");
  EXPECT_EQ(schema_error_path([&] { parse_scenario(doc, kFixture / "scenario.json"); }), "$.lighting");
}

TEST(Schema, TooFewFramesRejected) {
  Json doc = fixture_json("scenario.json");
  doc["frames"] = Json(doc["frames"].begin(), doc["frames"].begin() + 2);
  EXPECT_EQ(schema_error_path([&] { parse_scenario(doc, kFixture / "scenario.json"); }), "$.frames");
  doc = fixture_json("scenario.json");
  doc["frames"] = Json(doc["frames"].begin(), doc["frames"].begin() + 3);
  EXPECT_NO_THROW(parse_scenario(doc, kFixture / "scenario.json"));
}

TEST(Schema, UnknownFrameKeyNamesItsIndex) {
  Json doc = fixture_json("scenario.json");
  doc["frames"][4]["scale"] = 2.0;
  EXPECT_EQ(schema_error_path([&] { parse_scenario(doc, kFixture / "scenario.json"); }), "$.frames[4].scale");
}

TEST(Schema, ConfigErrorsNameTheirPath) {
  Json doc = fixture_json("config.json");
  doc["attack"]["iteratons"] = 5;
  EXPECT_NE(schema_error_path([&] { parse_run_config(doc, "config.json"); }).find("$.attack"), std::string::npos);
  doc = fixture_json("config.json");
  doc["evaluation"]["perturbation"]["brightness"] = "high";
  EXPECT_NE(schema_error_path([&] { parse_run_config(doc, "config.json"); }).find("$.evaluation.perturbation"),
            std::string::npos);
  EXPECT_NO_THROW(parse_run_config(fixture_json("config.json"), "config.json"));
}

TEST(Parse, Defense) {
  EXPECT_EQ(parse_defense("none").kind, DefenseKind::none);
  const DefenseSpec n = parse_defense("noise:0.05");
  EXPECT_EQ(n.kind, DefenseKind::additive_noise);
  EXPECT_EQ(n.sigma, 0.05);
  EXPECT_EQ(parse_defense("median:5").kernel, 5);
  EXPECT_EQ(parse_defense("bitdepth:7").bits, 7);
  for (const char* s : {"none", "noise:0.25", "median:3", "bitdepth:4"}) EXPECT_EQ(defense_string(parse_defense(s)), s);
  for (const char* s : {"blur:3", "median:4", "median:x", "bitdepth:9", "noise:-1"})
    EXPECT_THROW(parse_defense(s), std::invalid_argument) << s;
}

TEST(Parse, Sweep) {
  const SweepSpec s = parse_sweep("camera:0,5,-10.5");
  EXPECT_EQ(s.axis, SweepAxis::camera);
  EXPECT_EQ(s.values, (std::vector<double>{0.0, 5.0, -10.5}));
  EXPECT_EQ(parse_sweep("none").values, (std::vector<double>{0.0}));
  EXPECT_EQ(parse_sweep("position:0.05").axis, SweepAxis::position);
  for (const char* bad : {"camera", "camera:", "tilt:5", "rotation:5,x", "rotation:5deg"})
    EXPECT_THROW(parse_sweep(bad), std::invalid_argument) << bad;
  EXPECT_NEAR(sweep_offset(SweepAxis::rotation, 90.0).object_yaw, std::numbers::pi / 2, 1e-15);
  EXPECT_EQ(sweep_offset(SweepAxis::position, 0.1).object_shift, 0.1);
}

TEST(StoragePrecision, StaysInsideBudgetAndUnitRange) {
  Rng rng(1, "harness-test");
  const VertexColors clean = random_colors(200, rng, 0.0, 1.0);
  const double eps = 16.0 / 255.0;
  VertexColors c = clean;
  for (std::size_t i = 0; i < c.rgb.size(); ++i)
    c.rgb[i] = std::clamp(clean.rgb[i] + (rng.uniform() < 0.5 ? -eps : eps), 0.0, 1.0);
  const VertexColors s = to_storage_precision(c, clean, eps);
  for (std::size_t i = 0; i < s.rgb.size(); ++i) {
    EXPECT_EQ(s.rgb[i], static_cast<double>(static_cast<float>(s.rgb[i])));
    EXPECT_LE(std::abs(s.rgb[i] - clean.rgb[i]), eps);
    EXPECT_GE(s.rgb[i], 0.0);
    EXPECT_LE(s.rgb[i], 1.0);
    EXPECT_LE(std::abs(s.rgb[i] - c.rgb[i]), 1e-6);
  }
}

TEST(Rollout, IsDeterministicAndWeightsMatchRecomputation) {
  const Experiment e = small_experiment(6);
  const Rollout a = clean_rollout(e, *e.policy), b = clean_rollout(e, *e.policy);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.weighting.weights.w, b.weighting.weights.w);
  const TrajectoryWeighting w = weigh_trajectory(a.observations, *e.encoder, e.config.taao.tau);
  EXPECT_EQ(w.weights.w, a.weighting.weights.w);

  TempDir dir("advtex_rollout_test");
  write_rollout(e, a, dir.path);
  EXPECT_EQ(read_actions_csv(dir.path / "reference_actions.csv"), a.actions);
  EXPECT_EQ(read_weights_csv(dir.path / "taao_weights.csv", e.config.taao.tau).weights.w, a.weighting.weights.w);
  EXPECT_TRUE(fs::exists(dir.path / "observations" / "frame_005.ppm"));
  EXPECT_TRUE(fs::exists(dir.path / "rollout.json"));
}

TEST(Evaluation, ZeroBudgetReproducesCleanBaseline) {
  const Experiment e = small_experiment();
  const Rollout r = clean_rollout(e, *e.policy);
  const EvaluationRequest req = default_request(e, *e.policy, r.actions);
  const VertexColors clean = e.clean_colors();
  const VertexColors zero_eps = gaussian_control_colors(clean, 0.0, 1.0, e.config.seed, 0);
  const auto res = evaluate_conditions(e, req, {{"clean", [&](std::size_t) { return clean; }},
                                                {"zero", [&](std::size_t) { return zero_eps; }}});
  EXPECT_EQ(res[0].trial_deviation, res[1].trial_deviation);
}

TEST(Evaluation, DisabledPerturbationGivesZeroCleanDeviation) {
  const Experiment e = small_experiment();
  const Rollout r = clean_rollout(e, *e.policy);
  EvaluationRequest req = default_request(e, *e.policy, r.actions);
  req.perturbation.enabled = false;
  const VertexColors clean = e.clean_colors();
  const auto res = evaluate_conditions(e, req, {{"clean", [&](std::size_t) { return clean; }}});
  EXPECT_EQ(res[0].mean_deviation, 0.0);
  EXPECT_EQ(res[0].failure_rate, 0.0);
}

TEST(Evaluation, RejectsBadRequests) {
  const Experiment e = small_experiment();
  const Rollout r = clean_rollout(e, *e.policy);
  EvaluationRequest req = default_request(e, *e.policy, r.actions);
  req.trials = 0;
  EXPECT_THROW(evaluate_conditions(e, req, {}), std::invalid_argument);
  req = default_request(e, *e.policy, r.actions);
  const std::vector<ActionVector> short_ref(r.actions.begin(), r.actions.end() - 1);
  req.reference = &short_ref;
  EXPECT_THROW(evaluate_conditions(e, req, {}), std::invalid_argument);
}

TEST(Evaluation, GaussianControlStaysInBudget) {
  Rng rng(2, "harness-test");
  const VertexColors clean = random_colors(100, rng, 0.0, 1.0);
  const double eps = 32.0 / 255.0;
  const VertexColors g = gaussian_control_colors(clean, eps, 1.0, 5, 3);
  EXPECT_LE(linf_distance(g, clean), eps + 1e-15);
  EXPECT_EQ(g.rgb, gaussian_control_colors(clean, eps, 1.0, 5, 3).rgb);
  EXPECT_NE(g.rgb, gaussian_control_colors(clean, eps, 1.0, 5, 4).rgb);
}

class AttackRunTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    experiment_ = std::make_unique<Experiment>(small_experiment());
    run_ = std::make_unique<AttackRun>(run_attack(*experiment_));
    dir_ = std::make_unique<TempDir>("advtex_attack_run_test");
    report_ = write_attack_run(*experiment_, *run_, dir_->path);
  }
  static void TearDownTestSuite() {
    run_.reset();
    experiment_.reset();
    dir_.reset();
  }
  static std::unique_ptr<Experiment> experiment_;
  static std::unique_ptr<AttackRun> run_;
  static std::unique_ptr<TempDir> dir_;
  static Json report_;
};
std::unique_ptr<Experiment> AttackRunTest::experiment_;
std::unique_ptr<AttackRun> AttackRunTest::run_;
std::unique_ptr<TempDir> AttackRunTest::dir_;
Json AttackRunTest::report_;

TEST_F(AttackRunTest, WritesEveryArtifact) {
  for (const auto& [key, file] : report_.at("artifacts").items())
    EXPECT_TRUE(fs::exists(dir_->path / file.get<std::string>())) << key;
  EXPECT_FALSE(report_.dump().find("wall_ms") != std::string::npos);
}

TEST_F(AttackRunTest, StoredColorsRespectBudget) {
  const VertexColors stored = load_vertex_colors(dir_->path / "colors.vcol");
  EXPECT_EQ(stored.rgb, run_->colors.rgb);
  EXPECT_LE(linf_distance(stored, experiment_->clean_colors()), experiment_->config.attack.epsilon);
}

TEST_F(AttackRunTest, VerifyReportPasses) {
  const VerificationResult v = verify_report(dir_->path);
  EXPECT_TRUE(v.ok()) << (v.errors.empty() ? "" : v.errors.front());
  EXPECT_GT(v.checks, 10);
}

TEST_F(AttackRunTest, VerifyReportDetectsTampering) {
  TempDir copy("advtex_attack_run_tampered");
  fs::copy(dir_->path, copy.path, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  Json r = parse_json_file((copy.path / "report.json").string());
  r["evaluation"]["conditions"]["attack"]["failure_rate"] = r["evaluation"]["conditions"]["attack"]["failure_rate"].get<double>() + 0.25;
  write_json(copy.path / "report.json", r);
  const VerificationResult v = verify_report(copy.path);
  ASSERT_FALSE(v.ok());
  EXPECT_NE(v.errors.front().find("attacked/attack"), std::string::npos);
}

TEST_F(AttackRunTest, VerifyReportDetectsEditedTrialRow) {
  TempDir copy("advtex_attack_run_tampered_rows");
  fs::copy(dir_->path, copy.path, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  std::string frames = read_file(copy.path / "trial_frames.csv");
  const auto pos = frames.find("attacked,clean,0,0,");
  ASSERT_NE(pos, std::string::npos);
  frames.insert(pos + std::string("attacked,clean,0,0,").size(), "1");
  std::ofstream(copy.path / "trial_frames.csv", std::ios::binary) << frames;
  EXPECT_FALSE(verify_report(copy.path).ok());
}

TEST_F(AttackRunTest, ZeroSweepReproducesReportedNumbers) {
  const auto rows = evaluate_sweep(*experiment_, run_->colors, parse_sweep("camera:0"), {}, false);
  ASSERT_EQ(rows.size(), 1u);
  const auto& attack = find_condition(run_->conditions, "attack");
  const auto& clean = find_condition(run_->conditions, "clean");
  EXPECT_EQ(rows[0].attack.mean_deviation, attack.mean_deviation);
  EXPECT_EQ(rows[0].attack.failure_rate, attack.failure_rate);
  EXPECT_EQ(rows[0].clean.mean_deviation, clean.mean_deviation);
  EXPECT_EQ(rows[0].threshold, run_->threshold);

  const auto transfer = evaluate_sweep(*experiment_, run_->colors, parse_sweep("none"), {}, true);
  EXPECT_EQ(transfer[0].attack.mean_deviation, find_condition(run_->transfer_conditions, "attack").mean_deviation);
}

TEST_F(AttackRunTest, SevenBitDefenseChangesLittle) {
  const auto rows = evaluate_sweep(*experiment_, run_->colors, parse_sweep("none"), parse_defense("bitdepth:7"), false);
  const double base = find_condition(run_->conditions, "attack").mean_deviation;
  EXPECT_LE(std::abs(rows[0].attack.mean_deviation - base), 0.05 * base);
}

TEST_F(AttackRunTest, FidelityOfCleanComposite) {
  for (std::size_t t = 0; t < run_->fidelity_max_diff.size(); ++t) {
    EXPECT_LE(run_->fidelity_max_diff[t], 1e-6);
    EXPECT_GE(run_->ssim_fidelity[t], 0.999);
  }
}

TEST(AttackRun, RerunIsBitIdentical) {
  const Experiment e = small_experiment(4, 3, 2);
  TempDir a("advtex_rerun_a"), b("advtex_rerun_b");
  write_attack_run(e, run_attack(e), a.path);
  write_attack_run(e, run_attack(e), b.path);
  for (const char* f : {"report.json", "colors.vcol", "texture.ppm", "trials.csv", "actions.csv"})
    EXPECT_EQ(read_file(a.path / f), read_file(b.path / f)) << f;
}
