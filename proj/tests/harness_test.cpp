#include "dmq/env.hpp"
#include "dmq/errors.hpp"
#include "dmq/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

using namespace dmq;
namespace fs = std::filesystem;

namespace {

Json lock_config(std::uint64_t budget = 1'000'000) {
  return Json{{"instance", {{"generator", "lock"}, {"horizon", 3}, {"actions", 2}}},
              {"seeds", {1, 2}},
              {"budget", budget},
              {"eval_episodes", 1000}};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dmq_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(Config, ParsesDefaults) {
  const ExperimentConfig c = ExperimentConfig::from_json(lock_config());
  EXPECT_EQ(c.instance.generator, "lock");
  EXPECT_EQ(c.instance.key, "pattern");
  EXPECT_EQ(c.params.mode, ParamMode::Practical);
  EXPECT_EQ(c.params.practical.samples_per_policy, 200u);
  EXPECT_EQ(c.seeds.size(), 2u);
  EXPECT_DOUBLE_EQ(c.success_threshold, 0.05);
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  Json j = lock_config();
  j["bogus"] = 1;
  EXPECT_THROW(ExperimentConfig::from_json(j), InputError);

  j = lock_config();
  j["instance"]["states_per_level"] = 4;  // not a lock key
  EXPECT_THROW(ExperimentConfig::from_json(j), InputError);

  j = lock_config();
  j["budget"] = "lots";
  EXPECT_THROW(ExperimentConfig::from_json(j), InputError);

  j = lock_config();
  j["params"] = {{"mode", "theory"}, {"lambda_r", -1.0}};
  EXPECT_THROW(ExperimentConfig::from_json(j), InputError);

  j = lock_config();
  j["params"] = {{"mode", "fast"}};
  EXPECT_THROW(ExperimentConfig::from_json(j), InputError);

  j = lock_config();
  j["seeds"] = Json::array();
  EXPECT_THROW(ExperimentConfig::from_json(j), InputError);

  j = lock_config();
  j["instance"]["generator"] = "maze";
  EXPECT_THROW(ExperimentConfig::from_json(j), InputError);
}

TEST(Config, LoadReportsMissingFileAndBadJson) {
  EXPECT_THROW(ExperimentConfig::load("/nonexistent/config.json"), IoError);
  const fs::path dir = scratch_dir("badjson");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << "{ not json";
  EXPECT_THROW(ExperimentConfig::load(dir / "c.json"), InputError);
  fs::remove_all(dir);
}

TEST(PrepareInstance, CurationMeetsMinGap) {
  InstanceConfig c;
  c.min_gap = 0.05;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const PreparedInstance p = prepare_instance(c, seed);
    EXPECT_GE(p.instance.truth.min_gap, 0.05);
    EXPECT_GE(p.attempts, 1);
  }
}

TEST(PrepareInstance, GivesUpAfterMaxAttempts) {
  InstanceConfig c;
  c.min_gap = 0.99;
  c.max_attempts = 5;
  EXPECT_THROW(prepare_instance(c, 1), InputError);
}

TEST(PrepareInstance, SeededLockKeyDependsOnSeed) {
  InstanceConfig c;
  c.generator = "lock";
  c.horizon = 12;
  c.actions = 3;
  c.key = "seeded";
  const auto a = prepare_instance(c, 1).instance.truth.optimal_policy.table();
  const auto b = prepare_instance(c, 1).instance.truth.optimal_policy.table();
  const auto other = prepare_instance(c, 2).instance.truth.optimal_policy.table();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, other);
}

TEST(RunSingle, RefusesNonRealizableInstance) {
  Rng rng(3);
  const Instance inst = gen_random_tabular(TabularSpec{}, rng);
  MdpTables t = inst.mdp.tables();
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (auto& level : t.features)
    for (auto& phi : level) phi = Vector::Constant(1, u(rng));
  EpisodicMdp mdp(std::move(t));
  GroundTruth truth = value_iteration_exact(mdp);
  const PreparedInstance prepared{Instance{std::move(mdp), std::move(truth)}, 1};
  try {
    run_single(ExperimentConfig::from_json(lock_config()), prepared, 1);
    FAIL() << "expected RealizabilityError";
  } catch (const RealizabilityError& e) {
    EXPECT_GT(e.residual(), kRealizabilityTolerance);
  }
}

TEST(RunExperiment, LockRecordsAreConsistent) {
  const ExperimentConfig c = ExperimentConfig::from_json(lock_config());
  const auto records = run_experiment(c);
  ASSERT_EQ(records.size(), 2u);
  for (const auto& r : records) {
    EXPECT_TRUE(r.complete);
    EXPECT_DOUBLE_EQ(r.v_star, 1.0);
    EXPECT_EQ(r.trajectories, r.checking_trajectories + r.labeled_trajectories + r.refresh_trajectories);
    EXPECT_EQ(r.success, r.value_exact >= r.v_star - c.success_threshold);
    EXPECT_DOUBLE_EQ(r.suboptimality, r.v_star - r.value_mc_mean);
    EXPECT_DOUBLE_EQ(r.suboptimality_exact, r.v_star - r.value_exact);
    EXPECT_FALSE(r.learning_curve.empty());
    for (std::size_t i = 1; i < r.learning_curve.size(); ++i)
      EXPECT_GE(r.learning_curve[i].best_value, r.learning_curve[i - 1].best_value);
  }
}

TEST(RunExperiment, TinyBudgetGivesIncompleteRecordsAndNullRate) {
  const ExperimentConfig c = ExperimentConfig::from_json(lock_config(1));
  const auto records = run_experiment(c);
  for (const auto& r : records) {
    EXPECT_FALSE(r.complete);
    EXPECT_FALSE(r.success);
    EXPECT_EQ(r.trajectories, 1u);
  }
  const Json s = summarize(records, c.success_threshold);
  EXPECT_TRUE(s["success_rate"].is_null());
  EXPECT_TRUE(s["mean_suboptimality"].is_null());
  EXPECT_EQ(s["incomplete"].get<int>(), 2);
}

TEST(RunExperiment, RecordsAreDeterministic) {
  Json j = lock_config();
  j["instance"] = {{"generator", "tabular"}, {"min_gap", 0.05}};
  j["seeds"] = {7};
  const ExperimentConfig c = ExperimentConfig::from_json(j);
  const auto a = run_experiment(c);
  const auto b = run_experiment(c);
  EXPECT_EQ(record_to_json(a[0], false).dump(), record_to_json(b[0], false).dump());
}

TEST(RunExperiment, TheoryModeRunsOutOfBudget) {
  Json j = lock_config(20'000);
  j["params"] = {{"mode", "theory"}, {"epsilon", 0.1}};
  j["seeds"] = {1};
  const auto records = run_experiment(ExperimentConfig::from_json(j));
  EXPECT_FALSE(records[0].complete);
  EXPECT_EQ(records[0].schedule["mode"], "theory");
}

TEST(RecordJson, RoundTrip) {
  const auto records = run_experiment(ExperimentConfig::from_json(lock_config()));
  for (const auto& r : records) {
    const RunRecord back = record_from_json(Json::parse(record_to_json(r).dump()));
    EXPECT_EQ(back, r);
  }
  EXPECT_THROW(record_from_json(Json{{"seed", 1}}), InputError);
}

TEST(EmitMetrics, WritesThreeFiles) {
  const ExperimentConfig c = ExperimentConfig::from_json(lock_config());
  const auto records = run_experiment(c);
  const fs::path dir = scratch_dir("emit");
  emit_metrics(records, dir, c.success_threshold);

  const auto jsonl = read_lines(dir / "records.jsonl");
  ASSERT_EQ(jsonl.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) EXPECT_EQ(record_from_json(Json::parse(jsonl[i])), records[i]);

  // One CSV row per learn_level completion: H outer completions plus one per trigger.
  const auto csv = read_lines(dir / "learning_curve.csv");
  ASSERT_FALSE(csv.empty());
  EXPECT_EQ(csv[0], "seed,trajectories,level,value,best_value");
  std::size_t expected_rows = 0;
  for (const auto& r : records) expected_rows += 3 + r.triggers.size();
  EXPECT_EQ(csv.size() - 1, expected_rows);

  std::ifstream summary(dir / "summary.json");
  const Json s = Json::parse(summary);
  EXPECT_EQ(s["runs"].get<int>(), 2);
  fs::remove_all(dir);
}

TEST(EmitMetrics, UnwritableDirectoryFailsBeforeWriting) {
  const auto records = run_experiment(ExperimentConfig::from_json(lock_config(1)));
  EXPECT_THROW(emit_metrics(records, "/proc/dmq_cannot_write_here", 0.05), IoError);
}
