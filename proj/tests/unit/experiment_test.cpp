#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "aov/experiment.hpp"
#include "support.hpp"

namespace aov {
namespace {

using testing::bundled_suite;
using testing::source_path;
using testing::TempDir;

Json base_config() {
  return Json::parse(R"({
    "suite": "suite",
    "backends": [{"name": "replay", "kind": "scripted", "script": "ground_truth"}]
  })");
}

// Standard 64-bit FNV-1a.
std::uint64_t reference_fnv(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig replay_config(std::vector<StrategyKind> strategies) {
  ExperimentConfig c = load_experiment_config(source_path("data/experiments/replay.json"));
  c.strategies = std::move(strategies);
  return c;
}

TEST(Config, BundledReplayConfig) {
  const ExperimentConfig c = load_experiment_config(source_path("data/experiments/replay.json"));
  EXPECT_TRUE(std::filesystem::equivalent(c.suite, source_path("data/suite")));
  EXPECT_EQ(c.strategies.size(), 5u);
  ASSERT_EQ(c.backends.size(), 1u);
  EXPECT_EQ(c.backends[0].script, "ground_truth");
  ASSERT_TRUE(c.judge.has_value());
  EXPECT_EQ(c.judge->script, "constant:5");
  EXPECT_TRUE(c.oracle_fewshot);
  EXPECT_EQ(c.parallelism, 1);
}

TEST(Config, DefaultsResolutionAndRoundTrip) {
  Json j = base_config();
  j["backends"].push_back({{"name", "file"}, {"kind", "scripted"}, {"script", "scripts/a.json"}});
  j["fault_injection"] = {{"count", 2}, {"recovery", "refine"}};
  j["output_dir"] = "out";
  const ExperimentConfig c = ExperimentConfig::from_json(j, "/base");
  EXPECT_EQ(c.suite, "/base/suite");
  EXPECT_EQ(c.backends[1].script, "/base/scripts/a.json");
  EXPECT_EQ(c.output_dir, "/base/out");
  EXPECT_EQ(c.strategies, all_strategies());
  ASSERT_TRUE(c.injection.has_value());
  EXPECT_EQ(c.injection->count, 2);
  EXPECT_EQ(c.injection->recovery, Recovery::kRefine);
  EXPECT_EQ(c.round_cap, kGroupRoundCap);
  EXPECT_EQ(ExperimentConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(Config, Rejections) {
  auto with = [](const char* key, Json value) {
    Json j = base_config();
    j[key] = std::move(value);
    return j;
  };
  EXPECT_THROW(ExperimentConfig::from_json(with("temperature", 0.2)), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(with("strategies", {"magentic"})), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(with("backends", Json::array())), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(with("parallelism", 0)), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(with("fault_injection", {{"count", 1}, {"recovery", "pray"}})),
               std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(Json::array()), std::invalid_argument);
  TempDir dir;
  EXPECT_THROW(load_experiment_config(dir.write("x.json", "{oops")), std::invalid_argument);
}

TEST(RunKey, HexFnvOfTheCellIdentity) {
  const std::string key = run_key("geo-02", "geoflow", "replay", 7);
  char expected[17];
  std::snprintf(expected, sizeof expected, "%016llx",
                static_cast<unsigned long long>(reference_fnv("geo-02\ngeoflow\nreplay\n7")));
  EXPECT_EQ(key, expected);
  EXPECT_NE(key, run_key("geo-02", "geoflow", "replay", 8));
  EXPECT_NE(key, run_key("geo-03", "geoflow", "replay", 7));
  EXPECT_NE(key, run_key("geo-02", "sequential", "replay", 7));
  EXPECT_NE(key, run_key("geo-02", "geoflow", "other", 7));
}

TEST(Cells, OracleIsUsedAsFewShotAndJudgedGraphsAreScored) {
  const ExperimentConfig config = replay_config({StrategyKind::kGeoflow});
  auto judge = judge_backend(*config.judge);
  const RunRecord r =
      execute_cell(*bundled_suite().find("geo-03"), StrategyKind::kGeoflow, config.backends[0], config, bundled_suite(),
                   judge.get());
  EXPECT_FALSE(r.error.has_value());
  EXPECT_TRUE(r.judged);
  EXPECT_EQ(r.judge_transcript.size(), r.task.ground_truth.aov.size());
  EXPECT_EQ(r.key, run_key("geo-03", "geoflow", "replay", 0));
  const TaskMetrics m = score_record(r);
  EXPECT_EQ(m.success, 1);
  EXPECT_DOUBLE_EQ(m.correctness, 1.0);
  ASSERT_TRUE(m.flow_score.has_value());
  EXPECT_DOUBLE_EQ(*m.flow_score, 1.0);
  EXPECT_EQ(m.tokens, r.result.usage_total.total());
}

TEST(Cells, MissingScriptBecomesARecordedError) {
  ExperimentConfig config = replay_config({StrategyKind::kSequential});
  BackendConfig missing;
  missing.name = "missing";
  missing.script = "/nonexistent/script.json";
  const RunRecord r =
      execute_cell(*bundled_suite().find("geo-02"), StrategyKind::kSequential, missing, config, bundled_suite(), nullptr);
  ASSERT_TRUE(r.error.has_value());
  EXPECT_EQ(score_record(r).success, 0);
}

TEST(Experiment, DeterministicAcrossRunsAndParallelism) {
  ExperimentConfig config = replay_config(all_strategies());
  const ExperimentOutcome a = run_experiment(config);
  config.parallelism = 4;
  const ExperimentOutcome b = run_experiment(config);
  EXPECT_EQ(a.report.to_json().dump(), b.report.to_json().dump());
  ASSERT_EQ(a.report.cells.size(), 5u);
  for (const auto& cell : a.report.cells) {
    EXPECT_EQ(cell.per_task.size(), 19u) << cell.strategy;
    EXPECT_DOUBLE_EQ(cell.success_rate, 1.0) << cell.strategy;
    EXPECT_DOUBLE_EQ(cell.correctness_rate, 1.0) << cell.strategy;
  }
  EXPECT_EQ(a.report.cells[0].strategy, "geoflow");
  EXPECT_TRUE(a.record_paths.empty());
}

TEST(Records, StoreLoadAndReportFromDisk) {
  TempDir dir;
  ExperimentConfig config = replay_config({StrategyKind::kGeoflow, StrategyKind::kSwarm});
  config.output_dir = dir.str();
  const ExperimentOutcome out = run_experiment(config);
  EXPECT_EQ(out.record_paths.size(), 38u);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "report.txt"));

  const auto records = load_records(dir.str());
  ASSERT_EQ(records.size(), 38u);
  const MetricsReport again = report_from_records(records, "judge");
  EXPECT_EQ(again.to_json().dump(), out.report.to_json().dump());

  // Identical content reuses the path; different content gets a new variant.
  EXPECT_EQ(store_record(out.records[0], dir.str()), out.record_paths[0]);
  RunRecord changed = out.records[0];
  changed.result.usage_total.prompt_tokens += 1;
  const std::string second = store_record(changed, dir.str());
  EXPECT_NE(second, out.record_paths[0]);
  const auto reloaded = load_records(dir.str());
  const auto it = std::find_if(reloaded.begin(), reloaded.end(), [&](const RunRecord& r) { return r.key == changed.key; });
  ASSERT_NE(it, reloaded.end());
  EXPECT_EQ(it->result.usage_total, changed.result.usage_total);
}

TEST(Records, RoundTrip) {
  const ExperimentConfig config = replay_config({StrategyKind::kGroupChat});
  const RunRecord r = execute_cell(*bundled_suite().find("geo-07"), StrategyKind::kGroupChat, config.backends[0], config,
                                   bundled_suite(), nullptr);
  const RunRecord back = RunRecord::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_EQ(score_record(back).to_json(), score_record(r).to_json());
  EXPECT_FALSE(score_record(r).flow_score.has_value());
}

}  // namespace
}  // namespace aov
