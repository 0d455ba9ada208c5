#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aov/evalkit.hpp"
#include "aov/executor.hpp"
#include "aov/script_gen.hpp"
#include "aov/suite.hpp"

namespace aov {

struct FaultInjection {
  int count = 0;
  Recovery recovery = Recovery::kRetry;
};

struct ExperimentConfig {
  std::string suite;
  std::vector<StrategyKind> strategies = all_strategies();
  std::vector<BackendConfig> backends;
  std::optional<BackendConfig> judge;
  FaultPlan faults;                       // applied to every task
  std::optional<FaultInjection> injection;  // generated per task
  bool oracle_fewshot = true;
  int parallelism = 1;
  std::uint64_t seed = 0;
  int round_cap = kGroupRoundCap;
  std::string output_dir;  // empty: nothing written

  // Relative paths resolve against `base_dir`.
  static ExperimentConfig from_json(const Json& json, const std::string& base_dir = {});
  Json to_json() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

// Chat backend for one (task, strategy) cell. Scripted configs may name a
// script file, a directory laid out as <dir>/<task>/<strategy>.json, or
// "ground_truth" to replay the task's reference decisions.
std::unique_ptr<ChatBackend> backend_for(const BackendConfig& config, const TaskCase& task, StrategyKind kind,
                                         const AgentCatalog& catalog, const ScriptOptions& options);

// Judge backend; scripted judges also accept "constant:<score>".
std::unique_ptr<ChatBackend> judge_backend(const BackendConfig& config);

struct RunRecord {
  std::string key;
  std::string task_id;
  std::string strategy;
  std::string backend;
  std::uint64_t seed = 0;
  FaultPlan faults;
  TaskCase task;
  RunResult result;
  bool judged = false;
  std::vector<JudgeRecord> judge_transcript;
  std::optional<std::string> error;

  Json to_json() const;
  static RunRecord from_json(const Json& json, const AgentCatalog& catalog = catalog_default());
};

// Content address of a run: hex FNV-1a of task, strategy, backend and seed.
std::string run_key(const std::string& task_id, const std::string& strategy, const std::string& backend,
                    std::uint64_t seed);

// Metrics recomputed from a record alone (judge scores from its transcript).
TaskMetrics score_record(const RunRecord& record);

// Executes one cell; with a judge, the generated graph's objectives are
// rated and the transcript stored for scoring.
RunRecord execute_cell(const TaskCase& task, StrategyKind kind, const BackendConfig& backend,
                       const ExperimentConfig& config, const Suite& suite, ChatBackend* judge);

struct ExperimentOutcome {
  MetricsReport report;
  std::vector<RunRecord> records;
  std::vector<std::string> record_paths;
};

ExperimentOutcome run_experiment(const ExperimentConfig& config);

// Writes a record under <dir>/runs/ without touching existing files; returns
// the path used.
std::string store_record(const RunRecord& record, const std::string& results_dir);

std::vector<RunRecord> load_records(const std::string& results_dir, const AgentCatalog& catalog = catalog_default());

// Aggregates stored records; cells ordered by strategy then backend, tasks by id.
MetricsReport report_from_records(const std::vector<RunRecord>& records, const std::string& judge = {});

void write_report(const MetricsReport& report, const std::string& results_dir);

}  // namespace aov
