#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aov/env.hpp"
#include "aov/executor.hpp"
#include "aov/graph.hpp"
#include "aov/llm.hpp"

namespace aov {

// Judge score below this marks an objective as wrong.
inline constexpr int kJudgePassScore = 4;

struct TraceStep {
  std::string vertex;  // ground-truth vertex the call belongs to
  std::string agent;
  std::string tool;
  Json arguments = Json::object();  // canonical form

  Json to_json() const;
  static TraceStep from_json(const Json& json);
  bool operator==(const TraceStep&) const = default;
};

struct GroundTruth {
  AovGraph aov;
  std::vector<TraceStep> trace;
  std::vector<Assertion> final_assertions;
  // Reference objective per vertex; falls back to the vertex objective.
  std::map<std::string, std::string> objectives;
  // Terse per-vertex labels used by the implicit-objective mode.
  std::map<std::string, std::string> labels;

  std::string objective_for(const std::string& vertex) const;
  std::string label_for(const std::string& vertex) const;
};

int success(const RunResult& result, const GroundTruth& gt);

// Exact equality of (agent, tool, canonical arguments); error records never match.
bool call_matches(const ToolCallRecord& predicted, const TraceStep& expected);

struct CorrectnessDetail {
  std::int64_t matched = 0;
  std::int64_t predicted = 0;
  double value() const { return static_cast<double>(matched) / static_cast<double>(std::max<std::int64_t>(1, predicted)); }
};

// Longest order-preserving alignment of predicted against expected calls.
CorrectnessDetail correctness_detail(std::span<const ToolCallRecord> predicted, std::span<const TraceStep> expected);
double correctness(const RunResult& result, const GroundTruth& gt);

class ObjectiveJudge {
 public:
  virtual ~ObjectiveJudge() = default;
  virtual int score(const std::string& candidate, const std::string& reference) = 0;
};

struct JudgeRecord {
  std::string candidate;
  std::string reference;
  int score = 0;
  Usage usage;

  Json to_json() const;
  static JudgeRecord from_json(const Json& json);
};

// Asks a chat backend and keeps a transcript; repeated pairs are served from
// the transcript without another call.
class BackendJudge : public ObjectiveJudge {
 public:
  explicit BackendJudge(ChatBackend& backend) : backend_(backend) {}
  int score(const std::string& candidate, const std::string& reference) override;
  std::vector<JudgeRecord> transcript() const;

 private:
  ChatBackend& backend_;
  mutable std::mutex mutex_;
  std::vector<JudgeRecord> records_;
};

// Replays scores from a recorded transcript; unknown pairs throw
// JudgeFormatError.
class TranscriptJudge : public ObjectiveJudge {
 public:
  explicit TranscriptJudge(std::span<const JudgeRecord> records);
  int score(const std::string& candidate, const std::string& reference) override;

 private:
  std::map<std::pair<std::string, std::string>, int> scores_;
};

struct UnitOutcome {
  std::string agent;
  std::vector<std::string> vertices;
  bool ok = true;
  std::vector<std::string> reasons;
};

struct FlowScoreDetail {
  std::vector<UnitOutcome> units;
  std::map<std::string, std::string> matching;  // gt vertex -> candidate vertex

  std::size_t error_free() const;
  double value() const;
};

// Units are the ground-truth agent groups. Ground-truth vertices are matched
// greedily in DFS order to unmatched candidate vertices of the same agent
// whose objective the judge scores at least kJudgePassScore. A unit errs when
// one of its vertices, or an edge into one of its vertices, has no
// counterpart.
FlowScoreDetail flow_score_detail(const AovGraph& candidate, const GroundTruth& gt, ObjectiveJudge& judge);
double flow_score(const AovGraph& candidate, const GroundTruth& gt, ObjectiveJudge& judge);

class MismatchedTaskSets : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TaskMetrics {
  std::string task_id;
  int success = 0;
  double correctness = 0.0;
  std::optional<double> flow_score;  // graph strategies only
  std::int64_t tokens = 0;
  std::optional<std::string> error;  // cell could not run

  Json to_json() const;
  static TaskMetrics from_json(const Json& json);
};

struct CellReport {
  std::string strategy;
  std::string model;
  std::vector<TaskMetrics> per_task;
  double success_rate = 0.0;
  double correctness_rate = 0.0;
  std::optional<double> flow_score;
  double mean_tokens = 0.0;

  Json to_json() const;
  static CellReport from_json(const Json& json);
};

struct MetricsReport {
  std::string judge;
  std::vector<CellReport> cells;

  const CellReport* cell(std::string_view strategy, std::string_view model) const;
  Json to_json() const;
  static MetricsReport from_json(const Json& json);
  // Strategy x model table with success, correctness, flow score and tokens.
  std::string render_table() const;
};

struct CellInput {
  std::string strategy;
  std::string model;
  std::vector<TaskMetrics> per_task;
};

// Arithmetic means per cell; every cell must cover the same task ids.
MetricsReport aggregate(std::vector<CellInput> cells, std::string judge = {});

// 0.9773 -> "97.73%".
std::string format_percent(double fraction);

}  // namespace aov
