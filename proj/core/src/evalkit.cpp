#include "aov/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace aov {

Json TraceStep::to_json() const {
  return {{"vertex", vertex}, {"agent", agent}, {"tool", tool}, {"arguments", arguments}};
}

TraceStep TraceStep::from_json(const Json& json) {
  return {json.value("vertex", std::string()), json.at("agent").get<std::string>(), json.at("tool").get<std::string>(),
          json.value("arguments", Json::object())};
}

std::string GroundTruth::objective_for(const std::string& vertex) const {
  if (auto it = objectives.find(vertex); it != objectives.end()) return it->second;
  const Subtask* t = aov.find(vertex);
  return t ? t->objective : std::string();
}

std::string GroundTruth::label_for(const std::string& vertex) const {
  if (auto it = labels.find(vertex); it != labels.end()) return it->second;
  return objective_for(vertex);
}

int success(const RunResult& result, const GroundTruth& gt) {
  if (!result.completed) return 0;
  return assert_final_state(result.final_state, gt.final_assertions).ok ? 1 : 0;
}

bool call_matches(const ToolCallRecord& predicted, const TraceStep& expected) {
  return predicted.ok() && predicted.agent == expected.agent && predicted.tool == expected.tool &&
         predicted.arguments == expected.arguments;
}

CorrectnessDetail correctness_detail(std::span<const ToolCallRecord> predicted, std::span<const TraceStep> expected) {
  const std::size_t n = predicted.size();
  const std::size_t m = expected.size();
  std::vector<std::vector<std::int64_t>> lcs(n + 1, std::vector<std::int64_t>(m + 1, 0));
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      lcs[i][j] = call_matches(predicted[i - 1], expected[j - 1]) ? lcs[i - 1][j - 1] + 1
                                                                  : std::max(lcs[i - 1][j], lcs[i][j - 1]);
    }
  }
  return {lcs[n][m], static_cast<std::int64_t>(n)};
}

double correctness(const RunResult& result, const GroundTruth& gt) {
  return correctness_detail(result.trace, gt.trace).value();
}

Json JudgeRecord::to_json() const {
  return {{"candidate", candidate}, {"reference", reference}, {"score", score}, {"usage", aov::to_json(usage)}};
}

JudgeRecord JudgeRecord::from_json(const Json& json) {
  return {json.at("candidate").get<std::string>(), json.at("reference").get<std::string>(),
          json.at("score").get<int>(), usage_from_json(json.value("usage", Json::object()))};
}

int BackendJudge::score(const std::string& candidate, const std::string& reference) {
  std::lock_guard lock(mutex_);
  for (const auto& r : records_) {
    if (r.candidate == candidate && r.reference == reference) return r.score;
  }
  const JudgeVerdict verdict = judge_objective(backend_, candidate, reference);
  records_.push_back({candidate, reference, verdict.score, verdict.usage});
  return verdict.score;
}

std::vector<JudgeRecord> BackendJudge::transcript() const {
  std::lock_guard lock(mutex_);
  return records_;
}

TranscriptJudge::TranscriptJudge(std::span<const JudgeRecord> records) {
  for (const auto& r : records) scores_.emplace(std::make_pair(r.candidate, r.reference), r.score);
}

int TranscriptJudge::score(const std::string& candidate, const std::string& reference) {
  auto it = scores_.find({candidate, reference});
  if (it == scores_.end()) throw JudgeFormatError("judge transcript has no score for candidate '" + candidate + "'");
  return it->second;
}

std::size_t FlowScoreDetail::error_free() const {
  return static_cast<std::size_t>(std::count_if(units.begin(), units.end(), [](const UnitOutcome& u) { return u.ok; }));
}

double FlowScoreDetail::value() const {
  if (units.empty()) return 1.0;
  return static_cast<double>(error_free()) / static_cast<double>(units.size());
}

FlowScoreDetail flow_score_detail(const AovGraph& candidate, const GroundTruth& gt, ObjectiveJudge& judge) {
  FlowScoreDetail detail;
  const std::vector<std::string> cand_order = dfs_order(candidate);
  std::set<std::string> used;

  for (const auto& gt_id : dfs_order(gt.aov)) {
    const Subtask* g = gt.aov.find(gt_id);
    const std::string reference = gt.objective_for(gt_id);
    for (const auto& cand_id : cand_order) {
      if (used.count(cand_id)) continue;
      const Subtask* c = candidate.find(cand_id);
      if (c->agent != g->agent) continue;
      if (judge.score(c->objective, reference) >= kJudgePassScore) {
        detail.matching[gt_id] = cand_id;
        used.insert(cand_id);
        break;
      }
    }
  }

  for (const auto& group : group_by_agent_dfs(gt.aov)) {
    UnitOutcome unit{group.agent, group.subtasks, true, {}};
    for (const auto& gt_id : group.subtasks) {
      auto mb = detail.matching.find(gt_id);
      if (mb == detail.matching.end()) {
        unit.ok = false;
        unit.reasons.push_back("no counterpart for vertex '" + gt_id + "'");
        continue;
      }
      for (const auto& pred : gt.aov.find(gt_id)->prev) {
        auto ma = detail.matching.find(pred);
        const Subtask* cb = candidate.find(mb->second);
        const bool has_edge = ma != detail.matching.end() &&
                              std::find(cb->prev.begin(), cb->prev.end(), ma->second) != cb->prev.end();
        if (!has_edge) {
          unit.ok = false;
          unit.reasons.push_back("no counterpart for edge '" + pred + "->" + gt_id + "'");
        }
      }
    }
    detail.units.push_back(std::move(unit));
  }
  return detail;
}

double flow_score(const AovGraph& candidate, const GroundTruth& gt, ObjectiveJudge& judge) {
  return flow_score_detail(candidate, gt, judge).value();
}

Json TaskMetrics::to_json() const {
  Json out = {{"task_id", task_id}, {"success", success}, {"correctness", correctness}, {"tokens", tokens}};
  out["flow_score"] = flow_score ? Json(*flow_score) : Json(nullptr);
  out["error"] = error ? Json(*error) : Json(nullptr);
  return out;
}

TaskMetrics TaskMetrics::from_json(const Json& json) {
  TaskMetrics m;
  m.task_id = json.at("task_id").get<std::string>();
  m.success = json.at("success").get<int>();
  m.correctness = json.at("correctness").get<double>();
  m.tokens = json.at("tokens").get<std::int64_t>();
  if (json.contains("flow_score") && !json.at("flow_score").is_null()) m.flow_score = json.at("flow_score").get<double>();
  if (json.contains("error") && !json.at("error").is_null()) m.error = json.at("error").get<std::string>();
  return m;
}

Json CellReport::to_json() const {
  Json out = {{"strategy", strategy},
              {"model", model},
              {"success_rate", success_rate},
              {"correctness_rate", correctness_rate},
              {"mean_tokens", mean_tokens}};
  out["flow_score"] = flow_score ? Json(*flow_score) : Json(nullptr);
  out["per_task"] = Json::array();
  for (const auto& t : per_task) out["per_task"].push_back(t.to_json());
  return out;
}

CellReport CellReport::from_json(const Json& json) {
  CellReport c;
  c.strategy = json.at("strategy").get<std::string>();
  c.model = json.at("model").get<std::string>();
  c.success_rate = json.at("success_rate").get<double>();
  c.correctness_rate = json.at("correctness_rate").get<double>();
  c.mean_tokens = json.at("mean_tokens").get<double>();
  if (json.contains("flow_score") && !json.at("flow_score").is_null()) c.flow_score = json.at("flow_score").get<double>();
  for (const auto& t : json.at("per_task")) c.per_task.push_back(TaskMetrics::from_json(t));
  return c;
}

const CellReport* MetricsReport::cell(std::string_view strategy, std::string_view model) const {
  for (const auto& c : cells) {
    if (c.strategy == strategy && c.model == model) return &c;
  }
  return nullptr;
}

Json MetricsReport::to_json() const {
  Json out = {{"judge", judge}, {"cells", Json::array()}};
  for (const auto& c : cells) out["cells"].push_back(c.to_json());
  return out;
}

MetricsReport MetricsReport::from_json(const Json& json) {
  MetricsReport r;
  r.judge = json.value("judge", std::string());
  for (const auto& c : json.at("cells")) r.cells.push_back(CellReport::from_json(c));
  return r;
}

std::string MetricsReport::render_table() const {
  std::ostringstream out;
  auto row = [&out](const std::string& a, const std::string& b, const std::string& c, const std::string& d,
                    const std::string& e, const std::string& f) {
    out << std::left << std::setw(20) << a << std::setw(24) << b << std::right << std::setw(10) << c
        << std::setw(13) << d << std::setw(12) << e << std::setw(12) << f << "\n";
  };
  row("strategy", "model", "success", "correctness", "flow score", "tokens");
  for (const auto& c : cells) {
    std::ostringstream tokens;
    tokens << std::fixed << std::setprecision(0) << c.mean_tokens;
    row(c.strategy, c.model, format_percent(c.success_rate), format_percent(c.correctness_rate),
        c.flow_score ? format_percent(*c.flow_score) : "-", tokens.str());
  }
  if (!judge.empty()) out << "judge: " << judge << "\n";
  return out.str();
}

MetricsReport aggregate(std::vector<CellInput> inputs, std::string judge) {
  MetricsReport report;
  report.judge = std::move(judge);
  std::optional<std::set<std::string>> reference;
  for (auto& in : inputs) {
    std::set<std::string> ids;
    for (const auto& t : in.per_task) {
      if (!ids.insert(t.task_id).second) {
        throw MismatchedTaskSets("task '" + t.task_id + "' appears twice in " + in.strategy + "/" + in.model);
      }
    }
    if (!reference) {
      reference = ids;
    } else if (*reference != ids) {
      throw MismatchedTaskSets("cell " + in.strategy + "/" + in.model + " covers a different task set");
    }

    CellReport cell;
    cell.strategy = std::move(in.strategy);
    cell.model = std::move(in.model);
    cell.per_task = std::move(in.per_task);
    const double n = static_cast<double>(cell.per_task.size());
    if (n > 0) {
      double s = 0, c = 0, tok = 0, flow = 0;
      std::size_t flow_n = 0;
      for (const auto& t : cell.per_task) {
        s += t.success;
        c += t.correctness;
        tok += static_cast<double>(t.tokens);
        if (t.flow_score) {
          flow += *t.flow_score;
          ++flow_n;
        }
      }
      cell.success_rate = s / n;
      cell.correctness_rate = c / n;
      cell.mean_tokens = tok / n;
      if (flow_n > 0) cell.flow_score = flow / static_cast<double>(flow_n);
    }
    report.cells.push_back(std::move(cell));
  }
  return report;
}

std::string format_percent(double fraction) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << fraction * 100.0 << "%";
  return out.str();
}

}  // namespace aov
