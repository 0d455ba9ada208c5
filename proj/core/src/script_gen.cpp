#include "aov/script_gen.hpp"

#include <map>

namespace aov {

namespace {

constexpr std::string_view kPlannerPrefix = "You are a workflow planner";
constexpr std::string_view kOrchestratorPrefix = "You are the orchestrator";

std::string agent_prefix(const std::string& agent) { return "You are " + agent + "."; }

class Builder {
 public:
  explicit Builder(const FaultPlan& faults) : faults_(faults) {}

  void text(std::string_view prefix, std::string content, std::optional<Role> role = std::nullopt) {
    ScriptEntry e;
    e.match.content_prefix = std::string(prefix);
    e.match.role = role;
    e.reply = ChatMessage::assistant(std::move(content));
    script_.entries.push_back(std::move(e));
  }

  void call(std::string_view prefix, const std::string& tool, Json arguments) {
    ScriptEntry e;
    e.match.content_prefix = std::string(prefix);
    e.match.tool_name = tool;
    e.reply = ChatMessage::assistant("", {ToolCall{"call_" + std::to_string(++calls_), tool, std::move(arguments)}});
    script_.entries.push_back(std::move(e));
  }

  // Emits one tool-call turn per step. Returns false when the agent gives up
  // after an injected error (refine recovery).
  bool steps(const std::string& agent, const std::vector<const TraceStep*>& steps, bool give_up) {
    const std::string prefix = agent_prefix(agent);
    for (const TraceStep* s : steps) {
      while (true) {
        const int occurrence = ++occurrences_[{s->agent, s->tool}];
        call(prefix, s->tool, s->arguments);
        const FaultEntry* f = faults_.match(s->agent, s->tool, occurrence);
        if (f == nullptr || f->effect != FaultEffect::kError) break;
        if (give_up) {
          text(prefix, "The " + s->tool + " call failed; returning control to the planner.");
          return false;
        }
      }
    }
    return true;
  }

  void finish(const std::string& agent, const std::vector<const TraceStep*>& steps) {
    if (steps.empty()) {
      text(agent_prefix(agent), "No API calls are needed from me for this task.");
      return;
    }
    std::string summary = "Completed:";
    for (std::size_t i = 0; i < steps.size(); ++i) summary += (i ? ", " : " ") + steps[i]->tool;
    summary += ".";
    text(agent_prefix(agent), std::move(summary));
  }

  Script take() { return std::move(script_); }

 private:
  const FaultPlan& faults_;
  Script script_;
  int calls_ = 0;
  std::map<std::pair<std::string, std::string>, int> occurrences_;
};

std::vector<const TraceStep*> steps_where(const GroundTruth& gt, auto pred) {
  std::vector<const TraceStep*> out;
  for (const auto& s : gt.trace) {
    if (pred(s)) out.push_back(&s);
  }
  return out;
}

// Maximal runs of consecutive steps by the same agent.
std::vector<std::vector<const TraceStep*>> agent_runs(const GroundTruth& gt) {
  std::vector<std::vector<const TraceStep*>> runs;
  for (const auto& s : gt.trace) {
    if (runs.empty() || runs.back().front()->agent != s.agent) runs.emplace_back();
    runs.back().push_back(&s);
  }
  return runs;
}

void graph_script(Builder& b, const GroundTruth& gt, PlanMode mode, const ScriptOptions& options) {
  AovGraph graph = planned_graph(gt, mode);
  b.text(kPlannerPrefix, serialize(graph), Role::kUser);
  const bool give_up = options.recovery == Recovery::kRefine;
  for (const auto& id : topo_order(graph)) {
    const std::string agent = graph.find(id)->agent;
    const auto steps = steps_where(gt, [&](const TraceStep& s) { return s.vertex == id; });
    while (!b.steps(agent, steps, give_up)) {
      b.text(kPlannerPrefix, serialize(graph), Role::kUser);
    }
    b.finish(agent, steps);
    graph.find(id)->status = Status::kDone;
  }
}

void sequential_script(Builder& b, const GroundTruth& gt, const AgentCatalog& catalog) {
  for (const auto& agent : catalog.agents()) {
    const auto steps = steps_where(gt, [&](const TraceStep& s) { return s.agent == agent.name; });
    b.steps(agent.name, steps, false);
    b.finish(agent.name, steps);
  }
}

void group_chat_script(Builder& b, const GroundTruth& gt) {
  std::string done;
  for (const auto& run : agent_runs(gt)) {
    const std::string& agent = run.front()->agent;
    b.text(kOrchestratorPrefix,
           "Progress: " + (done.empty() ? std::string("nothing yet") : done) + ". Next: " + agent + ".", Role::kUser);
    b.text(kOrchestratorPrefix, agent, Role::kUser);
    b.steps(agent, run, false);
    b.finish(agent, run);
    done += (done.empty() ? "" : ", ") + agent;
  }
  b.text(kOrchestratorPrefix, "Progress: " + (done.empty() ? std::string("nothing needed") : done) +
                                  ". The task is complete.",
         Role::kUser);
  b.text(kOrchestratorPrefix, std::string(kTerminate), Role::kUser);
}

void swarm_script(Builder& b, const GroundTruth& gt) {
  const auto runs = agent_runs(gt);
  const std::string triage_prefix = agent_prefix(std::string(kTriageAgent));
  if (runs.empty()) {
    b.text(triage_prefix, "No agent needs to act on this task.");
    return;
  }
  const std::string first = std::string(kTransferPrefix) + runs.front().front()->agent;
  b.call(triage_prefix, first, Json::object());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string& agent = runs[i].front()->agent;
    b.steps(agent, runs[i], false);
    if (i + 1 < runs.size()) {
      b.call(agent_prefix(agent), std::string(kTransferPrefix) + runs[i + 1].front()->agent, Json::object());
    } else {
      b.finish(agent, runs[i]);
    }
  }
}

}  // namespace

std::string_view to_string(Recovery recovery) { return recovery == Recovery::kRetry ? "retry" : "refine"; }

std::optional<Recovery> parse_recovery(std::string_view text) {
  if (text == "retry") return Recovery::kRetry;
  if (text == "refine") return Recovery::kRefine;
  return std::nullopt;
}

AovGraph planned_graph(const GroundTruth& gt, PlanMode mode) {
  AovGraph graph = gt.aov;
  for (auto& t : graph.mutable_tasks()) {
    t.status = Status::kPending;
    t.objective = mode == PlanMode::kGeoflow ? gt.objective_for(t.id) : gt.label_for(t.id);
  }
  return graph;
}

Script script_from_ground_truth(const GroundTruth& gt, StrategyKind kind, const AgentCatalog& catalog,
                                const ScriptOptions& options) {
  Builder b(options.faults);
  switch (kind) {
    case StrategyKind::kGeoflow: graph_script(b, gt, PlanMode::kGeoflow, options); break;
    case StrategyKind::kFlowImplicit: graph_script(b, gt, PlanMode::kFlowImplicit, options); break;
    case StrategyKind::kSequential: sequential_script(b, gt, catalog); break;
    case StrategyKind::kGroupChat: group_chat_script(b, gt); break;
    case StrategyKind::kSwarm: swarm_script(b, gt); break;
  }
  return b.take();
}

FaultPlan inject_errors(const GroundTruth& gt, int count, Recovery recovery) {
  FaultPlan plan;
  if (count <= 0 || gt.trace.empty()) return plan;
  std::map<std::pair<std::string, std::string>, int> occurrences;
  auto add = [&](const TraceStep& s) {
    const int occurrence = ++occurrences[{s.agent, s.tool}];
    plan.entries.push_back({s.agent, s.tool, occurrence, FaultEffect::kError,
                            "injected failure in " + s.tool, 0});
  };

  if (recovery == Recovery::kRetry) {
    const std::size_t n = gt.trace.size();
    for (std::size_t i = 0; i < n; ++i) {
      const TraceStep& s = gt.trace[i];
      int faults = i < static_cast<std::size_t>(count) ? 1 : 0;
      if (i + 1 == n && static_cast<std::size_t>(count) > n) faults += count - static_cast<int>(n);
      for (int f = 0; f < faults; ++f) add(s);
      ++occurrences[{s.agent, s.tool}];
    }
    return plan;
  }

  // Refine recovery: vertices are retried whole, so fault their first call.
  std::vector<std::string> vertices;
  for (const auto& id : topo_order(gt.aov)) {
    for (const auto& s : gt.trace) {
      if (s.vertex == id) {
        vertices.push_back(id);
        break;
      }
    }
  }
  const std::size_t first_faulted = vertices.size() > static_cast<std::size_t>(count) ? vertices.size() - count : 0;
  std::set<std::string> faulted(vertices.begin() + static_cast<std::ptrdiff_t>(first_faulted), vertices.end());
  for (const auto& id : topo_order(gt.aov)) {
    bool first = true;
    for (const auto& s : gt.trace) {
      if (s.vertex != id) continue;
      if (first && faulted.count(id)) add(s);
      first = false;
      ++occurrences[{s.agent, s.tool}];
    }
  }
  return plan;
}

std::vector<ChatMessage> demonstration_chat(const std::string& query, const GroundTruth& gt,
                                            const AgentCatalog& catalog) {
  std::vector<ChatMessage> out{ChatMessage::user(query)};
  Environment env(catalog);
  std::string names;
  for (std::size_t i = 0; i < gt.trace.size(); ++i) {
    const TraceStep& step = gt.trace[i];
    const std::string id = "example_" + std::to_string(i + 1);
    out.push_back(ChatMessage::assistant({}, {ToolCall{id, step.tool, step.arguments}}));
    const ToolCallRecord& rec = env.call(step.agent, step.tool, step.arguments);
    out.push_back(ChatMessage::tool(id, dump_compact(rec.result)));
    names += (names.empty() ? "" : ", ") + step.tool;
  }
  out.push_back(ChatMessage::assistant("Completed: " + names + "."));
  return out;
}

Script constant_judge_script(int score) {
  ScriptEntry e;
  e.reply = ChatMessage::assistant(std::to_string(score));
  e.usage = Usage{};
  e.sticky = true;
  Script s;
  s.entries.push_back(std::move(e));
  return s;
}

}  // namespace aov
