#pragma once

#include "aov/env.hpp"
#include "aov/evalkit.hpp"
#include "aov/executor.hpp"
#include "aov/llm.hpp"

namespace aov {

// How scripted agents react to an injected tool error.
enum class Recovery {
  kRetry,   // the subagent repeats the call in the same loop
  kRefine,  // the subagent gives up; a refinement reply replays the graph
};

std::string_view to_string(Recovery recovery);
std::optional<Recovery> parse_recovery(std::string_view text);

struct ScriptOptions {
  FaultPlan faults;
  Recovery recovery = Recovery::kRetry;
};

// Replies that make `kind` reproduce the ground-truth tool decisions. The
// fault plan is simulated so error turns line up with the environment.
// Sequential replay expects the trace to be grouped by agent in catalog order.
Script script_from_ground_truth(const GroundTruth& gt, StrategyKind kind, const AgentCatalog& catalog,
                                const ScriptOptions& options = {});

// `count` error faults. Retry: the first `count` ground-truth calls fail
// once (extra faults pile onto the last call). Refine: the first call of
// each of the last `count` vertices that issue calls fails once.
FaultPlan inject_errors(const GroundTruth& gt, int count, Recovery recovery = Recovery::kRetry);

// The graph a planner is expected to emit: objectives in geoflow mode,
// labels in implicit mode.
AovGraph planned_graph(const GroundTruth& gt, PlanMode mode);

// Worked example for the baselines: the query, one tool call per reference
// step with the environment's result, and a closing summary.
std::vector<ChatMessage> demonstration_chat(const std::string& query, const GroundTruth& gt,
                                            const AgentCatalog& catalog);

// A judge answering `score` to every request.
Script constant_judge_script(int score);

}  // namespace aov
