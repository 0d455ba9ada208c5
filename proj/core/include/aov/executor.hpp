#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aov/env.hpp"
#include "aov/graph.hpp"
#include "aov/llm.hpp"
#include "aov/planner.hpp"

namespace aov {

enum class StrategyKind { kGeoflow, kFlowImplicit, kSequential, kGroupChat, kSwarm };

std::string_view to_string(StrategyKind kind);
std::optional<StrategyKind> parse_strategy(std::string_view text);
std::vector<StrategyKind> all_strategies();
bool is_graph_strategy(StrategyKind kind);

// Subagent turns per vertex (and per activation in the baselines).
inline constexpr int kVertexTurnCap = 8;
inline constexpr int kSwarmHandoffCap = 16;
inline constexpr int kGroupRoundCap = 12;
inline constexpr std::string_view kTriageAgent = "triage_agent";
inline constexpr std::string_view kTransferPrefix = "transfer_to_";
inline constexpr std::string_view kTerminate = "TERMINATE";

struct ExecEvent {
  std::int64_t seq = 0;
  std::string kind;    // "status", "graph", "tool", "finished"
  std::string vertex;  // empty for run-level events
  std::string status;
  std::string detail;

  Json to_json() const;
  static ExecEvent from_json(const Json& json);
};

using EventSink = std::function<void(const ExecEvent&)>;

struct CallUsage {
  std::string stage;  // "plan", "refine", "vertex:<id>", "orchestrator", "agent:<name>"
  Usage usage;

  bool operator==(const CallUsage&) const = default;
};

struct RunFailure {
  std::string stage;
  std::string message;

  bool operator==(const RunFailure&) const = default;
};

struct RunResult {
  bool completed = false;
  EnvState final_state;
  std::vector<ToolCallRecord> trace;
  std::vector<AovGraph> graph_history;
  std::vector<ChatMessage> chat;
  Usage usage_total;
  std::vector<CallUsage> calls;
  std::optional<RunFailure> failure;
  std::vector<std::string> assertion_failures;
  std::vector<ExecEvent> events;

  Json to_json() const;
  static RunResult from_json(const Json& json);
};

struct TaskContext {
  AgentCatalog catalog = catalog_default();
  std::string task_query;
  FaultPlan faults;
  std::uint64_t seed = 0;
  std::vector<Assertion> assertions;
  EventSink on_event;
};

using RefineHook = std::function<PlanOutcome(const RefinementContext&)>;

// Executes `graph` in topological order, one subagent loop per vertex. On a
// vertex failure `refine_hook` (if set) supplies a replacement graph, up to
// the refinement budget. Never throws for run-time failures.
RunResult run_graph_strategy(const AovGraph& graph, const TaskContext& task, ChatBackend& backend, PlanMode mode,
                             const RefineHook& refine_hook = {});

// Baselines take an optional demonstration: a worked example placed after
// the system prompt of every request (and kept out of result.chat).
RunResult run_sequential(const TaskContext& task, ChatBackend& backend,
                         std::span<const ChatMessage> demonstration = {});
RunResult run_group_chat(const TaskContext& task, ChatBackend& backend, int round_cap = kGroupRoundCap,
                         std::span<const ChatMessage> demonstration = {});
RunResult run_swarm(const TaskContext& task, ChatBackend& backend, std::span<const ChatMessage> demonstration = {});

struct StrategyOptions {
  std::optional<OracleExample> oracle_example;  // planner few-shot (graph strategies)
  std::vector<ChatMessage> demonstration;       // baseline few-shot
  int round_cap = kGroupRoundCap;
  bool refine = true;
};

// Plans (graph strategies) then executes. Planning failures end the run with
// failure.stage == "plan".
RunResult run_strategy(StrategyKind kind, const TaskContext& task, ChatBackend& backend,
                       const StrategyOptions& options = {});

}  // namespace aov
