#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aov/env.hpp"
#include "aov/graph.hpp"
#include "aov/llm.hpp"

namespace aov {

enum class PlanMode {
  kGeoflow,       // objectives carry the full study parameters and the API
  kFlowImplicit,  // objectives are terse labels; API choice left to subagents
};

std::string_view to_string(PlanMode mode);
std::optional<PlanMode> parse_plan_mode(std::string_view text);

// Re-prompts allowed after an unusable planner reply.
inline constexpr int kRepairBudget = 2;
// Refinement attempts allowed per task run.
inline constexpr int kRefinementBudget = 3;

struct OracleExample {
  std::string query;
  AovGraph graph;
};

struct PlannerRequest {
  std::string task_query;
  AgentCatalog catalog;
  std::optional<OracleExample> oracle_example;
  PlanMode mode = PlanMode::kGeoflow;
};

struct PlanOutcome {
  AovGraph graph;
  Usage usage;
  int turns = 0;
  std::vector<ChatMessage> transcript;
};

class PlanningFailed : public std::runtime_error {
 public:
  PlanningFailed(const std::string& what, std::vector<std::string> last_violations, Usage usage = {})
      : std::runtime_error(what), last_violations_(std::move(last_violations)), usage_(usage) {}
  const std::vector<std::string>& last_violations() const { return last_violations_; }
  // Tokens spent on the failed attempts.
  const Usage& usage() const { return usage_; }

 private:
  std::vector<std::string> last_violations_;
  Usage usage_;
};

class RefinementFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RefinementContext {
  AovGraph current_graph;
  std::vector<ChatMessage> chat_history;
  std::string failed_vertex;
  std::string error;
  int attempt = 1;  // 1-based
};

// System prompt plus, when present, one few-shot (query, graph) exchange,
// followed by the user task.
std::vector<ChatMessage> build_prompt(const PlannerRequest& request);

// Problems found in a planner reply; empty when `graph` is usable.
struct ReplyCheck {
  std::optional<AovGraph> graph;
  std::vector<std::string> problems;
};

// Extracts the first JSON object, parses it and validates it against the
// catalog. Fresh plans must be non-empty and entirely pending.
ReplyCheck check_plan_reply(std::string_view reply, const PlannerRequest& request);

PlanOutcome generate(const PlannerRequest& request, ChatBackend& backend);

// Done vertices are immutable: a reply that drops or edits one (id, agent,
// objective) is rejected with a repair turn. Statuses of the remaining
// vertices are reset to pending.
PlanOutcome refine(const RefinementContext& context, const PlannerRequest& request, ChatBackend& backend);

// Plain-text rendering of a chat history for update prompts.
std::string transcript_text(std::span<const ChatMessage> history);

}  // namespace aov
