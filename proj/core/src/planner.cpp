#include "aov/planner.hpp"

#include <algorithm>
#include <sstream>

#include "aov/prompts.hpp"

namespace aov {

namespace {

std::string bullet_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& item : items) {
    out += "- ";
    out += item;
    out += "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

std::vector<std::string> report_lines(const ValidationReport& report) {
  std::vector<std::string> out;
  for (const auto& v : report.violations) {
    std::string line(to_string(v.code));
    if (!v.subject.empty()) line += " [" + v.subject + "]";
    line += ": " + v.message;
    out.push_back(std::move(line));
  }
  return out;
}

// Parses and (optionally) validates without the fresh-plan rules.
ReplyCheck parse_reply(std::string_view reply, const AgentCatalog& catalog, bool run_validation = true) {
  ReplyCheck check;
  auto span = extract_first_object(reply);
  if (!span) {
    check.problems.push_back("the reply contains no JSON object");
    return check;
  }
  AovGraph graph;
  try {
    graph = deserialize(span->text);
  } catch (const ParseError& e) {
    check.problems.push_back("malformed JSON at offset " + std::to_string(span->offset + e.position()) + ": " +
                             e.detail());
    return check;
  } catch (const SchemaError& e) {
    check.problems.push_back(std::string("schema error: ") + e.what());
    return check;
  }
  if (run_validation) check.problems = report_lines(validate(graph, catalog.names()));
  if (check.problems.empty()) check.graph = std::move(graph);
  return check;
}

}  // namespace

std::string_view to_string(PlanMode mode) {
  return mode == PlanMode::kGeoflow ? "geoflow" : "flow_implicit";
}

std::optional<PlanMode> parse_plan_mode(std::string_view text) {
  if (text == "geoflow") return PlanMode::kGeoflow;
  if (text == "flow_implicit") return PlanMode::kFlowImplicit;
  return std::nullopt;
}

std::vector<ChatMessage> build_prompt(const PlannerRequest& request) {
  if (request.catalog.agents().empty()) throw std::invalid_argument("planner needs a non-empty agent catalog");
  const std::string& rules = request.mode == PlanMode::kGeoflow ? prompt_template("planner_geoflow_rules")
                                                                  : prompt_template("planner_flow_rules");
  std::vector<ChatMessage> messages;
  messages.push_back(ChatMessage::system(render(prompt_template("planner_system"),
                                                {{"catalog", request.catalog.prompt_block()},
                                                 {"mode_rules", rules},
                                                 {"format_example", prompt_template("planner_format_example")}})));
  if (request.oracle_example) {
    messages.push_back(ChatMessage::user(request.oracle_example->query));
    messages.push_back(ChatMessage::assistant(serialize(request.oracle_example->graph)));
  }
  messages.push_back(ChatMessage::user(request.task_query));
  return messages;
}

ReplyCheck check_plan_reply(std::string_view reply, const PlannerRequest& request) {
  ReplyCheck check = parse_reply(reply, request.catalog);
  if (!check.graph) return check;
  const AovGraph& graph = *check.graph;
  if (graph.empty()) check.problems.push_back("the workflow has no subtasks");
  for (const auto& t : graph.tasks()) {
    if (t.status != Status::kPending) {
      check.problems.push_back(std::string(to_string(ViolationCode::kBadStatus)) + " [" + t.id +
                               "]: a new workflow must have every status set to pending");
    }
    if (t.objective.empty()) check.problems.push_back("subtask '" + t.id + "' has an empty objective");
  }
  if (!check.problems.empty()) check.graph.reset();
  return check;
}

PlanOutcome generate(const PlannerRequest& request, ChatBackend& backend) {
  PlanOutcome outcome;
  std::vector<ChatMessage> messages = build_prompt(request);
  std::vector<std::string> problems;
  for (int turn = 0; turn <= kRepairBudget; ++turn) {
    Completion reply = backend.complete(messages, {});
    outcome.usage += reply.usage;
    ++outcome.turns;
    messages.push_back(reply.message);
    ReplyCheck check = check_plan_reply(reply.message.content, request);
    if (check.graph) {
      outcome.graph = std::move(*check.graph);
      outcome.transcript = std::move(messages);
      return outcome;
    }
    problems = std::move(check.problems);
    messages.push_back(ChatMessage::user(render(prompt_template("planner_repair"),
                                                {{"violations", bullet_list(problems)}})));
  }
  throw PlanningFailed("planner produced no valid workflow after " + std::to_string(kRepairBudget) +
                           " repair turns:\n" + bullet_list(problems),
                       problems, outcome.usage);
}

std::string transcript_text(std::span<const ChatMessage> history) {
  std::ostringstream out;
  for (const auto& m : history) {
    out << to_string(m.role) << ": " << m.content;
    for (const auto& c : m.tool_calls) out << "\n  -> " << c.name << "(" << c.arguments.dump() << ")";
    out << "\n";
  }
  std::string text = out.str();
  if (!text.empty()) text.pop_back();
  return text;
}

PlanOutcome refine(const RefinementContext& context, const PlannerRequest& request, ChatBackend& backend) {
  if (context.attempt > kRefinementBudget) {
    throw RefinementFailed("refinement budget of " + std::to_string(kRefinementBudget) + " attempts exhausted");
  }
  const Subtask* failed = context.current_graph.find(context.failed_vertex);
  if (failed == nullptr || failed->status != Status::kFailed) {
    throw std::invalid_argument("refinement must reference a failed subtask, got '" + context.failed_vertex + "'");
  }

  std::vector<ChatMessage> messages;
  messages.push_back(build_prompt(request).front());
  messages.push_back(ChatMessage::user(render(prompt_template("refine_update"),
                                              {{"vertex", context.failed_vertex},
                                               {"error", context.error},
                                               {"history", transcript_text(context.chat_history)},
                                               {"graph", serialize(context.current_graph)}})));

  PlanOutcome outcome;
  std::vector<std::string> problems;
  for (int turn = 0; turn <= kRepairBudget; ++turn) {
    Completion reply = backend.complete(messages, {});
    outcome.usage += reply.usage;
    ++outcome.turns;
    messages.push_back(reply.message);

    problems.clear();
    ReplyCheck check = parse_reply(reply.message.content, request.catalog, false);
    if (check.graph) {
      AovGraph& graph = *check.graph;
      for (const auto& original : context.current_graph.tasks()) {
        if (original.status != Status::kDone) continue;
        const Subtask* kept = graph.find(original.id);
        if (kept == nullptr) {
          problems.push_back("completed subtask '" + original.id + "' was removed; keep it unchanged");
        } else if (kept->agent != original.agent || kept->objective != original.objective) {
          problems.push_back("completed subtask '" + original.id + "' was modified; keep it unchanged");
        }
      }
      if (problems.empty()) {
        for (auto& t : graph.mutable_tasks()) {
          const Subtask* original = context.current_graph.find(t.id);
          t.status = (original != nullptr && original->status == Status::kDone) ? Status::kDone : Status::kPending;
        }
        const auto report = validate(graph, request.catalog.names());
        problems = report_lines(report);
        if (problems.empty()) {
          outcome.graph = std::move(graph);
          outcome.transcript = std::move(messages);
          return outcome;
        }
      }
    } else {
      problems = std::move(check.problems);
    }
    messages.push_back(ChatMessage::user(render(prompt_template("planner_repair"),
                                                {{"violations", bullet_list(problems)}})));
  }
  throw RefinementFailed("refinement produced no acceptable workflow:\n" + bullet_list(problems));
}

}  // namespace aov
