#include <gtest/gtest.h>

#include <map>
#include <set>

#include "aov/executor.hpp"
#include "aov/script_gen.hpp"
#include "support.hpp"

namespace aov {
namespace {

using testing::bundled_suite;

// Records every request before delegating.
class RecordingBackend : public ChatBackend {
 public:
  explicit RecordingBackend(Script script) : inner_(std::move(script)) {}
  Completion complete(std::span<const ChatMessage> messages, std::span<const ToolSchema> tools) override {
    requests.emplace_back(messages.begin(), messages.end());
    return inner_.complete(messages, tools);
  }
  std::string describe() const override { return "recording"; }

  std::vector<std::vector<ChatMessage>> requests;

 private:
  ScriptedBackend inner_;
};

TaskContext context_for(const TaskCase& task, FaultPlan faults = {}) {
  TaskContext ctx;
  ctx.task_query = task.query;
  ctx.faults = std::move(faults);
  ctx.assertions = task.ground_truth.final_assertions;
  return ctx;
}

RunResult replay(const TaskCase& task, StrategyKind kind, const ScriptOptions& options = {},
                 const StrategyOptions& strategy = {}) {
  ScriptedBackend backend(script_from_ground_truth(task.ground_truth, kind, catalog_default(), options));
  return run_strategy(kind, context_for(task, options.faults), backend, strategy);
}

Usage sum_calls(const RunResult& r) {
  Usage total;
  for (const auto& c : r.calls) total += c.usage;
  return total;
}

ScriptEntry text_reply(std::string prefix, std::string text) {
  ScriptEntry e;
  e.match.content_prefix = std::move(prefix);
  e.reply = ChatMessage::assistant(std::move(text));
  e.usage = Usage{1, 1};
  return e;
}

ScriptEntry call_reply(std::string prefix, std::string tool, Json args) {
  ScriptEntry e;
  e.match.content_prefix = std::move(prefix);
  e.reply = ChatMessage::assistant("", {ToolCall{"", std::move(tool), std::move(args)}});
  e.usage = Usage{1, 1};
  return e;
}

TEST(Strategies, NamesRoundTrip) {
  for (auto k : all_strategies()) EXPECT_EQ(parse_strategy(to_string(k)), k);
  EXPECT_FALSE(parse_strategy("magentic").has_value());
  EXPECT_TRUE(is_graph_strategy(StrategyKind::kFlowImplicit));
  EXPECT_FALSE(is_graph_strategy(StrategyKind::kSwarm));
}

TEST(Strategies, EveryStrategyReplaysEveryTaskToTheSameState) {
  for (const auto& task : bundled_suite().tasks) {
    std::optional<EnvState> reference;
    for (auto kind : all_strategies()) {
      SCOPED_TRACE(task.id + " " + std::string(to_string(kind)));
      const RunResult r = replay(task, kind);
      EXPECT_TRUE(r.completed) << (r.failure ? r.failure->message : "assertions");
      ASSERT_EQ(r.trace.size(), task.ground_truth.trace.size());
      for (std::size_t i = 0; i < r.trace.size(); ++i) {
        EXPECT_EQ(r.trace[i].tool, task.ground_truth.trace[i].tool);
        EXPECT_EQ(r.trace[i].arguments, task.ground_truth.trace[i].arguments);
      }
      if (!reference) reference = r.final_state;
      EXPECT_EQ(r.final_state, *reference);
      EXPECT_EQ(r.usage_total, sum_calls(r));
      EXPECT_GT(r.usage_total.total(), 0);
    }
  }
}

TEST(GraphStrategy, VerticesStartOnlyAfterPredecessorsFinish) {
  for (const auto& task : bundled_suite().tasks) {
    const RunResult r = replay(task, StrategyKind::kGeoflow);
    ASSERT_FALSE(r.graph_history.empty());
    const AovGraph& g = r.graph_history.front();
    std::set<std::string> done;
    for (const auto& e : r.events) {
      if (e.kind != "status") continue;
      if (e.status == "running") {
        for (const auto& p : g.find(e.vertex)->prev) EXPECT_TRUE(done.count(p)) << task.id << " " << e.vertex;
      } else if (e.status == "done") {
        done.insert(e.vertex);
      }
    }
    EXPECT_EQ(done.size(), g.size());
    EXPECT_EQ(r.events.back().kind, "finished");
    EXPECT_EQ(r.events.back().status, "completed");
  }
}

TEST(GraphStrategy, PlanUsageIsChargedFirst) {
  const TaskCase& task = *bundled_suite().find("geo-01");
  const RunResult r = replay(task, StrategyKind::kGeoflow);
  ASSERT_FALSE(r.calls.empty());
  EXPECT_EQ(r.calls.front().stage, "plan");
  EXPECT_EQ(r.calls[1].stage, "vertex:task1");
}

TEST(GraphStrategy, TurnCapFailsTheVertex) {
  ScriptEntry loop = call_reply("You are database_agent.", "query_catalog",
                                {{"aoi", "Kyiv"}, {"start", "2024-01-01"}, {"end", "2024-01-02"}});
  loop.sticky = true;
  ScriptedBackend backend(Script{{loop}});
  TaskContext ctx;
  ctx.task_query = "loop forever";
  const RunResult r = run_graph_strategy(testing::chain({"database_agent"}), ctx, backend, PlanMode::kGeoflow);
  EXPECT_FALSE(r.completed);
  ASSERT_TRUE(r.failure.has_value());
  EXPECT_EQ(r.failure->stage, "vertex:task1");
  EXPECT_EQ(r.failure->message, "turn cap of 8 reached");
  EXPECT_EQ(r.trace.size(), static_cast<std::size_t>(kVertexTurnCap));
}

TEST(GraphStrategy, RefinementRecoversFromAnInjectedError) {
  const TaskCase& task = *bundled_suite().find("geo-01");
  ScriptOptions options;
  options.recovery = Recovery::kRefine;
  options.faults = inject_errors(task.ground_truth, 1, Recovery::kRefine);
  ASSERT_EQ(options.faults.entries.size(), 1u);
  const RunResult r = replay(task, StrategyKind::kGeoflow, options);
  EXPECT_TRUE(r.completed);
  EXPECT_EQ(r.graph_history.size(), 2u);
  EXPECT_EQ(r.trace.size(), task.ground_truth.trace.size() + 1);
  EXPECT_EQ(std::count_if(r.trace.begin(), r.trace.end(), [](const ToolCallRecord& c) { return !c.ok(); }), 1);
  EXPECT_TRUE(std::any_of(r.calls.begin(), r.calls.end(), [](const CallUsage& c) { return c.stage == "refine"; }));
  // The fault hits the last vertex; the ones before it stay done.
  EXPECT_EQ(options.faults.entries.front().agent, "analytics_agent");
  const AovGraph& refined = r.graph_history.back();
  EXPECT_EQ(refined.find("task1")->status, Status::kDone);
  EXPECT_EQ(refined.find("task2")->status, Status::kDone);
  EXPECT_EQ(refined.find("task3")->status, Status::kPending);
}

TEST(GraphStrategy, FailureWithoutRefinementStops) {
  const TaskCase& task = *bundled_suite().find("geo-01");
  ScriptOptions options;
  options.recovery = Recovery::kRefine;
  options.faults = inject_errors(task.ground_truth, 1, Recovery::kRefine);
  StrategyOptions strategy;
  strategy.refine = false;
  const RunResult r = replay(task, StrategyKind::kGeoflow, options, strategy);
  EXPECT_FALSE(r.completed);
  ASSERT_TRUE(r.failure.has_value());
  EXPECT_EQ(r.failure->stage.rfind("vertex:", 0), 0u);
}

TEST(GraphStrategy, PlanningFailureIsReportedWithItsUsage) {
  ScriptEntry bad = text_reply("You are a workflow planner", "no plan");
  bad.sticky = true;
  ScriptedBackend backend(Script{{bad}});
  TaskContext ctx;
  ctx.task_query = "anything";
  const RunResult r = run_strategy(StrategyKind::kGeoflow, ctx, backend);
  ASSERT_TRUE(r.failure.has_value());
  EXPECT_EQ(r.failure->stage, "plan");
  EXPECT_EQ(r.usage_total, (Usage{3, 3}));
  EXPECT_TRUE(r.trace.empty());
}

TEST(Engine, BackendErrorsEndTheRunWithoutThrowing) {
  ScriptedBackend empty(Script{});
  TaskContext ctx;
  ctx.task_query = "anything";
  for (auto kind : all_strategies()) {
    const RunResult r = run_strategy(kind, ctx, empty);
    EXPECT_FALSE(r.completed);
    ASSERT_TRUE(r.failure.has_value());
  }
}

TEST(Baselines, DemonstrationIsSentButNotRecorded) {
  const TaskCase& oracle = *bundled_suite().oracle();
  const TaskCase& task = *bundled_suite().find("geo-02");
  const auto demo = demonstration_chat(oracle.query, oracle.ground_truth, catalog_default());
  ASSERT_GE(demo.size(), 3u);
  EXPECT_EQ(demo.front().content, oracle.query);
  for (auto kind : {StrategyKind::kSequential, StrategyKind::kGroupChat, StrategyKind::kSwarm}) {
    RecordingBackend backend(script_from_ground_truth(task.ground_truth, kind, catalog_default()));
    StrategyOptions options;
    options.demonstration = demo;
    const RunResult r = run_strategy(kind, context_for(task), backend, options);
    EXPECT_TRUE(r.completed) << to_string(kind);
    for (const auto& req : backend.requests) {
      ASSERT_GT(req.size(), demo.size());
      EXPECT_EQ(to_json(req[1]), to_json(demo[0]));
    }
    for (const auto& m : r.chat) EXPECT_NE(m.content, oracle.query);
  }
}

TEST(GroupChat, SelectionGetsOneRepairTurn) {
  const std::string orch = "You are the orchestrator";
  ScriptedBackend backend(Script{{text_reply(orch, "Nothing needed."), text_reply(orch, "the map one please"),
                                  text_reply(orch, std::string(kTerminate))}});
  TaskContext ctx;
  ctx.task_query = "nothing";
  const RunResult r = run_group_chat(ctx, backend);
  EXPECT_TRUE(r.completed);
  EXPECT_EQ(r.calls.size(), 3u);

  ScriptedBackend stubborn(Script{{text_reply(orch, "Nothing."), text_reply(orch, "maybe vision"),
                                   text_reply(orch, "still vision?")}});
  const RunResult failed = run_group_chat(ctx, stubborn);
  ASSERT_TRUE(failed.failure.has_value());
  EXPECT_EQ(failed.failure->stage, "orchestrator");
}

TEST(GroupChat, RoundCapWithoutTerminate) {
  const std::string orch = "You are the orchestrator";
  ScriptEntry ledger = text_reply(orch, "Progress.");
  ledger.match.role = Role::kUser;
  ScriptEntry pick = text_reply(orch, "map_agent");
  ScriptEntry agent = text_reply("You are map_agent.", "Nothing to do.");
  Script script;
  for (int i = 0; i < 2; ++i) script.entries.insert(script.entries.end(), {ledger, pick, agent});
  ScriptedBackend backend(script);
  TaskContext ctx;
  ctx.task_query = "loop";
  const RunResult r = run_group_chat(ctx, backend, 2);
  ASSERT_TRUE(r.failure.has_value());
  EXPECT_EQ(r.failure->message, "round cap of 2 reached without TERMINATE");
}

TEST(Swarm, UnknownTransferIsAToolError) {
  ScriptedBackend backend(Script{{call_reply("", "transfer_to_ghost_agent", Json::object()),
                                  text_reply("", "Done.")}});
  TaskContext ctx;
  ctx.task_query = "x";
  const RunResult r = run_swarm(ctx, backend);
  ASSERT_EQ(r.trace.size(), 1u);
  ASSERT_FALSE(r.trace[0].ok());
  EXPECT_EQ(r.trace[0].error->kind, ToolErrorKind::kUnknownTool);
  EXPECT_FALSE(r.failure.has_value());
}

// Hands off to map_agent, or to vision_agent while map_agent is active.
class PingPongBackend : public ChatBackend {
 public:
  Completion complete(std::span<const ChatMessage>, std::span<const ToolSchema> tools) override {
    const bool map_offered = std::any_of(tools.begin(), tools.end(),
                                         [](const ToolSchema& t) { return t.name == "transfer_to_map_agent"; });
    const std::string target = map_offered ? "transfer_to_map_agent" : "transfer_to_vision_agent";
    return {ChatMessage::assistant("", {ToolCall{"", target, Json::object()}}), Usage{1, 1}};
  }
  std::string describe() const override { return "ping-pong"; }
};

TEST(Swarm, HandoffCap) {
  PingPongBackend backend;
  TaskContext ctx;
  ctx.task_query = "x";
  const RunResult r = run_swarm(ctx, backend);
  ASSERT_TRUE(r.failure.has_value());
  EXPECT_EQ(r.failure->stage, "handoff");
  EXPECT_EQ(r.calls.size(), static_cast<std::size_t>(kSwarmHandoffCap + 1));
  EXPECT_TRUE(r.trace.empty());
}

TEST(RunResultJson, RoundTrip) {
  const TaskCase& task = *bundled_suite().find("geo-05");
  const RunResult r = replay(task, StrategyKind::kGeoflow);
  const RunResult back = RunResult::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_EQ(back.final_state, r.final_state);
  EXPECT_EQ(back.trace, r.trace);
  EXPECT_EQ(back.calls, r.calls);
}

}  // namespace
}  // namespace aov
