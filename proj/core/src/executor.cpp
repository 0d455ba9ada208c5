#include "aov/executor.hpp"

#include <algorithm>

#include "aov/prompts.hpp"

namespace aov {

namespace {

using ToolRouter = std::function<const ToolCallRecord&(const ToolCall&, const Usage&)>;

struct LoopOutcome {
  bool ok = false;
  std::string text;
  std::string error;
};

class Run {
 public:
  Run(const TaskContext& task, ChatBackend& backend)
      : task_(task), backend_(backend), env_(task.catalog, task.faults, task.seed) {}

  Environment& env() { return env_; }
  RunResult& result() { return result_; }
  const TaskContext& task() const { return task_; }

  Completion ask(const std::string& stage, std::span<const ChatMessage> messages,
                 std::span<const ToolSchema> tools) {
    Completion c = backend_.complete(messages, tools);
    charge(stage, c.usage);
    return c;
  }

  void charge(const std::string& stage, const Usage& usage) {
    result_.usage_total += usage;
    result_.calls.push_back({stage, usage});
  }

  void emit(std::string kind, std::string vertex, std::string status, std::string detail = {}) {
    ExecEvent e{static_cast<std::int64_t>(result_.events.size()) + 1, std::move(kind), std::move(vertex),
                std::move(status), std::move(detail)};
    result_.events.push_back(e);
    if (task_.on_event) task_.on_event(e);
  }

  const ToolCallRecord& call_tool(const std::string& vertex, const std::string& agent, const ToolCall& call,
                                  const Usage& attribution) {
    const ToolCallRecord& rec = env_.call(agent, call.name, call.arguments, attribution);
    emit("tool", vertex, rec.ok() ? "ok" : "error", agent + "." + call.name);
    return rec;
  }

  void fail(std::string stage, std::string message) {
    if (!result_.failure) result_.failure = RunFailure{std::move(stage), std::move(message)};
  }

  // Runs one subagent until it replies with text or hits the turn cap.
  // `produced` receives every assistant and tool message of the loop.
  LoopOutcome agent_loop(const std::string& stage, const std::vector<ChatMessage>& prefix,
                         std::span<const ToolSchema> tools, const ToolRouter& route,
                         std::vector<ChatMessage>& produced) {
    std::string last_error;
    for (int turn = 0; turn < kVertexTurnCap; ++turn) {
      std::vector<ChatMessage> messages = prefix;
      messages.insert(messages.end(), produced.begin(), produced.end());
      Completion c = ask(stage, messages, tools);
      ChatMessage reply = c.message;
      for (std::size_t i = 0; i < reply.tool_calls.size(); ++i) {
        if (reply.tool_calls[i].id.empty()) {
          reply.tool_calls[i].id = "call_" + std::to_string(result_.calls.size()) + "_" + std::to_string(i);
        }
      }
      produced.push_back(reply);
      if (reply.tool_calls.empty()) {
        if (!last_error.empty()) return {false, reply.content, last_error};
        return {true, reply.content, {}};
      }
      for (const auto& call : reply.tool_calls) {
        const ToolCallRecord& rec = route(call, c.usage);
        produced.push_back(ChatMessage::tool(call.id, dump_compact(rec.result)));
        if (rec.ok()) {
          last_error.clear();
        } else {
          last_error = std::string(to_string(rec.error->kind)) + ": " + rec.error->message;
        }
      }
    }
    return {false, {}, "turn cap of " + std::to_string(kVertexTurnCap) + " reached"};
  }

  RunResult finish() {
    result_.final_state = env_.state();
    result_.trace = env_.trace();
    const auto outcome = assert_final_state(result_.final_state, task_.assertions);
    result_.assertion_failures = outcome.failures;
    result_.completed = !result_.failure && outcome.ok && completed_flow_;
    emit("finished", {}, result_.completed ? "completed" : "incomplete",
         result_.failure ? result_.failure->stage + ": " + result_.failure->message : std::string());
    return std::move(result_);
  }

  void set_flow_complete(bool v) { completed_flow_ = v; }

 private:
  const TaskContext& task_;
  ChatBackend& backend_;
  Environment env_;
  RunResult result_;
  bool completed_flow_ = true;
};

std::vector<ChatMessage> with_system(std::string system, const std::vector<ChatMessage>& history) {
  std::vector<ChatMessage> out;
  out.reserve(history.size() + 1);
  out.push_back(ChatMessage::system(std::move(system)));
  out.insert(out.end(), history.begin(), history.end());
  return out;
}

std::vector<ChatMessage> with_system(std::string system, std::span<const ChatMessage> demonstration,
                                     const std::vector<ChatMessage>& history) {
  std::vector<ChatMessage> out;
  out.reserve(demonstration.size() + history.size() + 1);
  out.push_back(ChatMessage::system(std::move(system)));
  out.insert(out.end(), demonstration.begin(), demonstration.end());
  out.insert(out.end(), history.begin(), history.end());
  return out;
}

std::string vertex_summary(const Subtask& v, const LoopOutcome& loop, std::span<const ChatMessage> produced) {
  std::string text = "[" + v.id + " | " + v.agent + "] ";
  if (!loop.ok) return text + "failed: " + loop.error;
  text += loop.text;
  std::string results;
  for (const auto& m : produced) {
    if (m.role != Role::kAssistant) continue;
    for (const auto& call : m.tool_calls) {
      auto it = std::find_if(produced.begin(), produced.end(), [&](const ChatMessage& t) {
        return t.role == Role::kTool && t.tool_call_id == call.id;
      });
      results += "\n- " + call.name + " -> " + (it != produced.end() ? it->content : std::string("(no result)"));
    }
  }
  if (!results.empty()) text += "\nTool results:" + results;
  return text;
}

ToolSchema transfer_tool(const AgentSpec& agent) {
  return ToolSchema{std::string(kTransferPrefix) + agent.name, "Transfer control to " + agent.name + ".", {}};
}

template <typename Body>
RunResult guarded(Run& run, Body&& body) {
  try {
    body();
  } catch (const BackendError& e) {
    run.fail("backend", e.what());
  } catch (const std::exception& e) {
    run.fail("engine", e.what());
  }
  return run.finish();
}

}  // namespace

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kGeoflow: return "geoflow";
    case StrategyKind::kFlowImplicit: return "flow_implicit";
    case StrategyKind::kSequential: return "sequential";
    case StrategyKind::kGroupChat: return "group_chat_ledger";
    case StrategyKind::kSwarm: return "swarm_handoff";
  }
  return "geoflow";
}

std::optional<StrategyKind> parse_strategy(std::string_view text) {
  for (auto k : all_strategies()) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::vector<StrategyKind> all_strategies() {
  return {StrategyKind::kGeoflow, StrategyKind::kFlowImplicit, StrategyKind::kSequential, StrategyKind::kSwarm,
          StrategyKind::kGroupChat};
}

bool is_graph_strategy(StrategyKind kind) {
  return kind == StrategyKind::kGeoflow || kind == StrategyKind::kFlowImplicit;
}

Json ExecEvent::to_json() const {
  return {{"seq", seq}, {"kind", kind}, {"vertex", vertex}, {"status", status}, {"detail", detail}};
}

ExecEvent ExecEvent::from_json(const Json& json) {
  return {json.at("seq").get<std::int64_t>(), json.at("kind").get<std::string>(),
          json.value("vertex", std::string()), json.value("status", std::string()),
          json.value("detail", std::string())};
}

Json RunResult::to_json() const {
  Json out = Json::object();
  out["completed"] = completed;
  out["final_state"] = final_state.to_json();
  out["trace"] = Json::array();
  for (const auto& r : trace) out["trace"].push_back(r.to_json());
  out["graph_history"] = Json::array();
  for (const auto& g : graph_history) out["graph_history"].push_back(Json::parse(serialize(g)));
  out["chat"] = Json::array();
  for (const auto& m : chat) out["chat"].push_back(aov::to_json(m));
  out["usage_total"] = aov::to_json(usage_total);
  out["calls"] = Json::array();
  for (const auto& c : calls) out["calls"].push_back({{"stage", c.stage}, {"usage", aov::to_json(c.usage)}});
  out["failure"] = failure ? Json{{"stage", failure->stage}, {"message", failure->message}} : Json(nullptr);
  out["assertion_failures"] = assertion_failures;
  out["events"] = Json::array();
  for (const auto& e : events) out["events"].push_back(e.to_json());
  return out;
}

RunResult RunResult::from_json(const Json& json) {
  RunResult r;
  r.completed = json.at("completed").get<bool>();
  r.final_state = EnvState::from_json(json.at("final_state"));
  for (const auto& t : json.at("trace")) r.trace.push_back(ToolCallRecord::from_json(t));
  for (const auto& g : json.value("graph_history", Json::array())) r.graph_history.push_back(deserialize(g.dump()));
  for (const auto& m : json.value("chat", Json::array())) r.chat.push_back(message_from_json(m));
  r.usage_total = usage_from_json(json.at("usage_total"));
  for (const auto& c : json.value("calls", Json::array())) {
    r.calls.push_back({c.at("stage").get<std::string>(), usage_from_json(c.at("usage"))});
  }
  if (json.contains("failure") && json.at("failure").is_object()) {
    r.failure = RunFailure{json.at("failure").at("stage").get<std::string>(),
                           json.at("failure").at("message").get<std::string>()};
  }
  r.assertion_failures = json.value("assertion_failures", std::vector<std::string>{});
  for (const auto& e : json.value("events", Json::array())) r.events.push_back(ExecEvent::from_json(e));
  return r;
}

RunResult run_graph_strategy(const AovGraph& input, const TaskContext& task, ChatBackend& backend, PlanMode mode,
                             const RefineHook& refine_hook) {
  Run run(task, backend);
  return guarded(run, [&] {
    const auto report = validate(input, task.catalog.names());
    if (!report.ok()) {
      run.fail("validate", report.summary());
      return;
    }
    AovGraph graph = input;
    RunResult& result = run.result();
    result.graph_history.push_back(graph);
    std::vector<ChatMessage>& history = result.chat;
    history.push_back(ChatMessage::user(task.task_query));
    for (const auto& v : graph.tasks()) run.emit("status", v.id, std::string(to_string(v.status)));

    int attempts = 0;
    while (true) {
      Subtask* vertex = nullptr;
      for (const auto& id : topo_order(graph)) {
        Subtask* t = graph.find(id);
        if (t->status == Status::kPending) {
          vertex = t;
          break;
        }
      }
      if (vertex == nullptr) break;

      const Subtask current = *vertex;
      const AgentSpec* agent = task.catalog.find(current.agent);
      vertex->status = Status::kRunning;
      run.emit("status", current.id, "running");

      const bool geoflow = mode == PlanMode::kGeoflow;
      const std::string system =
          render(prompt_template(geoflow ? "subagent_geoflow" : "subagent_flow"),
                 {{"agent", agent->name}, {"description", agent->description}, {"objective", current.objective}});
      ToolRouter route = [&](const ToolCall& call, const Usage& usage) -> const ToolCallRecord& {
        return run.call_tool(current.id, current.agent, call, usage);
      };

      std::vector<ChatMessage> produced;
      const LoopOutcome loop = run.agent_loop("vertex:" + current.id, with_system(system, history), agent->tools, route,
                                              produced);
      history.push_back(ChatMessage::assistant(vertex_summary(current, loop, produced)));
      vertex = graph.find(current.id);
      if (loop.ok) {
        vertex->status = Status::kDone;
        run.emit("status", current.id, "done");
        continue;
      }
      vertex->status = Status::kFailed;
      run.emit("status", current.id, "failed", loop.error);
      if (!refine_hook) {
        run.fail("vertex:" + current.id, loop.error);
        return;
      }
      RefinementContext ctx{graph, history, current.id, loop.error, ++attempts};
      PlanOutcome refined;
      try {
        refined = refine_hook(ctx);
      } catch (const RefinementFailed& e) {
        run.fail("refine", e.what());
        return;
      }
      run.charge("refine", refined.usage);
      graph = std::move(refined.graph);
      result.graph_history.push_back(graph);
      run.emit("graph", {}, "refined", serialize(graph));
      for (const auto& v : graph.tasks()) {
        if (v.status != Status::kDone) run.emit("status", v.id, std::string(to_string(v.status)));
      }
    }
  });
}

RunResult run_sequential(const TaskContext& task, ChatBackend& backend, std::span<const ChatMessage> demonstration) {
  Run run(task, backend);
  return guarded(run, [&] {
    std::vector<ChatMessage>& history = run.result().chat;
    history.push_back(ChatMessage::user(task.task_query));
    for (const auto& agent : task.catalog.agents()) {
      run.emit("status", agent.name, "running");
      const std::string system = render(prompt_template("sequential_agent"),
                                        {{"agent", agent.name}, {"description", agent.description}});
      ToolRouter route = [&](const ToolCall& call, const Usage& usage) -> const ToolCallRecord& {
        return run.call_tool(agent.name, agent.name, call, usage);
      };
      std::vector<ChatMessage> produced;
      const LoopOutcome loop =
          run.agent_loop("agent:" + agent.name, with_system(system, demonstration, history), agent.tools, route, produced);
      history.insert(history.end(), produced.begin(), produced.end());
      run.emit("status", agent.name, loop.ok ? "done" : "failed", loop.error);
    }
  });
}

RunResult run_group_chat(const TaskContext& task, ChatBackend& backend, int round_cap,
                         std::span<const ChatMessage> demonstration) {
  Run run(task, backend);
  return guarded(run, [&] {
    std::vector<ChatMessage>& history = run.result().chat;
    history.push_back(ChatMessage::user(task.task_query));
    std::string roster;
    std::string names;
    for (const auto& a : task.catalog.agents()) {
      roster += "- " + a.name + ": " + a.description + "\n";
      names += (names.empty() ? "" : ", ") + a.name;
    }
    if (!roster.empty()) roster.pop_back();
    const std::string orchestrator = render(prompt_template("group_orchestrator"), {{"roster", roster}});

    for (int round = 1; round <= round_cap; ++round) {
      std::vector<ChatMessage> ledger_request = with_system(orchestrator, demonstration, history);
      ledger_request.push_back(ChatMessage::user(prompt_template("group_ledger")));
      const Completion ledger = run.ask("orchestrator", ledger_request, {});
      history.push_back(ChatMessage::assistant(ledger.message.content));

      std::vector<ChatMessage> select = with_system(orchestrator, demonstration, history);
      select.push_back(ChatMessage::user(prompt_template("group_select")));
      std::string choice;
      for (int attempt = 0; attempt < 2; ++attempt) {
        const Completion reply = run.ask("orchestrator", select, {});
        choice = reply.message.content;
        const auto first = choice.find_first_not_of(" \t\r\n");
        const auto last = choice.find_last_not_of(" \t\r\n");
        choice = first == std::string::npos ? std::string() : choice.substr(first, last - first + 1);
        if (choice == kTerminate || task.catalog.find(choice) != nullptr) break;
        select.push_back(ChatMessage::assistant(reply.message.content));
        select.push_back(
            ChatMessage::user(render(prompt_template("group_select_repair"), {{"reply", choice}, {"names", names}})));
        choice.clear();
      }
      if (choice.empty()) {
        run.fail("orchestrator", "speaker selection did not name a participant");
        return;
      }
      if (choice == kTerminate) return;

      const AgentSpec& agent = *task.catalog.find(choice);
      run.emit("status", agent.name, "running");
      const std::string system =
          render(prompt_template("group_agent"), {{"agent", agent.name}, {"description", agent.description}});
      ToolRouter route = [&](const ToolCall& call, const Usage& usage) -> const ToolCallRecord& {
        return run.call_tool(agent.name, agent.name, call, usage);
      };
      std::vector<ChatMessage> produced;
      const LoopOutcome loop =
          run.agent_loop("agent:" + agent.name, with_system(system, demonstration, history), agent.tools, route, produced);
      history.insert(history.end(), produced.begin(), produced.end());
      run.emit("status", agent.name, loop.ok ? "done" : "failed", loop.error);
    }
    run.fail("orchestrator", "round cap of " + std::to_string(round_cap) + " reached without TERMINATE");
  });
}

RunResult run_swarm(const TaskContext& task, ChatBackend& backend, std::span<const ChatMessage> demonstration) {
  Run run(task, backend);
  return guarded(run, [&] {
    std::vector<ChatMessage>& history = run.result().chat;
    history.push_back(ChatMessage::user(task.task_query));
    const std::string triage(kTriageAgent);
    std::string active = triage;
    int handoffs = 0;
    int turns_here = 0;
    run.emit("status", active, "running");
    while (true) {
      std::string system;
      std::vector<ToolSchema> tools;
      const AgentSpec* spec = task.catalog.find(active);
      if (spec == nullptr) {
        system = prompt_template("swarm_triage");
      } else {
        system = render(prompt_template("swarm_agent"), {{"agent", spec->name}, {"description", spec->description}});
        tools = spec->tools;
      }
      for (const auto& a : task.catalog.agents()) {
        if (a.name != active) tools.push_back(transfer_tool(a));
      }

      if (++turns_here > kVertexTurnCap) {
        run.fail("agent:" + active, "turn cap of " + std::to_string(kVertexTurnCap) + " reached");
        return;
      }
      Completion c = run.ask("agent:" + active, with_system(system, demonstration, history), tools);
      ChatMessage reply = c.message;
      for (std::size_t i = 0; i < reply.tool_calls.size(); ++i) {
        if (reply.tool_calls[i].id.empty()) {
          reply.tool_calls[i].id = "call_" + std::to_string(run.result().calls.size()) + "_" + std::to_string(i);
        }
      }
      history.push_back(reply);
      if (reply.tool_calls.empty()) {
        run.emit("status", active, "done");
        return;
      }
      std::string next;
      for (const auto& call : reply.tool_calls) {
        if (call.name.starts_with(kTransferPrefix)) {
          const std::string target = call.name.substr(kTransferPrefix.size());
          if (task.catalog.find(target) != nullptr && target != active && next.empty()) {
            next = target;
            history.push_back(ChatMessage::tool(call.id, dump_compact(Json{{"assistant", target}})));
            continue;
          }
        }
        const ToolCallRecord& rec = run.call_tool(active, active, call, c.usage);
        history.push_back(ChatMessage::tool(call.id, dump_compact(rec.result)));
      }
      if (!next.empty()) {
        run.emit("status", active, "done");
        if (++handoffs > kSwarmHandoffCap) {
          run.fail("handoff", "handoff cap of " + std::to_string(kSwarmHandoffCap) + " reached");
          return;
        }
        active = next;
        turns_here = 0;
        run.emit("status", active, "running");
      }
    }
  });
}

RunResult run_strategy(StrategyKind kind, const TaskContext& task, ChatBackend& backend,
                       const StrategyOptions& options) {
  switch (kind) {
    case StrategyKind::kSequential: return run_sequential(task, backend, options.demonstration);
    case StrategyKind::kGroupChat: return run_group_chat(task, backend, options.round_cap, options.demonstration);
    case StrategyKind::kSwarm: return run_swarm(task, backend, options.demonstration);
    case StrategyKind::kGeoflow:
    case StrategyKind::kFlowImplicit: break;
  }
  const PlanMode mode = kind == StrategyKind::kGeoflow ? PlanMode::kGeoflow : PlanMode::kFlowImplicit;
  PlannerRequest request{task.task_query, task.catalog, options.oracle_example, mode};

  PlanOutcome plan;
  std::optional<RunFailure> plan_failure;
  try {
    plan = generate(request, backend);
  } catch (const PlanningFailed& e) {
    plan.usage = e.usage();
    plan_failure = RunFailure{"plan", e.what()};
  } catch (const BackendError& e) {
    plan_failure = RunFailure{"plan", e.what()};
  }
  if (plan_failure) {
    Run run(task, backend);
    run.charge("plan", plan.usage);
    run.fail(plan_failure->stage, plan_failure->message);
    return run.finish();
  }

  RefineHook hook;
  if (options.refine) {
    hook = [&](const RefinementContext& ctx) { return refine(ctx, request, backend); };
  }
  RunResult result = run_graph_strategy(plan.graph, task, backend, mode, hook);
  result.usage_total += plan.usage;
  result.calls.insert(result.calls.begin(), CallUsage{"plan", plan.usage});
  return result;
}

}  // namespace aov
