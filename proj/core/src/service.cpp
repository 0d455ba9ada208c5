#include "aov/service.hpp"

#include <condition_variable>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace aov {

namespace {

Json report_json(const ValidationReport& report) {
  Json list = Json::array();
  for (const auto& v : report.violations) {
    list.push_back({{"code", std::string(to_string(v.code))}, {"subject", v.subject}, {"message", v.message}});
  }
  return list;
}

Json graph_json(const AovGraph& graph) { return Json::parse(serialize(graph)); }

HttpResponse error(int status, const std::string& message) { return {status, Json{{"error", message}}}; }

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(path);
  while (std::getline(in, part, '/')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

}  // namespace

struct Workflow {
  std::string id;
  std::string task_id;
  PlanMode mode = PlanMode::kGeoflow;
  AovGraph graph;
  int version = 1;
  std::string state = "idle";  // idle, running, finished
  std::unique_ptr<ChatBackend> backend;
  Usage plan_usage;
  std::vector<ExecEvent> events;
  std::optional<std::string> run_id;
  std::thread worker;
};

struct BenchService::Impl {
  Suite suite;
  ServiceOptions options;
  AgentCatalog catalog = catalog_default();

  std::mutex mutex;
  std::condition_variable idle_cv;
  int running = 0;
  int next_workflow = 0;
  int next_run = 0;
  std::map<std::string, std::unique_ptr<Workflow>> workflows;
  std::map<std::string, RunRecord> runs;
  std::vector<std::string> run_order;

  httplib::Server server;
  std::thread listener;

  Json workflow_json(const Workflow& wf) const {
    Json out = {{"id", wf.id},
                {"task_id", wf.task_id},
                {"mode", std::string(to_string(wf.mode))},
                {"version", wf.version},
                {"state", wf.state},
                {"graph", graph_json(wf.graph)},
                {"plan_usage", to_json(wf.plan_usage)}};
    out["run_id"] = wf.run_id ? Json(*wf.run_id) : Json(nullptr);
    return out;
  }

  StrategyKind strategy_of(PlanMode mode) const {
    return mode == PlanMode::kGeoflow ? StrategyKind::kGeoflow : StrategyKind::kFlowImplicit;
  }

  PlannerRequest planner_request(const TaskCase& task, PlanMode mode) const {
    PlannerRequest request{task.query, catalog, std::nullopt, mode};
    if (options.oracle_fewshot) {
      if (const TaskCase* oracle = suite.oracle(); oracle != nullptr && oracle->id != task.id) {
        request.oracle_example = OracleExample{oracle->query, planned_graph(oracle->ground_truth, mode)};
      }
    }
    return request;
  }

  HttpResponse list_tasks() {
    Json out = Json::array();
    for (const auto& t : suite.tasks) {
      out.push_back({{"id", t.id},
                     {"query", t.query},
                     {"oracle", t.oracle},
                     {"tags", t.tags},
                     {"vertices", t.ground_truth.aov.size()}});
    }
    return {200, out};
  }

  HttpResponse generate_workflow(const std::string& body) {
    Json req;
    try {
      req = Json::parse(body);
    } catch (const Json::parse_error& e) {
      return error(400, std::string("request body is not JSON: ") + e.what());
    }
    if (!req.is_object() || !req.contains("task_id") || !req.at("task_id").is_string()) {
      return error(400, "task_id is required");
    }
    const TaskCase* task = suite.find(req.at("task_id").get<std::string>());
    if (task == nullptr) return error(404, "unknown task '" + req.at("task_id").get<std::string>() + "'");
    auto mode = parse_plan_mode(req.value("mode", std::string("geoflow")));
    if (!mode) return error(400, "mode must be geoflow or flow_implicit");

    auto wf = std::make_unique<Workflow>();
    wf->task_id = task->id;
    wf->mode = *mode;
    try {
      wf->backend = backend_for(options.backend, *task, strategy_of(*mode), catalog,
                                ScriptOptions{options.faults, Recovery::kRetry});
      PlanOutcome plan = generate(planner_request(*task, *mode), *wf->backend);
      wf->graph = std::move(plan.graph);
      wf->plan_usage = plan.usage;
    } catch (const PlanningFailed& e) {
      Json body = {{"error", e.what()}, {"violations", e.last_violations()}};
      return {422, body};
    } catch (const std::exception& e) {
      return error(502, std::string("planner backend failed: ") + e.what());
    }

    std::lock_guard lock(mutex);
    wf->id = "wf-" + std::to_string(++next_workflow);
    Json out = workflow_json(*wf);
    workflows[wf->id] = std::move(wf);
    return {201, out};
  }

  HttpResponse get_workflow(const std::string& id) {
    std::lock_guard lock(mutex);
    auto it = workflows.find(id);
    if (it == workflows.end()) return error(404, "unknown workflow '" + id + "'");
    return {200, workflow_json(*it->second)};
  }

  HttpResponse put_workflow(const std::string& id, const std::string& body) {
    AovGraph graph;
    try {
      std::string text = body;
      Json parsed = Json::parse(body, nullptr, false);
      if (parsed.is_object() && parsed.contains("graph") && !parsed.contains("tasks")) text = parsed.at("graph").dump();
      graph = deserialize(text);
    } catch (const ParseError& e) {
      return {400, Json{{"error", "malformed workflow at offset " + std::to_string(e.position()) + ": " + e.detail()}}};
    } catch (const SchemaError& e) {
      return error(400, e.what());
    }
    for (auto& t : graph.mutable_tasks()) t.status = Status::kPending;
    const ValidationReport report = validate(graph, catalog.names());

    std::lock_guard lock(mutex);
    auto it = workflows.find(id);
    if (it == workflows.end()) return error(404, "unknown workflow '" + id + "'");
    Workflow& wf = *it->second;
    if (wf.state == "running") return error(409, "workflow is executing");
    if (!report.ok()) {
      return {422, Json{{"error", "validation failed"}, {"violations", report_json(report)}}};
    }
    wf.graph = std::move(graph);
    ++wf.version;
    if (wf.state == "finished") wf.state = "idle";
    return {200, workflow_json(wf)};
  }

  HttpResponse execute_workflow(const std::string& id) {
    std::unique_lock lock(mutex);
    auto it = workflows.find(id);
    if (it == workflows.end()) return error(404, "unknown workflow '" + id + "'");
    Workflow& wf = *it->second;
    if (wf.state == "running") return error(409, "workflow is already executing");
    const ValidationReport report = validate(wf.graph, catalog.names());
    if (!report.ok()) return {422, Json{{"error", "validation failed"}, {"violations", report_json(report)}}};

    if (wf.worker.joinable()) wf.worker.join();
    const std::string run_id = "run-" + std::to_string(++next_run);
    for (auto& t : wf.graph.mutable_tasks()) t.status = Status::kPending;
    wf.state = "running";
    wf.run_id = run_id;
    ++running;
    const TaskCase* task = suite.find(wf.task_id);
    wf.worker = std::thread([this, &wf, task, run_id, graph = wf.graph] { execute(wf, *task, run_id, graph); });
    return {202, Json{{"workflow_id", id}, {"run_id", run_id}}};
  }

  void record_event(Workflow& wf, const ExecEvent& e) {
    std::lock_guard lock(mutex);
    ExecEvent copy = e;
    copy.seq = static_cast<std::int64_t>(wf.events.size()) + 1;
    if (copy.kind == "status" && !copy.vertex.empty()) {
      if (Subtask* t = wf.graph.find(copy.vertex)) {
        if (auto s = parse_status(copy.status)) t->status = *s;
      }
    } else if (copy.kind == "graph") {
      wf.graph = deserialize(copy.detail);
      ++wf.version;
    }
    wf.events.push_back(std::move(copy));
  }

  void execute(Workflow& wf, const TaskCase& task, const std::string& run_id, const AovGraph& graph) {
    TaskContext ctx;
    ctx.catalog = catalog;
    ctx.task_query = task.query;
    ctx.faults = options.faults;
    ctx.seed = options.seed;
    ctx.assertions = task.ground_truth.final_assertions;
    ctx.on_event = [this, &wf](const ExecEvent& e) { record_event(wf, e); };

    const PlannerRequest request = planner_request(task, wf.mode);
    RefineHook hook = [&](const RefinementContext& rc) { return refine(rc, request, *wf.backend); };
    RunResult result = run_graph_strategy(graph, ctx, *wf.backend, wf.mode, hook);

    RunRecord record;
    record.task_id = task.id;
    record.strategy = std::string(to_string(strategy_of(wf.mode)));
    record.backend = options.backend.label();
    record.seed = options.seed;
    record.key = run_key(record.task_id, record.strategy, record.backend, record.seed);
    record.faults = options.faults;
    record.task = task;
    record.result = std::move(result);
    if (options.judge) {
      try {
        auto judge_chat = judge_backend(*options.judge);
        BackendJudge judge(*judge_chat);
        flow_score(record.result.graph_history.front(), task.ground_truth, judge);
        record.judge_transcript = judge.transcript();
        record.judged = true;
      } catch (const std::exception& e) {
        record.error = std::string("judge: ") + e.what();
      }
    }
    if (!options.results_dir.empty()) {
      try {
        store_record(record, options.results_dir);
      } catch (const std::exception& e) {
        if (!record.error) record.error = std::string("store: ") + e.what();
      }
    }

    std::lock_guard lock(mutex);
    runs[run_id] = std::move(record);
    run_order.push_back(run_id);
    wf.state = "finished";
    --running;
    idle_cv.notify_all();
  }

  HttpResponse workflow_status(const std::string& id, const std::map<std::string, std::string>& query) {
    std::int64_t since = 0;
    if (auto it = query.find("since"); it != query.end()) {
      try {
        since = std::stoll(it->second);
      } catch (const std::exception&) {
        return error(400, "since must be an integer");
      }
    }
    std::lock_guard lock(mutex);
    auto it = workflows.find(id);
    if (it == workflows.end()) return error(404, "unknown workflow '" + id + "'");
    const Workflow& wf = *it->second;
    Json statuses = Json::object();
    for (const auto& t : wf.graph.tasks()) statuses[t.id] = std::string(to_string(t.status));
    Json events = Json::array();
    for (const auto& e : wf.events) {
      if (e.seq > since) events.push_back(e.to_json());
    }
    Json out = {{"workflow_id", id},
                {"state", wf.state},
                {"version", wf.version},
                {"statuses", statuses},
                {"events", events},
                {"last_seq", static_cast<std::int64_t>(wf.events.size())}};
    out["run_id"] = wf.run_id ? Json(*wf.run_id) : Json(nullptr);
    if (wf.state == "finished" && wf.run_id) {
      const RunRecord& r = runs.at(*wf.run_id);
      out["completed"] = r.result.completed;
      out["tokens"] = r.result.usage_total.total();
    }
    return {200, out};
  }

  HttpResponse run_trace(const std::string& id) {
    std::lock_guard lock(mutex);
    auto it = runs.find(id);
    if (it == runs.end()) return error(404, "unknown run '" + id + "'");
    const RunRecord& r = it->second;
    Json out = r.result.to_json();
    out["run_id"] = id;
    out["record_key"] = r.key;
    out["task_id"] = r.task_id;
    out["strategy"] = r.strategy;
    out["metrics"] = score_record(r).to_json();
    return {200, out};
  }

  HttpResponse report() {
    std::lock_guard lock(mutex);
    // Latest run per (task, strategy) so every cell covers each task once.
    std::map<std::pair<std::string, std::string>, const RunRecord*> latest;
    for (const auto& id : run_order) {
      const RunRecord& r = runs.at(id);
      latest[{r.strategy, r.task_id}] = &r;
    }
    std::map<std::string, std::vector<RunRecord>> by_cell;
    for (const auto& [key, r] : latest) by_cell[key.first].push_back(*r);
    MetricsReport combined;
    combined.judge = options.judge ? options.judge->label() : std::string();
    for (const auto& [_, records] : by_cell) {
      MetricsReport part = report_from_records(records, combined.judge);
      combined.cells.insert(combined.cells.end(), part.cells.begin(), part.cells.end());
    }
    Json out = combined.to_json();
    out["table"] = combined.render_table();
    return {200, out};
  }

  HttpResponse route(const HttpRequest& req) {
    const auto parts = split_path(req.path);
    if (parts.size() < 2 || parts[0] != "api") return error(404, "no route for " + req.path);
    const std::string& m = req.method;
    if (parts.size() == 2 && parts[1] == "tasks") return m == "GET" ? list_tasks() : error(405, "use GET");
    if (parts.size() == 2 && parts[1] == "catalog") {
      return m == "GET" ? HttpResponse{200, catalog.to_json()} : error(405, "use GET");
    }
    if (parts.size() == 2 && parts[1] == "report") return m == "GET" ? report() : error(405, "use GET");
    if (parts[1] == "workflows") {
      if (parts.size() == 3 && parts[2] == "generate") {
        return m == "POST" ? generate_workflow(req.body) : error(405, "use POST");
      }
      if (parts.size() == 3) {
        if (m == "GET") return get_workflow(parts[2]);
        if (m == "PUT") return put_workflow(parts[2], req.body);
        return error(405, "use GET or PUT");
      }
      if (parts.size() == 4 && parts[3] == "execute") {
        return m == "POST" ? execute_workflow(parts[2]) : error(405, "use POST");
      }
      if (parts.size() == 4 && parts[3] == "status") {
        return m == "GET" ? workflow_status(parts[2], req.query) : error(405, "use GET");
      }
    }
    if (parts[1] == "runs" && parts.size() == 4 && parts[3] == "trace") {
      return m == "GET" ? run_trace(parts[2]) : error(405, "use GET");
    }
    return error(404, "no route for " + req.path);
  }

  void install_routes(BenchService& owner) {
    auto dispatch = [&owner](const httplib::Request& req, httplib::Response& res) {
      HttpRequest r{req.method, req.path, {}, req.body};
      for (const auto& [k, v] : req.params) r.query[k] = v;
      const HttpResponse out = owner.handle(r);
      res.status = out.status;
      res.set_content(out.body.dump(), "application/json");
    };
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    const std::string any = R"(/api/.*)";
    server.Get(any, dispatch);
    server.Post(any, dispatch);
    server.Put(any, dispatch);
    server.Options(any, [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  }
};

BenchService::BenchService(Suite suite, ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->suite = std::move(suite);
  impl_->options = std::move(options);
  impl_->install_routes(*this);
}

BenchService::~BenchService() {
  stop();
  wait_idle();
  for (auto& [_, wf] : impl_->workflows) {
    if (wf->worker.joinable()) wf->worker.join();
  }
}

HttpResponse BenchService::handle(const HttpRequest& request) {
  try {
    return impl_->route(request);
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

void BenchService::wait_idle() {
  std::unique_lock lock(impl_->mutex);
  impl_->idle_cv.wait(lock, [this] { return impl_->running == 0; });
}

int BenchService::start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool BenchService::run(const std::string& host, int port) { return impl_->server.listen(host, port); }

void BenchService::stop() {
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
}

}  // namespace aov
