#include "aov/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace aov {

namespace fs = std::filesystem;

namespace {

std::string resolve(const std::string& path, const std::string& base) {
  if (path.empty() || base.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

bool is_special_script(const std::string& script) {
  return script == "ground_truth" || script.starts_with("constant:");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

FaultPlan faults_for(const ExperimentConfig& config, const TaskCase& task) {
  FaultPlan plan = config.faults;
  if (config.injection && config.injection->count > 0) {
    const FaultPlan extra = inject_errors(task.ground_truth, config.injection->count, config.injection->recovery);
    plan.entries.insert(plan.entries.end(), extra.entries.begin(), extra.entries.end());
  }
  return plan;
}

std::size_t strategy_rank(const std::string& name) {
  const auto all = all_strategies();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (to_string(all[i]) == name) return i;
  }
  return all.size();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const Json& json, const std::string& base_dir) {
  if (!json.is_object()) throw std::invalid_argument("experiment config must be an object");
  static const std::set<std::string> known = {"suite",  "strategies",     "backends",    "judge",
                                              "faults", "fault_injection", "oracle_fewshot", "parallelism",
                                              "seed",   "round_cap",      "output_dir"};
  for (const auto& [key, _] : json.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown experiment config key '" + key + "'");
  }
  ExperimentConfig c;
  c.suite = resolve(json.at("suite").get<std::string>(), base_dir);
  if (json.contains("strategies")) {
    c.strategies.clear();
    for (const auto& s : json.at("strategies")) {
      auto kind = parse_strategy(s.get<std::string>());
      if (!kind) throw std::invalid_argument("unknown strategy '" + s.get<std::string>() + "'");
      c.strategies.push_back(*kind);
    }
  }
  for (const auto& b : json.at("backends")) {
    BackendConfig backend = backend_config_from_json(b);
    if (backend.kind == BackendKind::kScripted && !is_special_script(backend.script)) {
      backend.script = resolve(backend.script, base_dir);
    }
    c.backends.push_back(std::move(backend));
  }
  if (c.backends.empty()) throw std::invalid_argument("experiment needs at least one backend");
  if (json.contains("judge") && !json.at("judge").is_null()) {
    BackendConfig judge = backend_config_from_json(json.at("judge"));
    if (judge.kind == BackendKind::kScripted && !is_special_script(judge.script)) {
      judge.script = resolve(judge.script, base_dir);
    }
    c.judge = std::move(judge);
  }
  if (json.contains("faults")) c.faults = FaultPlan::from_json(json.at("faults"));
  if (json.contains("fault_injection")) {
    const Json& inj = json.at("fault_injection");
    FaultInjection f;
    f.count = inj.value("count", 0);
    auto recovery = parse_recovery(inj.value("recovery", std::string("retry")));
    if (!recovery) throw std::invalid_argument("fault_injection.recovery must be retry or refine");
    f.recovery = *recovery;
    if (f.count < 0) throw std::invalid_argument("fault_injection.count must be >= 0");
    c.injection = f;
  }
  c.oracle_fewshot = json.value("oracle_fewshot", true);
  c.parallelism = json.value("parallelism", 1);
  if (c.parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
  c.seed = json.value("seed", std::uint64_t{0});
  c.round_cap = json.value("round_cap", kGroupRoundCap);
  if (json.contains("output_dir")) c.output_dir = resolve(json.at("output_dir").get<std::string>(), base_dir);
  return c;
}

Json ExperimentConfig::to_json() const {
  Json out = {{"suite", suite}, {"oracle_fewshot", oracle_fewshot}, {"parallelism", parallelism},
              {"seed", seed},   {"round_cap", round_cap}};
  out["strategies"] = Json::array();
  for (auto s : strategies) out["strategies"].push_back(std::string(to_string(s)));
  out["backends"] = Json::array();
  for (const auto& b : backends) out["backends"].push_back(aov::to_json(b));
  if (judge) out["judge"] = aov::to_json(*judge);
  if (!faults.entries.empty()) out["faults"] = faults.to_json();
  if (injection) {
    out["fault_injection"] = {{"count", injection->count}, {"recovery", std::string(to_string(injection->recovery))}};
  }
  if (!output_dir.empty()) out["output_dir"] = output_dir;
  return out;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  Json json;
  try {
    json = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return ExperimentConfig::from_json(json, fs::path(path).parent_path().string());
}

std::unique_ptr<ChatBackend> backend_for(const BackendConfig& config, const TaskCase& task, StrategyKind kind,
                                         const AgentCatalog& catalog, const ScriptOptions& options) {
  if (config.kind == BackendKind::kHttpOpenAiCompatible) return make_backend(config);
  if (config.script == "ground_truth") {
    return std::make_unique<ScriptedBackend>(script_from_ground_truth(task.ground_truth, kind, catalog, options),
                                             config.label());
  }
  if (fs::is_directory(config.script)) {
    const fs::path file = fs::path(config.script) / task.id / (std::string(to_string(kind)) + ".json");
    return std::make_unique<ScriptedBackend>(script_load(file.string()), config.label());
  }
  return make_backend(config);
}

std::unique_ptr<ChatBackend> judge_backend(const BackendConfig& config) {
  if (config.kind == BackendKind::kScripted && config.script.starts_with("constant:")) {
    const int score = std::stoi(config.script.substr(9));
    return std::make_unique<ScriptedBackend>(constant_judge_script(score), config.label());
  }
  return make_backend(config);
}

std::string run_key(const std::string& task_id, const std::string& strategy, const std::string& backend,
                    std::uint64_t seed) {
  const std::uint64_t h = fnv1a64(task_id + "\n" + strategy + "\n" + backend + "\n" + std::to_string(seed));
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

Json RunRecord::to_json() const {
  Json out = {{"key", key},       {"task_id", task_id},         {"strategy", strategy},
              {"backend", backend}, {"seed", seed},             {"faults", faults.to_json()},
              {"task", task.to_json()}, {"result", result.to_json()}};
  out["judged"] = judged;
  out["judge_transcript"] = Json::array();
  for (const auto& r : judge_transcript) out["judge_transcript"].push_back(r.to_json());
  out["error"] = error ? Json(*error) : Json(nullptr);
  return out;
}

RunRecord RunRecord::from_json(const Json& json, const AgentCatalog& catalog) {
  RunRecord r;
  r.key = json.at("key").get<std::string>();
  r.task_id = json.at("task_id").get<std::string>();
  r.strategy = json.at("strategy").get<std::string>();
  r.backend = json.at("backend").get<std::string>();
  r.seed = json.value("seed", std::uint64_t{0});
  r.faults = FaultPlan::from_json(json.value("faults", Json::array()));
  r.task = parse_task(json.at("task"), catalog, "run record " + r.key);
  r.result = RunResult::from_json(json.at("result"));
  r.judged = json.value("judged", false);
  for (const auto& j : json.value("judge_transcript", Json::array())) r.judge_transcript.push_back(JudgeRecord::from_json(j));
  if (json.contains("error") && !json.at("error").is_null()) r.error = json.at("error").get<std::string>();
  return r;
}

TaskMetrics score_record(const RunRecord& record) {
  TaskMetrics m;
  m.task_id = record.task_id;
  m.error = record.error;
  m.tokens = record.result.usage_total.total();
  m.success = success(record.result, record.task.ground_truth);
  m.correctness = correctness(record.result, record.task.ground_truth);
  auto kind = parse_strategy(record.strategy);
  if (kind && is_graph_strategy(*kind) && !record.result.graph_history.empty() && record.judged) {
    TranscriptJudge judge(record.judge_transcript);
    m.flow_score = flow_score(record.result.graph_history.front(), record.task.ground_truth, judge);
  }
  return m;
}

RunRecord execute_cell(const TaskCase& task, StrategyKind kind, const BackendConfig& backend,
                       const ExperimentConfig& config, const Suite& suite, ChatBackend* judge) {
  RunRecord record;
  record.task_id = task.id;
  record.strategy = std::string(to_string(kind));
  record.backend = backend.label();
  record.seed = config.seed;
  record.key = run_key(record.task_id, record.strategy, record.backend, record.seed);
  record.faults = faults_for(config, task);
  record.task = task;

  const AgentCatalog catalog = catalog_default();
  TaskContext ctx;
  ctx.catalog = catalog;
  ctx.task_query = task.query;
  ctx.faults = record.faults;
  ctx.seed = config.seed;
  ctx.assertions = task.ground_truth.final_assertions;

  StrategyOptions options;
  options.round_cap = config.round_cap;
  if (const TaskCase* oracle = suite.oracle(); config.oracle_fewshot && oracle != nullptr && oracle->id != task.id) {
    if (is_graph_strategy(kind)) {
      const PlanMode mode = kind == StrategyKind::kGeoflow ? PlanMode::kGeoflow : PlanMode::kFlowImplicit;
      options.oracle_example = OracleExample{oracle->query, planned_graph(oracle->ground_truth, mode)};
    } else {
      options.demonstration = demonstration_chat(oracle->query, oracle->ground_truth, catalog);
    }
  }

  try {
    const ScriptOptions script_options{record.faults,
                                       config.injection ? config.injection->recovery : Recovery::kRetry};
    auto chat = backend_for(backend, task, kind, catalog, script_options);
    record.result = run_strategy(kind, ctx, *chat, options);
  } catch (const std::exception& e) {
    record.error = e.what();
    record.result.failure = RunFailure{"setup", e.what()};
  }

  if (judge != nullptr && is_graph_strategy(kind) && !record.result.graph_history.empty()) {
    BackendJudge recording(*judge);
    try {
      flow_score(record.result.graph_history.front(), task.ground_truth, recording);
      record.judged = true;
    } catch (const std::exception& e) {
      if (!record.error) record.error = std::string("judge: ") + e.what();
    }
    record.judge_transcript = recording.transcript();
  }
  return record;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
  const Suite suite = load_suite(config.suite);
  const auto scored = suite.scored(config.oracle_fewshot);

  struct Cell {
    const TaskCase* task;
    StrategyKind kind;
    const BackendConfig* backend;
  };
  std::vector<Cell> cells;
  for (const auto& backend : config.backends) {
    for (auto kind : config.strategies) {
      for (const TaskCase* task : scored) cells.push_back({task, kind, &backend});
    }
  }

  std::vector<RunRecord> records(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      std::unique_ptr<ChatBackend> judge;
      std::optional<std::string> judge_error;
      if (config.judge) {
        try {
          judge = judge_backend(*config.judge);
        } catch (const std::exception& e) {
          judge_error = std::string("judge: ") + e.what();
        }
      }
      records[i] = execute_cell(*cell.task, cell.kind, *cell.backend, config, suite, judge.get());
      if (judge_error && !records[i].error) records[i].error = judge_error;
    }
  };
  const int threads = std::max(1, std::min<int>(config.parallelism, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ExperimentOutcome out;
  out.report = report_from_records(records, config.judge ? config.judge->label() : std::string());
  if (!config.output_dir.empty()) {
    for (const auto& r : records) out.record_paths.push_back(store_record(r, config.output_dir));
    write_report(out.report, config.output_dir);
  }
  out.records = std::move(records);
  return out;
}

std::string store_record(const RunRecord& record, const std::string& results_dir) {
  const fs::path dir = fs::path(results_dir) / "runs";
  fs::create_directories(dir);
  const std::string body = record.to_json().dump(1) + "\n";
  for (int n = 0;; ++n) {
    const fs::path path = dir / (record.key + (n == 0 ? std::string() : "." + std::to_string(n)) + ".json");
    if (fs::exists(path)) {
      if (read_text(path) == body) return path.string();
      continue;
    }
    write_text(path, body);
    return path.string();
  }
}

std::vector<RunRecord> load_records(const std::string& results_dir, const AgentCatalog& catalog) {
  const fs::path dir = fs::path(results_dir) / "runs";
  std::vector<fs::path> files;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
  }
  // <key>.json, then <key>.1.json, <key>.2.json, ...; the latest variant per key wins.
  auto variant = [](const fs::path& file) {
    const std::string stem = file.stem().string();
    const auto dot = stem.find('.');
    if (dot == std::string::npos) return std::make_pair(stem, 0L);
    char* end = nullptr;
    const long n = std::strtol(stem.c_str() + dot + 1, &end, 10);
    return std::make_pair(stem.substr(0, dot), *end == '\0' ? n : 0L);
  };
  std::sort(files.begin(), files.end(),
            [&](const fs::path& a, const fs::path& b) { return variant(a) < variant(b); });
  std::map<std::string, RunRecord> by_key;
  for (const auto& f : files) {
    RunRecord r = RunRecord::from_json(Json::parse(read_text(f)), catalog);
    by_key[r.key] = std::move(r);
  }
  std::vector<RunRecord> out;
  for (auto& [_, r] : by_key) out.push_back(std::move(r));
  return out;
}

MetricsReport report_from_records(const std::vector<RunRecord>& records, const std::string& judge) {
  std::map<std::pair<std::size_t, std::string>, CellInput> cells;
  for (const auto& r : records) {
    auto& cell = cells[{strategy_rank(r.strategy), r.backend}];
    cell.strategy = r.strategy;
    cell.model = r.backend;
    cell.per_task.push_back(score_record(r));
  }
  std::vector<CellInput> inputs;
  for (auto& [_, c] : cells) {
    std::sort(c.per_task.begin(), c.per_task.end(),
              [](const TaskMetrics& a, const TaskMetrics& b) { return a.task_id < b.task_id; });
    inputs.push_back(std::move(c));
  }
  return aggregate(std::move(inputs), judge);
}

void write_report(const MetricsReport& report, const std::string& results_dir) {
  write_text(fs::path(results_dir) / "report.json", report.to_json().dump(2) + "\n");
  write_text(fs::path(results_dir) / "report.txt", report.render_table());
}

}  // namespace aov
