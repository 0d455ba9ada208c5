// aovbench: suite validation, planning, experiments, scoring and the HTTP service.

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "aov/experiment.hpp"
#include "aov/service.hpp"

namespace {

struct BackendFlags {
  std::string file;
  std::string base_url;
  std::string model;
  std::string api_key_env;
  std::string script = "ground_truth";

  void attach(CLI::App* cmd) {
    cmd->add_option("--backend", file, "Backend config JSON file");
    cmd->add_option("--base-url", base_url, "OpenAI-compatible endpoint, e.g. http://localhost:8000/v1");
    cmd->add_option("--model", model, "Model name for --base-url");
    cmd->add_option("--api-key-env", api_key_env, "Environment variable holding the API key");
    cmd->add_option("--script", script, "Scripted backend: script file, directory, or ground_truth");
  }

  aov::BackendConfig resolve() const {
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw std::runtime_error("cannot open " + file);
      return aov::backend_config_from_json(aov::Json::parse(in));
    }
    aov::BackendConfig c;
    if (!base_url.empty()) {
      c.kind = aov::BackendKind::kHttpOpenAiCompatible;
      c.base_url = base_url;
      c.model = model;
      c.api_key_env = api_key_env;
      c.name = model;
    } else {
      c.kind = aov::BackendKind::kScripted;
      c.script = script;
      c.name = "scripted";
    }
    return c;
  }
};

aov::Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return aov::Json::parse(in);
}

int cmd_validate(const std::string& suite_path) {
  const aov::AgentCatalog catalog = aov::catalog_default();
  const aov::Suite suite = aov::load_suite(suite_path, catalog);
  int bad = 0;
  for (const auto& t : suite.tasks) {
    aov::Environment env(catalog);
    for (const auto& s : t.ground_truth.trace) env.call(s.agent, s.tool, s.arguments);
    const auto& trace = env.trace();
    const bool calls_ok = std::all_of(trace.begin(), trace.end(), [](const auto& r) { return r.ok(); });
    const auto outcome = aov::assert_final_state(env.state(), t.ground_truth.final_assertions);
    std::cout << t.id << (t.oracle ? " (oracle)" : "") << ": " << t.ground_truth.aov.size() << " subtasks, "
              << t.ground_truth.trace.size() << " calls";
    if (!calls_ok || !outcome.ok) {
      ++bad;
      std::cout << "  FAILED";
      for (const auto& r : trace) {
        if (!r.ok()) std::cout << "\n    " << r.tool << ": " << r.error->message;
      }
      for (const auto& f : outcome.failures) std::cout << "\n    " << f;
    }
    std::cout << "\n";
  }
  std::cout << suite.tasks.size() << " tasks, " << (suite.oracle() ? 1 : 0) << " oracle, " << bad
            << " with failing reference traces\n";
  return bad == 0 ? 0 : 1;
}

int cmd_plan(const std::string& task_id, const std::string& suite_path, const BackendFlags& flags,
             const std::string& mode_text, bool oracle) {
  const aov::AgentCatalog catalog = aov::catalog_default();
  const aov::Suite suite = aov::load_suite(suite_path, catalog);
  const aov::TaskCase* task = suite.find(task_id);
  if (task == nullptr) throw std::runtime_error("unknown task '" + task_id + "'");
  const auto mode = aov::parse_plan_mode(mode_text);
  if (!mode) throw std::runtime_error("mode must be geoflow or flow_implicit");
  const aov::StrategyKind kind =
      *mode == aov::PlanMode::kGeoflow ? aov::StrategyKind::kGeoflow : aov::StrategyKind::kFlowImplicit;

  aov::PlannerRequest request{task->query, catalog, std::nullopt, *mode};
  if (oracle) {
    if (const aov::TaskCase* o = suite.oracle(); o != nullptr && o->id != task->id) {
      request.oracle_example = aov::OracleExample{o->query, aov::planned_graph(o->ground_truth, *mode)};
    }
  }
  auto backend = aov::backend_for(flags.resolve(), *task, kind, catalog, {});
  const aov::PlanOutcome plan = aov::generate(request, *backend);
  std::cout << aov::serialize(plan.graph) << "\n";
  std::cerr << "turns: " << plan.turns << ", tokens: " << plan.usage.total() << " (prompt "
            << plan.usage.prompt_tokens << ", completion " << plan.usage.completion_tokens << ")\n";
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& output) {
  aov::ExperimentConfig config = aov::load_experiment_config(config_path);
  if (!output.empty()) config.output_dir = output;
  const aov::ExperimentOutcome outcome = aov::run_experiment(config);
  std::cout << outcome.report.render_table();
  int failed = 0;
  for (const auto& r : outcome.records) {
    if (r.error) {
      ++failed;
      std::cerr << r.task_id << " / " << r.strategy << " / " << r.backend << ": " << *r.error << "\n";
    }
  }
  if (!config.output_dir.empty()) std::cerr << outcome.record_paths.size() << " run records in " << config.output_dir << "\n";
  return failed == 0 ? 0 : 2;
}

int cmd_score(const std::string& record_path) {
  const aov::RunRecord record = aov::RunRecord::from_json(read_json(record_path));
  const aov::TaskMetrics m = aov::score_record(record);
  aov::Json out = m.to_json();
  out["strategy"] = record.strategy;
  out["backend"] = record.backend;
  const auto detail = aov::correctness_detail(record.result.trace, record.task.ground_truth.trace);
  out["matched_calls"] = detail.matched;
  out["predicted_calls"] = detail.predicted;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_report(const std::string& dir, const std::string& judge) {
  const auto records = aov::load_records(dir);
  const aov::MetricsReport report = aov::report_from_records(records, judge);
  aov::write_report(report, dir);
  std::cout << report.render_table();
  return 0;
}

int cmd_script(const std::string& task_id, const std::string& suite_path, const std::string& strategy,
               int faults, const std::string& recovery_text) {
  const aov::AgentCatalog catalog = aov::catalog_default();
  const aov::Suite suite = aov::load_suite(suite_path, catalog);
  const aov::TaskCase* task = suite.find(task_id);
  if (task == nullptr) throw std::runtime_error("unknown task '" + task_id + "'");
  const auto kind = aov::parse_strategy(strategy);
  if (!kind) throw std::runtime_error("unknown strategy '" + strategy + "'");
  const auto recovery = aov::parse_recovery(recovery_text);
  if (!recovery) throw std::runtime_error("recovery must be retry or refine");
  aov::ScriptOptions options{aov::inject_errors(task->ground_truth, faults, *recovery), *recovery};
  std::cout << aov::to_json(aov::script_from_ground_truth(task->ground_truth, *kind, catalog, options)).dump(2)
            << "\n";
  return 0;
}

volatile std::sig_atomic_t g_stop = 0;

int cmd_serve(const std::string& suite_path, const BackendFlags& flags, const std::string& judge_path,
              const std::string& results, const std::string& host, int port, std::uint64_t seed) {
  aov::ServiceOptions options;
  options.backend = flags.resolve();
  if (!judge_path.empty()) {
    aov::BackendConfig judge = aov::backend_config_from_json(read_json(judge_path));
    options.judge = judge;
  }
  options.results_dir = results;
  options.seed = seed;
  aov::BenchService service(aov::load_suite(suite_path), options);
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  const int bound = service.start(host, port);
  std::cerr << "listening on http://" << host << ":" << bound << std::endl;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Workflow benchmark for geospatial agent orchestration"};
  app.require_subcommand(1);

  std::string suite_path = "data/suite";

  std::string validate_suite;
  auto* validate = app.add_subcommand("validate", "Check a task suite and replay its reference traces");
  validate->add_option("suite", validate_suite, "Suite manifest or directory")->required();

  std::string plan_task;
  std::string plan_mode = "geoflow";
  bool plan_oracle = true;
  BackendFlags plan_backend;
  auto* plan = app.add_subcommand("plan", "Generate a workflow graph for one suite task");
  plan->add_option("task-id", plan_task)->required();
  plan->add_option("--suite", suite_path, "Suite manifest or directory");
  plan->add_option("--mode", plan_mode, "geoflow or flow_implicit");
  plan->add_flag("!--no-oracle", plan_oracle, "Leave out the few-shot exemplar");
  plan_backend.attach(plan);

  std::string run_config;
  std::string run_output;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("experiment-config", run_config)->required();
  run->add_option("--output", run_output, "Results directory (overrides output_dir)");

  std::string score_record;
  auto* score = app.add_subcommand("score", "Recompute metrics from a run record");
  score->add_option("run-record", score_record)->required();

  std::string report_dir;
  std::string report_judge;
  auto* report = app.add_subcommand("report", "Aggregate the run records of a results directory");
  report->add_option("results-dir", report_dir)->required();
  report->add_option("--judge", report_judge, "Judge label for the report header");

  std::string script_task;
  std::string script_strategy = "geoflow";
  int script_faults = 0;
  std::string script_recovery = "retry";
  auto* script = app.add_subcommand("script", "Print the scripted replies replaying a task's reference decisions");
  script->add_option("task-id", script_task)->required();
  script->add_option("--suite", suite_path, "Suite manifest or directory");
  script->add_option("--strategy", script_strategy);
  script->add_option("--faults", script_faults, "Injected tool errors");
  script->add_option("--recovery", script_recovery, "retry or refine");

  BackendFlags serve_backend;
  std::string serve_judge;
  std::string serve_results;
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  std::uint64_t serve_seed = 0;
  auto* serve = app.add_subcommand("serve", "Serve the workflow API");
  serve->add_option("--suite", suite_path, "Suite manifest or directory");
  serve->add_option("--judge", serve_judge, "Judge backend config JSON file");
  serve->add_option("--results", serve_results, "Directory for run records");
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port);
  serve->add_option("--seed", serve_seed);
  serve_backend.attach(serve);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate(validate_suite);
    if (*plan) return cmd_plan(plan_task, suite_path, plan_backend, plan_mode, plan_oracle);
    if (*run) return cmd_run(run_config, run_output);
    if (*score) return cmd_score(score_record);
    if (*report) return cmd_report(report_dir, report_judge);
    if (*script) return cmd_script(script_task, suite_path, script_strategy, script_faults, script_recovery);
    if (*serve) {
      return cmd_serve(suite_path, serve_backend, serve_judge, serve_results, serve_host, serve_port, serve_seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
