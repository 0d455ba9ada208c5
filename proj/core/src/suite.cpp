#include "aov/suite.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace aov {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& task, const std::string& field, const std::string& message) {
  std::string where = task.empty() ? std::string() : "task '" + task + "': ";
  if (!field.empty()) where += field + ": ";
  throw ParseError(0, where + message);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(e.byte, origin + ": " + e.what());
  }
}

bool blank(const std::string& text) { return text.find_first_not_of(" \t\r\n") == std::string::npos; }

const Json& member(const Json& obj, const char* key, const std::string& task, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) fail(task, path + key, "missing");
  return obj.at(key);
}

std::string string_member(const Json& obj, const char* key, const std::string& task, const std::string& path) {
  const Json& v = member(obj, key, task, path);
  if (!v.is_string()) fail(task, path + key, "expected a string");
  return v.get<std::string>();
}

std::map<std::string, std::string> string_map(const Json& obj, const char* key, const std::string& task,
                                              const AovGraph& aov) {
  std::map<std::string, std::string> out;
  if (!obj.contains(key)) return out;
  const Json& m = obj.at(key);
  const std::string path = std::string("ground_truth.") + key;
  if (!m.is_object()) fail(task, path, "expected an object");
  for (const auto& [vertex, text] : m.items()) {
    if (!aov.find(vertex)) fail(task, path + "." + vertex, "unknown vertex");
    if (!text.is_string()) fail(task, path + "." + vertex, "expected a string");
    out[vertex] = text.get<std::string>();
  }
  return out;
}

}  // namespace

Json TaskCase::to_json() const {
  Json gt = Json::object();
  gt["aov"] = Json::parse(serialize(ground_truth.aov));
  gt["trace"] = Json::array();
  for (const auto& s : ground_truth.trace) gt["trace"].push_back(s.to_json());
  gt["final_assertions"] = Json::array();
  for (const auto& a : ground_truth.final_assertions) gt["final_assertions"].push_back(a.to_json());
  if (!ground_truth.objectives.empty()) gt["objectives"] = ground_truth.objectives;
  if (!ground_truth.labels.empty()) gt["labels"] = ground_truth.labels;
  return {{"id", id}, {"query", query}, {"oracle", oracle}, {"tags", tags}, {"ground_truth", std::move(gt)}};
}

const TaskCase* Suite::find(std::string_view id) const {
  for (const auto& t : tasks) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

const TaskCase* Suite::oracle() const {
  for (const auto& t : tasks) {
    if (t.oracle) return &t;
  }
  return nullptr;
}

std::vector<const TaskCase*> Suite::scored(bool oracle_fewshot) const {
  std::vector<const TaskCase*> out;
  for (const auto& t : tasks) {
    if (oracle_fewshot && t.oracle) continue;
    out.push_back(&t);
  }
  return out;
}

TaskCase parse_task(const Json& json, const AgentCatalog& catalog, const std::string& where) {
  if (!json.is_object()) fail("", where, "task document must be an object");
  TaskCase task;
  task.id = string_member(json, "id", "", where.empty() ? "" : where + ": ");
  if (task.id.empty()) fail("", where, "empty task id");
  const std::string& id = task.id;
  task.query = string_member(json, "query", id, "");
  if (json.contains("oracle")) {
    if (!json.at("oracle").is_boolean()) fail(id, "oracle", "expected a boolean");
    task.oracle = json.at("oracle").get<bool>();
  }
  if (json.contains("tags")) {
    const Json& tags = json.at("tags");
    if (!tags.is_array()) fail(id, "tags", "expected a list");
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (!tags[i].is_string()) fail(id, "tags[" + std::to_string(i) + "]", "expected a string");
      task.tags.push_back(tags[i].get<std::string>());
    }
  }

  const Json& gt = member(json, "ground_truth", id, "");
  GroundTruth& out = task.ground_truth;
  try {
    out.aov = deserialize(member(gt, "aov", id, "ground_truth.").dump());
  } catch (const ParseError& e) {
    fail(id, "ground_truth.aov", e.detail());
  } catch (const SchemaError& e) {
    fail(id, "ground_truth.aov", e.what());
  }
  const auto report = validate(out.aov, catalog.names());
  if (!report.ok()) fail(id, "ground_truth.aov", report.summary());
  for (const auto& t : out.aov.tasks()) {
    if (t.status != Status::kPending) fail(id, "ground_truth.aov." + t.id + ".status", "must be pending");
  }

  const Json& trace = member(gt, "trace", id, "ground_truth.");
  if (!trace.is_array()) fail(id, "ground_truth.trace", "expected a list");
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const std::string path = "ground_truth.trace[" + std::to_string(i) + "]";
    const Json& step = trace[i];
    TraceStep s;
    s.vertex = string_member(step, "vertex", id, path + ".");
    s.agent = string_member(step, "agent", id, path + ".");
    s.tool = string_member(step, "tool", id, path + ".");
    const AgentSpec* agent = catalog.find(s.agent);
    if (!agent) fail(id, path + ".agent", "unknown agent '" + s.agent + "'");
    const ToolSchema* schema = agent->tool(s.tool);
    if (!schema) fail(id, path + ".tool", "unknown tool '" + s.tool + "' for agent '" + s.agent + "'");
    const Subtask* v = out.aov.find(s.vertex);
    if (!v) fail(id, path + ".vertex", "unknown vertex '" + s.vertex + "'");
    if (v->agent != s.agent) {
      fail(id, path + ".agent", "vertex '" + s.vertex + "' is assigned to '" + v->agent + "', not '" + s.agent + "'");
    }
    try {
      s.arguments = canonicalize_arguments(*schema, step.value("arguments", Json::object()));
    } catch (const SchemaViolationError& e) {
      fail(id, path + ".arguments", e.what());
    }
    out.trace.push_back(std::move(s));
  }

  if (gt.contains("final_assertions")) {
    const Json& list = gt.at("final_assertions");
    if (!list.is_array()) fail(id, "ground_truth.final_assertions", "expected a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "ground_truth.final_assertions[" + std::to_string(i) + "]";
      try {
        Assertion a = Assertion::from_json(list[i]);
        resolve_path(EnvState{}.to_json(), a.path);
        out.final_assertions.push_back(std::move(a));
      } catch (const std::exception& e) {
        fail(id, path, e.what());
      }
    }
  }
  out.objectives = string_map(gt, "objectives", id, out.aov);
  out.labels = string_map(gt, "labels", id, out.aov);
  return task;
}

Suite load_suite(const std::string& path_text, const AgentCatalog& catalog) {
  fs::path path(path_text);
  if (fs::is_directory(path)) path /= "manifest.json";
  if (!fs::exists(path)) throw ParseError(0, "suite not found: " + path.string());

  Suite suite;
  const std::string text = read_file(path);
  if (blank(text)) return suite;
  const Json root = parse_json(text, path.string());

  std::vector<std::pair<Json, std::string>> documents;
  if (root.is_object() && root.contains("tasks")) {
    suite.name = root.value("name", std::string());
    const Json& entries = root.at("tasks");
    if (!entries.is_array()) throw ParseError(0, path.string() + ": tasks must be a list");
    for (const auto& entry : entries) {
      if (entry.is_string()) {
        const fs::path file = path.parent_path() / entry.get<std::string>();
        const std::string body = read_file(file);
        documents.emplace_back(parse_json(body, file.string()), file.string());
      } else {
        documents.emplace_back(entry, path.string());
      }
    }
  } else {
    documents.emplace_back(root, path.string());
  }

  std::set<std::string> ids;
  for (const auto& [doc, where] : documents) {
    TaskCase task = parse_task(doc, catalog, where);
    if (!ids.insert(task.id).second) fail(task.id, "id", "duplicate task id");
    if (task.oracle && suite.oracle()) fail(task.id, "oracle", "a suite may mark only one oracle task");
    suite.tasks.push_back(std::move(task));
  }
  return suite;
}

}  // namespace aov
