#include "aov/graph.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "aov/json_text.hpp"

namespace aov {

namespace {

using OrderedJson = nlohmann::ordered_json;

constexpr std::string_view kSubtaskKeys[] = {"id", "objective", "next", "prev", "status", "agent"};

std::string edge_subject(std::string_view from, std::string_view to) {
  std::string s(from);
  s += "->";
  s += to;
  return s;
}

bool contains(const std::vector<std::string>& list, std::string_view value) {
  return std::find(list.begin(), list.end(), value) != list.end();
}

// First occurrence of every id.
std::unordered_map<std::string, const Subtask*> index_of(const AovGraph& graph) {
  std::unordered_map<std::string, const Subtask*> index;
  for (const auto& task : graph.tasks()) index.emplace(task.id, &task);
  return index;
}

// Union of next-edges and prev-edges between existing vertices, children
// sorted ascending and de-duplicated.
std::map<std::string, std::vector<std::string>> adjacency(const AovGraph& graph) {
  std::map<std::string, std::set<std::string>> edges;
  const auto index = index_of(graph);
  for (const auto& task : graph.tasks()) {
    edges[task.id];
    for (const auto& n : task.next) {
      if (index.count(n)) edges[task.id].insert(n);
    }
    for (const auto& p : task.prev) {
      if (index.count(p)) edges[p].insert(task.id);
    }
  }
  std::map<std::string, std::vector<std::string>> out;
  for (auto& [id, children] : edges) out[id].assign(children.begin(), children.end());
  return out;
}

// Vertices lying on a directed cycle (non-trivial SCC or self-loop).
std::vector<std::string> cyclic_vertices(const std::map<std::string, std::vector<std::string>>& adj) {
  std::unordered_map<std::string, int> index;
  std::unordered_map<std::string, int> low;
  std::unordered_set<std::string> on_stack;
  std::vector<std::string> stack;
  std::vector<std::string> result;
  int counter = 0;

  std::function<void(const std::string&)> strongconnect = [&](const std::string& v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack.insert(v);
    for (const auto& w : adj.at(v)) {
      if (!index.count(w)) {
        strongconnect(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack.count(w)) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::string> component;
      std::string w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack.erase(w);
        component.push_back(w);
      } while (w != v);
      const bool self_loop = contains(adj.at(v), v);
      if (component.size() > 1 || self_loop) {
        result.insert(result.end(), component.begin(), component.end());
      }
    }
  };

  for (const auto& [v, _] : adj) {
    if (!index.count(v)) strongconnect(v);
  }
  std::sort(result.begin(), result.end());
  return result;
}

ValidationReport validate_impl(const AovGraph& graph, const std::set<std::string>* agents) {
  ValidationReport report;
  auto add = [&report](ViolationCode code, std::string subject, std::string message) {
    report.violations.push_back({code, std::move(subject), std::move(message)});
  };

  if (graph.size() > kMaxVertices) {
    add(ViolationCode::kTooLarge, "", "graph has " + std::to_string(graph.size()) +
                                          " vertices; the limit is " + std::to_string(kMaxVertices));
  }

  std::map<std::string, int> counts;
  for (const auto& task : graph.tasks()) ++counts[task.id];
  for (const auto& [id, n] : counts) {
    if (id.empty()) {
      add(ViolationCode::kDupId, id, "subtask id must be non-empty");
    } else if (n > 1) {
      add(ViolationCode::kDupId, id, "id '" + id + "' appears " + std::to_string(n) + " times");
    }
  }

  const auto index = index_of(graph);
  for (const auto& task : graph.tasks()) {
    for (const auto& n : task.next) {
      auto it = index.find(n);
      if (it == index.end()) {
        add(ViolationCode::kDanglingEdge, edge_subject(task.id, n),
            "'" + task.id + "'.next references unknown subtask '" + n + "'");
      } else if (!contains(it->second->prev, task.id)) {
        add(ViolationCode::kAsymmetricEdge, edge_subject(task.id, n),
            "'" + task.id + "'.next has '" + n + "' but '" + n + "'.prev lacks '" + task.id + "'");
      }
    }
    for (const auto& p : task.prev) {
      auto it = index.find(p);
      if (it == index.end()) {
        add(ViolationCode::kDanglingEdge, edge_subject(p, task.id),
            "'" + task.id + "'.prev references unknown subtask '" + p + "'");
      } else if (!contains(it->second->next, task.id)) {
        add(ViolationCode::kAsymmetricEdge, edge_subject(p, task.id),
            "'" + task.id + "'.prev has '" + p + "' but '" + p + "'.next lacks '" + task.id + "'");
      }
    }
  }

  for (const auto& v : cyclic_vertices(adjacency(graph))) {
    add(ViolationCode::kCycle, v, "subtask '" + v + "' lies on a dependency cycle");
  }

  if (!graph.empty() &&
      std::none_of(graph.tasks().begin(), graph.tasks().end(),
                   [](const Subtask& t) { return t.prev.empty(); })) {
    add(ViolationCode::kNoSource, "", "no subtask has an empty prev list");
  }

  if (agents != nullptr) {
    for (const auto& task : graph.tasks()) {
      if (!agents->count(task.agent)) {
        add(ViolationCode::kUnknownAgent, task.id,
            "subtask '" + task.id + "' names unknown agent '" + task.agent + "'");
      }
    }
  }

  for (const auto& task : graph.tasks()) {
    if (task.status == Status::kPending) continue;
    for (const auto& p : task.prev) {
      auto it = index.find(p);
      if (it != index.end() && it->second->status != Status::kDone) {
        add(ViolationCode::kBadStatus, task.id,
            "subtask '" + task.id + "' is " + std::string(to_string(task.status)) +
                " but predecessor '" + p + "' is " + std::string(to_string(it->second->status)));
      }
    }
  }
  return report;
}

std::vector<std::string> string_list(const OrderedJson& value, const std::string& where) {
  if (!value.is_array()) throw SchemaError(where + " must be an array of subtask ids");
  std::vector<std::string> out;
  for (const auto& element : value) {
    if (!element.is_string()) throw SchemaError(where + " must contain only strings");
    out.push_back(element.get<std::string>());
  }
  return out;
}

std::string string_field(const OrderedJson& object, std::string_view key, const std::string& where) {
  const auto& value = object.at(std::string(key));
  if (!value.is_string()) throw SchemaError(where + "." + std::string(key) + " must be a string");
  return value.get<std::string>();
}

}  // namespace

std::string_view to_string(Status status) {
  switch (status) {
    case Status::kPending: return "pending";
    case Status::kRunning: return "running";
    case Status::kDone: return "done";
    case Status::kFailed: return "failed";
  }
  return "pending";
}

std::optional<Status> parse_status(std::string_view text) {
  if (text == "pending") return Status::kPending;
  if (text == "running") return Status::kRunning;
  if (text == "done") return Status::kDone;
  if (text == "failed") return Status::kFailed;
  return std::nullopt;
}

bool can_transition(Status from, Status to, bool via_refinement) {
  switch (from) {
    case Status::kPending: return to == Status::kRunning;
    case Status::kRunning: return to == Status::kDone || to == Status::kFailed;
    case Status::kFailed: return via_refinement && to == Status::kPending;
    case Status::kDone: return false;
  }
  return false;
}

const Subtask* AovGraph::find(std::string_view id) const {
  for (const auto& task : tasks_) {
    if (task.id == id) return &task;
  }
  return nullptr;
}

Subtask* AovGraph::find(std::string_view id) {
  for (auto& task : tasks_) {
    if (task.id == id) return &task;
  }
  return nullptr;
}

void AovGraph::connect(const std::string& from, const std::string& to) {
  Subtask* a = find(from);
  Subtask* b = find(to);
  if (a == nullptr || b == nullptr) throw std::invalid_argument("connect: unknown subtask " + from + "->" + to);
  if (!contains(a->next, to)) a->next.push_back(to);
  if (!contains(b->prev, from)) b->prev.push_back(from);
}

std::vector<std::string> AovGraph::ids() const {
  std::vector<std::string> out;
  out.reserve(tasks_.size());
  for (const auto& task : tasks_) out.push_back(task.id);
  return out;
}

std::vector<std::string> AovGraph::sources() const {
  std::set<std::string> out;
  for (const auto& task : tasks_) {
    if (task.prev.empty()) out.insert(task.id);
  }
  return {out.begin(), out.end()};
}

bool AovGraph::structurally_equal(const AovGraph& other) const {
  if (size() != other.size()) return false;
  auto normalized = [](const AovGraph& g) {
    std::map<std::string, std::tuple<std::string, std::string, std::set<std::string>,
                                     std::set<std::string>, Status>>
        out;
    for (const auto& t : g.tasks()) {
      out[t.id] = {t.objective, t.agent, {t.next.begin(), t.next.end()},
                   {t.prev.begin(), t.prev.end()}, t.status};
    }
    return out;
  };
  auto a = normalized(*this);
  auto b = normalized(other);
  return a.size() == size() && a == b;
}

std::string_view to_string(ViolationCode code) {
  switch (code) {
    case ViolationCode::kDupId: return "DUP_ID";
    case ViolationCode::kDanglingEdge: return "DANGLING_EDGE";
    case ViolationCode::kAsymmetricEdge: return "ASYMMETRIC_EDGE";
    case ViolationCode::kCycle: return "CYCLE";
    case ViolationCode::kUnknownAgent: return "UNKNOWN_AGENT";
    case ViolationCode::kNoSource: return "NO_SOURCE";
    case ViolationCode::kBadStatus: return "BAD_STATUS";
    case ViolationCode::kTooLarge: return "TOO_LARGE";
  }
  return "UNKNOWN";
}

bool ValidationReport::has(ViolationCode code) const {
  return std::any_of(violations.begin(), violations.end(),
                     [code](const Violation& v) { return v.code == code; });
}

bool ValidationReport::has(ViolationCode code, std::string_view subject) const {
  return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) {
    return v.code == code && v.subject == subject;
  });
}

std::set<ViolationCode> ValidationReport::codes() const {
  std::set<ViolationCode> out;
  for (const auto& v : violations) out.insert(v.code);
  return out;
}

std::string ValidationReport::summary() const {
  std::ostringstream out;
  for (const auto& v : violations) {
    out << "- " << to_string(v.code);
    if (!v.subject.empty()) out << " [" << v.subject << "]";
    out << ": " << v.message << "\n";
  }
  return out.str();
}

ParseError::ParseError(std::size_t position, const std::string& message)
    : std::runtime_error("parse error at offset " + std::to_string(position) + ": " + message),
      position_(position),
      detail_(message) {}

ValidationReport validate(const AovGraph& graph, const std::set<std::string>& agents) {
  return validate_impl(graph, &agents);
}

ValidationReport validate_structure(const AovGraph& graph) { return validate_impl(graph, nullptr); }

std::vector<std::string> topo_order(const AovGraph& graph) {
  const auto adj = adjacency(graph);
  std::map<std::string, int> indegree;
  for (const auto& [v, _] : adj) indegree.emplace(v, 0);
  for (const auto& [_, children] : adj) {
    for (const auto& c : children) ++indegree[c];
  }
  std::set<std::string> ready;
  for (const auto& [v, d] : indegree) {
    if (d == 0) ready.insert(v);
  }
  std::vector<std::string> order;
  order.reserve(adj.size());
  while (!ready.empty()) {
    const std::string v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (const auto& c : adj.at(v)) {
      if (--indegree[c] == 0) ready.insert(c);
    }
  }
  if (order.size() != adj.size()) {
    throw CyclicGraph("workflow graph contains a cycle (" + std::to_string(adj.size() - order.size()) +
                      " subtasks never become ready)");
  }
  return order;
}

std::vector<std::string> dfs_order(const AovGraph& graph) {
  (void)topo_order(graph);  // rejects cycles
  const auto adj = adjacency(graph);
  std::set<std::string> visited;
  std::vector<std::string> order;
  std::function<void(const std::string&)> visit = [&](const std::string& v) {
    if (!visited.insert(v).second) return;
    order.push_back(v);
    for (const auto& c : adj.at(v)) visit(c);
  };
  for (const auto& s : graph.sources()) visit(s);
  // Vertices only reachable through dangling prev entries.
  for (const auto& [v, _] : adj) visit(v);
  return order;
}

std::vector<AgentGroup> group_by_agent_dfs(const AovGraph& graph) {
  std::vector<AgentGroup> groups;
  std::map<std::string, std::size_t> slot;
  for (const auto& id : dfs_order(graph)) {
    const std::string& agent = graph.find(id)->agent;
    auto [it, inserted] = slot.emplace(agent, groups.size());
    if (inserted) groups.push_back({agent, {}});
    groups[it->second].subtasks.push_back(id);
  }
  return groups;
}

std::string serialize(const AovGraph& graph) {
  OrderedJson tasks = OrderedJson::object();
  for (const auto& t : graph.tasks()) {
    OrderedJson entry = OrderedJson::object();
    entry["id"] = t.id;
    entry["objective"] = t.objective;
    entry["next"] = t.next;
    entry["prev"] = t.prev;
    entry["status"] = std::string(to_string(t.status));
    entry["agent"] = t.agent;
    tasks[t.id] = std::move(entry);
  }
  OrderedJson root = OrderedJson::object();
  root["tasks"] = std::move(tasks);
  return dump_compact(root);
}

AovGraph deserialize(std::string_view text) {
  const MappedText mapped = quote_bare_keys(text);

  std::vector<std::set<std::string>> key_stack;
  std::string duplicate;
  auto callback = [&](int /*depth*/, OrderedJson::parse_event_t event, OrderedJson& parsed) {
    switch (event) {
      case OrderedJson::parse_event_t::object_start:
        key_stack.emplace_back();
        break;
      case OrderedJson::parse_event_t::object_end:
        if (!key_stack.empty()) key_stack.pop_back();
        break;
      case OrderedJson::parse_event_t::key:
        if (!key_stack.empty() && !key_stack.back().insert(parsed.get<std::string>()).second &&
            duplicate.empty()) {
          duplicate = parsed.get<std::string>();
        }
        break;
      default:
        break;
    }
    return true;
  };

  OrderedJson root;
  try {
    root = OrderedJson::parse(mapped.text, callback);
  } catch (const OrderedJson::parse_error& e) {
    const std::size_t at = e.byte == 0 ? 0 : e.byte - 1;
    throw ParseError(mapped.original_offset(at), e.what());
  }
  if (!duplicate.empty()) throw SchemaError("duplicate key '" + duplicate + "'");

  if (!root.is_object()) throw SchemaError("workflow must be a JSON object");
  if (!root.contains("tasks")) throw SchemaError("missing key 'tasks'");
  for (const auto& [key, _] : root.items()) {
    if (key != "tasks") throw SchemaError("unexpected top-level key '" + key + "'");
  }
  const auto& tasks = root["tasks"];
  if (!tasks.is_object()) throw SchemaError("'tasks' must be an object keyed by subtask id");
  if (tasks.size() > kMaxVertices) {
    throw SchemaError("workflow has " + std::to_string(tasks.size()) + " subtasks; the limit is " +
                      std::to_string(kMaxVertices));
  }

  AovGraph graph;
  for (const auto& [key, value] : tasks.items()) {
    const std::string where = "tasks." + key;
    if (!value.is_object()) throw SchemaError(where + " must be an object");
    for (const auto& [field, _] : value.items()) {
      if (std::find(std::begin(kSubtaskKeys), std::end(kSubtaskKeys), field) == std::end(kSubtaskKeys)) {
        throw SchemaError(where + ": unexpected key '" + field + "'");
      }
    }
    for (auto field : kSubtaskKeys) {
      if (!value.contains(std::string(field))) {
        throw SchemaError(where + ": missing key '" + std::string(field) + "'");
      }
    }
    Subtask task;
    task.id = string_field(value, "id", where);
    if (task.id != key) throw SchemaError(where + ": id '" + task.id + "' does not match its key");
    task.objective = string_field(value, "objective", where);
    task.agent = string_field(value, "agent", where);
    task.next = string_list(value["next"], where + ".next");
    task.prev = string_list(value["prev"], where + ".prev");
    const std::string status = string_field(value, "status", where);
    auto parsed_status = parse_status(status);
    if (!parsed_status) throw SchemaError(where + ": unknown status '" + status + "'");
    task.status = *parsed_status;
    graph.add(std::move(task));
  }
  return graph;
}

}  // namespace aov
