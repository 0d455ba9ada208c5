#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aov {

inline constexpr std::size_t kMaxVertices = 64;

enum class Status { kPending, kRunning, kDone, kFailed };

std::string_view to_string(Status status);
std::optional<Status> parse_status(std::string_view text);

// Legal status moves. failed -> pending is only legal when `via_refinement`.
bool can_transition(Status from, Status to, bool via_refinement = false);

struct Subtask {
  std::string id;
  std::string objective;
  std::string agent;
  std::vector<std::string> next;
  std::vector<std::string> prev;
  Status status = Status::kPending;

  bool operator==(const Subtask&) const = default;
};

// The workflow DAG. Vertices are kept in insertion order so that duplicate
// ids can be represented and reported; lookups go through find().
class AovGraph {
 public:
  AovGraph() = default;
  explicit AovGraph(std::vector<Subtask> tasks) : tasks_(std::move(tasks)) {}

  const std::vector<Subtask>& tasks() const { return tasks_; }
  std::vector<Subtask>& mutable_tasks() { return tasks_; }

  std::size_t size() const { return tasks_.size(); }
  bool empty() const { return tasks_.empty(); }

  const Subtask* find(std::string_view id) const;
  Subtask* find(std::string_view id);

  void add(Subtask task) { tasks_.push_back(std::move(task)); }
  // Adds a -> b to both adjacency lists.
  void connect(const std::string& from, const std::string& to);

  std::vector<std::string> ids() const;
  std::vector<std::string> sources() const;

  // Order-insensitive comparison: same vertex set, same fields, edges
  // compared as sets.
  bool structurally_equal(const AovGraph& other) const;

  bool operator==(const AovGraph&) const = default;

 private:
  std::vector<Subtask> tasks_;
};

enum class ViolationCode {
  kDupId,
  kDanglingEdge,
  kAsymmetricEdge,
  kCycle,
  kUnknownAgent,
  kNoSource,
  kBadStatus,
  kTooLarge,
};

std::string_view to_string(ViolationCode code);

struct Violation {
  ViolationCode code;
  // Vertex id, or "a->b" for edge subjects.
  std::string subject;
  std::string message;

  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationCode code) const;
  bool has(ViolationCode code, std::string_view subject) const;
  std::set<ViolationCode> codes() const;
  std::string summary() const;
};

class CyclicGraph : public std::runtime_error {
 public:
  explicit CyclicGraph(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t position, const std::string& message);
  std::size_t position() const { return position_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t position_;
  std::string detail_;
};

class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// Every violation is reported, not only the first. `agents` is the set of
// names that may appear in Subtask::agent.
ValidationReport validate(const AovGraph& graph, const std::set<std::string>& agents);

// Structural checks only (no agent membership).
ValidationReport validate_structure(const AovGraph& graph);

// Kahn's algorithm; ready vertices are released in ascending id order.
std::vector<std::string> topo_order(const AovGraph& graph);

struct AgentGroup {
  std::string agent;
  std::vector<std::string> subtasks;

  bool operator==(const AgentGroup&) const = default;
};

// Preorder DFS from sources (ascending id, children ascending id), then the
// visit sequence is grouped per agent in order of first visit.
std::vector<AgentGroup> group_by_agent_dfs(const AovGraph& graph);

// DFS preorder used by group_by_agent_dfs.
std::vector<std::string> dfs_order(const AovGraph& graph);

// `{"tasks": {...}}` with `", "` / `": "` separators and subtask keys in the
// order id, objective, next, prev, status, agent.
std::string serialize(const AovGraph& graph);

// Accepts untrusted text. Bare identifier keys (`tasks: {...}`) are quoted
// before parsing. Throws ParseError on malformed text and SchemaError on
// missing, extra or mistyped keys.
AovGraph deserialize(std::string_view text);

}  // namespace aov
