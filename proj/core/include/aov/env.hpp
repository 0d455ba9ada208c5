#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aov/json_text.hpp"
#include "aov/llm.hpp"

namespace aov {

struct AgentSpec {
  std::string name;
  std::string description;
  std::vector<ToolSchema> tools;

  const ToolSchema* tool(std::string_view tool_name) const;
};

class AgentCatalog {
 public:
  AgentCatalog() = default;
  explicit AgentCatalog(std::vector<AgentSpec> agents);

  const std::vector<AgentSpec>& agents() const { return agents_; }
  const AgentSpec* find(std::string_view name) const;
  // Agent exposing `tool_name`; tool names are unique across the built-in
  // catalog but the first owner wins otherwise.
  const AgentSpec* owner_of(std::string_view tool_name) const;
  std::set<std::string> names() const;
  std::vector<ToolSchema> all_tools() const;

  // Planner-prompt block: one bullet per agent with its API signatures.
  std::string prompt_block() const;
  Json to_json() const;

 private:
  std::vector<AgentSpec> agents_;
};

// database_agent, vision_agent, map_agent, analytics_agent with their APIs.
AgentCatalog catalog_default();

struct Raster {
  std::string aoi;
  std::string start;
  std::string end;
  std::string source;  // "EO" or "SAR"

  bool operator==(const Raster&) const = default;
};

struct Detection {
  std::string dataset;
  std::string model;
  std::string category;
  std::int64_t count = 0;

  bool operator==(const Detection&) const = default;
};

struct MapLayer {
  std::string id;
  std::string target;
  std::string title;
  std::vector<std::string> annotations;

  bool operator==(const MapLayer&) const = default;
};

struct EnvState {
  std::map<std::string, Raster> loaded_rasters;
  std::map<std::string, Detection> detections;
  std::vector<MapLayer> map_layers;
  std::map<std::string, double> analytics;

  Json to_json() const;
  static EnvState from_json(const Json& json);
  std::uint64_t fingerprint() const;

  bool operator==(const EnvState&) const = default;
};

enum class ToolErrorKind { kUnknownTool, kSchemaViolation, kInjectedFault };

std::string_view to_string(ToolErrorKind kind);

struct ToolError {
  ToolErrorKind kind;
  std::string message;

  bool operator==(const ToolError&) const = default;
};

struct ToolCallRecord {
  std::int64_t seq = 0;
  std::string agent;
  std::string tool;
  Json arguments = Json::object();
  Json result;
  std::optional<ToolError> error;
  bool perturbed = false;  // wrong_result fault applied
  Usage usage_attribution;

  bool ok() const { return !error.has_value(); }
  Json to_json() const;
  static ToolCallRecord from_json(const Json& json);

  bool operator==(const ToolCallRecord&) const = default;
};

enum class FaultEffect { kError, kWrongResult, kDelay };

struct FaultEntry {
  std::string agent;
  std::string tool;
  int occurrence = 1;  // 1-based index among calls to (agent, tool)
  FaultEffect effect = FaultEffect::kError;
  std::string message = "injected fault";
  int delay_ms = 0;
};

struct FaultPlan {
  std::vector<FaultEntry> entries;

  const FaultEntry* match(std::string_view agent, std::string_view tool, int occurrence) const;
  Json to_json() const;
  static FaultPlan from_json(const Json& json);  // throws std::invalid_argument
};

class SchemaViolationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Lowercases keys, normalizes dates to YYYY-MM-DD and enum values to their
// declared spelling; region ids keep their case. Throws SchemaViolationError.
Json canonicalize_arguments(const ToolSchema& schema, const Json& arguments);

// Accepts YYYY-MM-DD, YYYY/MM/DD, YYYY.MM.DD, YYYYMMDD and YYYY-MM.
std::optional<std::string> normalize_date(std::string_view text);

struct InvokeOutcome {
  Json result;
  EnvState state;
  ToolCallRecord record;
};

// Pure tool invocation. `occurrence` is the 1-based count of calls to
// (agent, tool) including this one; it selects fault-plan entries. Failed
// calls leave the state untouched and return an error-flagged record.
InvokeOutcome invoke(const EnvState& state, const AgentCatalog& catalog, const std::string& agent,
                     const std::string& tool, const Json& arguments, const FaultPlan& faults,
                     int occurrence, std::int64_t seq, std::uint64_t seed = 0,
                     Usage attribution = {});

// Stateful wrapper owning one task's state, call counters and trace.
class Environment {
 public:
  Environment(AgentCatalog catalog, FaultPlan faults = {}, std::uint64_t seed = 0, EnvState initial = {});

  const ToolCallRecord& call(const std::string& agent, const std::string& tool, const Json& arguments,
                             Usage attribution = {});

  const EnvState& state() const { return state_; }
  const std::vector<ToolCallRecord>& trace() const { return trace_; }
  const AgentCatalog& catalog() const { return catalog_; }

 private:
  AgentCatalog catalog_;
  FaultPlan faults_;
  std::uint64_t seed_;
  EnvState state_;
  std::vector<ToolCallRecord> trace_;
  std::map<std::pair<std::string, std::string>, int> occurrences_;
};

class BadAssertionPath : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Passes when at least `min_count` values resolved by `path` satisfy `op`
// against `value`. Paths are dotted, with `[*]` wildcards and `[n]` indices,
// rooted at one of the EnvState fields.
struct Assertion {
  std::string path;
  std::string op = "exists";  // == != < <= > >= exists contains
  Json value;
  int min_count = 1;

  Json to_json() const;
  static Assertion from_json(const Json& json);
  std::string describe() const;
};

struct AssertionOutcome {
  bool ok = true;
  std::vector<std::string> failures;
};

// Values addressed by `path`; throws BadAssertionPath for malformed paths.
std::vector<Json> resolve_path(const Json& root, std::string_view path);

AssertionOutcome assert_final_state(const EnvState& state, std::span<const Assertion> assertions);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0);

}  // namespace aov
