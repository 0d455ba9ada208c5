#pragma once

#include <string>
#include <vector>

#include "aov/env.hpp"
#include "aov/evalkit.hpp"

namespace aov {

struct TaskCase {
  std::string id;
  std::string query;
  bool oracle = false;  // the few-shot exemplar
  std::vector<std::string> tags;
  GroundTruth ground_truth;

  Json to_json() const;
};

struct Suite {
  std::string name;
  std::vector<TaskCase> tasks;

  const TaskCase* find(std::string_view id) const;
  const TaskCase* oracle() const;
  // Tasks that are scored; the oracle is left out when used as few-shot.
  std::vector<const TaskCase*> scored(bool oracle_fewshot) const;
};

// Parses one task document; errors name the task id and field path.
TaskCase parse_task(const Json& json, const AgentCatalog& catalog, const std::string& where = {});

// Accepts a manifest file ({"name", "tasks": [relative paths]}), a directory
// holding manifest.json, or a single task file. An empty file is an empty
// suite. Throws ParseError.
Suite load_suite(const std::string& path, const AgentCatalog& catalog = catalog_default());

}  // namespace aov
