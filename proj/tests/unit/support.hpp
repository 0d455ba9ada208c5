#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "aov/graph.hpp"
#include "aov/suite.hpp"

namespace aov::testing {

inline std::string source_path(const std::string& relative) { return std::string(AOVFLOW_SOURCE_DIR) + "/" + relative; }

inline const Suite& bundled_suite() {
  static const Suite suite = load_suite(source_path("data/suite"));
  return suite;
}

inline Subtask vertex(std::string id, std::string agent, std::string objective = "do it") {
  Subtask t;
  t.id = std::move(id);
  t.agent = std::move(agent);
  t.objective = std::move(objective);
  return t;
}

// task1 -> task2 -> ... with the given agents.
inline AovGraph chain(const std::vector<std::string>& agents) {
  AovGraph g;
  for (std::size_t i = 0; i < agents.size(); ++i) g.add(vertex("task" + std::to_string(i + 1), agents[i]));
  for (std::size_t i = 1; i < agents.size(); ++i) g.connect("task" + std::to_string(i), "task" + std::to_string(i + 1));
  return g;
}

// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("aovflow-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string write(const std::string& relative, const std::string& text) const {
    const auto file = path_ / relative;
    std::filesystem::create_directories(file.parent_path());
    std::ofstream(file, std::ios::binary) << text;
    return file.string();
  }

 private:
  std::filesystem::path path_;
};

}  // namespace aov::testing
