#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "aov/experiment.hpp"
#include "aov/suite.hpp"

namespace aov {

struct ServiceOptions {
  BackendConfig backend;
  std::optional<BackendConfig> judge;
  std::string results_dir;  // run records are stored here when set
  std::uint64_t seed = 0;
  bool oracle_fewshot = true;
  FaultPlan faults;
};

struct HttpRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct HttpResponse {
  int status = 200;
  Json body;
};

// Workflow and run store behind the JSON API. One execution per workflow at
// a time; executions run on background threads.
class BenchService {
 public:
  BenchService(Suite suite, ServiceOptions options);
  ~BenchService();
  BenchService(const BenchService&) = delete;
  BenchService& operator=(const BenchService&) = delete;

  HttpResponse handle(const HttpRequest& request);

  // Blocks until no execution is running.
  void wait_idle();

  // Starts listening on a background thread; returns the bound port.
  int start(const std::string& host, int port);
  // Blocks serving requests until stop() is called from another thread.
  bool run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace aov
