#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "docpipe/assessment.hpp"
#include "docpipe/orchestrator.hpp"

namespace docpipe {

// {"tokens": {"<token>": "admin" | "reviewer"}}
std::map<std::string, Role> load_tokens(const std::filesystem::path& path);

struct HttpResponse {
  int status = 200;
  json body;
};

// Endpoints:
//   POST /jobs                      admin      {"packet_path": ...} or {"packet": {...}}
//   GET  /jobs/{id}                 any role
//   GET  /jobs/{id}/sections        any role
//   GET  /jobs/{id}/extraction      any role
//   GET  /jobs/{id}/intermediates   any role
//   GET  /jobs/{id}/determinations  any role
//   GET  /review/queue              any role
//   POST /review/{id}               any role, ReviewDecision body
//   GET  /reports/latest            any role
class Service {
 public:
  Service(Engine& engine, WorkerPool& pool, std::map<std::string, Role> tokens, std::string backend_name = "mock");

  // Socket-free dispatch; `authorization` is the raw Authorization header.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& authorization,
                      const std::string& body);

  // Blocks until stop().
  void listen(const std::string& host, int port);
  void stop();

 private:
  HttpResponse route(const std::string& method, const std::string& path, Role role, const std::string& body);

  Engine& engine_;
  WorkerPool& pool_;
  std::map<std::string, Role> tokens_;
  std::string backend_name_;
  std::shared_ptr<void> server_;  // httplib::Server, kept opaque here
};

}  // namespace docpipe
