#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "sift/service/store.hpp"

namespace httplib {
class Server;
}

namespace sift::service {

// HTTP/1.1 front end of a SessionStore:
//   POST /sessions                  create
//   POST /sessions/{id}/events      one event -> StepResult
//   POST /sessions/{id}/query       interpretation query
//   POST /sessions/{id}/explain     invalidity reasons
//   POST /sessions/{id}/finalize    summary
//   GET  /sessions/{id}/state       prefix and per-step results
//   GET  /sessions/{id}/stream      text/event-stream of step, deviation
//                                   and finalized events (Last-Event-ID honoured)
// Errors are {"v", "error": {"status", "message"}}: 404 unknown session,
// 400 malformed request, 503 with Retry-After when the solver budget runs out.
class Server {
 public:
  explicit Server(StoreOptions options);
  ~Server();

  // Binds to host:port (0 picks a free port) and returns the port, or -1.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind.
  bool run();
  void stop();

  SessionStore& store() { return *store_; }

 private:
  std::unique_ptr<SessionStore> store_;
  std::unique_ptr<httplib::Server> http_;
  std::atomic<bool> stopping_{false};
};

}  // namespace sift::service
