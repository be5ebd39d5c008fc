#include "sift/service/server.hpp"

#include <functional>

#include "httplib.h"
#include "sift/errors.hpp"

namespace sift::service {

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, {{"v", kWireVersion}, {"error", {{"status", status}, {"message", message}}}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ParseError("body", e.what());
  }
}

// Maps library exceptions to HTTP statuses.
void guarded(httplib::Response& res, const std::function<json()>& op) {
  try {
    reply(res, 200, op());
  } catch (const NotFound& e) {
    fail(res, 404, e.what());
  } catch (const BudgetExceeded& e) {
    res.set_header("Retry-After", "1");
    fail(res, 503, std::string(e.what()) + "; retry later or create the session with a larger node_budget");
  } catch (const ParseError& e) {
    fail(res, 400, e.what());
  } catch (const SchemaError& e) {
    fail(res, 400, e.what());
  } catch (const ContractError& e) {
    fail(res, 400, e.what());
  } catch (const json::exception& e) {
    fail(res, 400, e.what());
  } catch (const std::exception& e) {
    fail(res, 500, e.what());
  }
}

}  // namespace

Server::Server(StoreOptions options)
    : store_(std::make_unique<SessionStore>(std::move(options))), http_(std::make_unique<httplib::Server>()) {
  auto& s = *http_;
  auto& store = *store_;

  s.set_pre_routing_handler([&store](const httplib::Request&, httplib::Response&) {
    store.evict_idle();
    return httplib::Server::HandlerResponse::Unhandled;
  });

  s.Post("/sessions", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return store.create(parse_body(req)); });
  });
  s.Post(R"(/sessions/([^/]+)/events)", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return store.post_event(req.matches[1], parse_body(req)); });
  });
  s.Post(R"(/sessions/([^/]+)/query)", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return store.query(req.matches[1], parse_body(req)); });
  });
  s.Post(R"(/sessions/([^/]+)/explain)", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return store.explain(req.matches[1], parse_body(req)); });
  });
  s.Post(R"(/sessions/([^/]+)/finalize)", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return store.finalize(req.matches[1]); });
  });
  s.Get(R"(/sessions/([^/]+)/state)", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return store.state(req.matches[1]); });
  });
  s.Get(R"(/sessions/([^/]+)/stream)", [this, &store](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    std::size_t from = 0;
    if (req.has_header("Last-Event-ID")) from = std::stoull(req.get_header_value("Last-Event-ID")) + 1;
    try {
      store.read_stream(id, from, std::chrono::milliseconds(0));
    } catch (const NotFound& e) {
      fail(res, 404, e.what());
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, &store, id, from](std::size_t, httplib::DataSink& sink) mutable {
      int idle_polls = 0;
      for (;;) {
        if (stopping_) {
          sink.done();
          return true;
        }
        SessionStore::StreamChunk chunk;
        try {
          chunk = store.read_stream(id, from, std::chrono::milliseconds(250));
        } catch (const NotFound&) {
          sink.done();
          return true;
        }
        for (const auto& f : chunk.frames)
          if (!sink.write(f.data(), f.size())) return false;
        from += chunk.frames.size();
        if (chunk.closed) {
          sink.done();
          return true;
        }
        if (!chunk.frames.empty()) {
          idle_polls = 0;
        } else if (!sink.is_writable()) {
          return false;
        } else if (++idle_polls == 60) {  // comment line every 15 s keeps proxies from timing out
          static const std::string keepalive = ": keepalive\n\n";
          if (!sink.write(keepalive.data(), keepalive.size())) return false;
          idle_polls = 0;
        }
      }
    });
  });
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) return http_->bind_to_any_port(host);
  return http_->bind_to_port(host, port) ? port : -1;
}

bool Server::run() { return http_->listen_after_bind(); }

void Server::stop() {
  stopping_ = true;
  if (http_) http_->stop();
}

}  // namespace sift::service
