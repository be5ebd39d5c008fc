#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "sift/service/wire.hpp"
#include "sift/tagger/tagger.hpp"

namespace sift::service {

// Unknown or expired session id.
class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StoreOptions {
  // Base directory for relative model and tagger paths.
  std::string model_dir = ".";
  std::chrono::milliseconds idle_ttl = std::chrono::minutes(30);
  // When set, each session appends its requests and results to
  // <journal_dir>/<id>.jsonl.
  std::string journal_dir;
};

// Reads SIFT_MODEL_DIR, SIFT_JOURNAL_DIR and SIFT_SESSION_TTL (seconds).
StoreOptions options_from_environment();

// Live interpretation sessions. Every operation on one session runs under
// that session's lock, granted in arrival order; different sessions
// proceed independently. Models and taggers are loaded once per path and
// shared read-only.
class SessionStore {
 public:
  explicit SessionStore(StoreOptions options);
  ~SessionStore();

  // {"model": path | inline model object, "tagger": "uniform" | path,
  //  "config": {...}} -> {"v", "id", "k", "activities"}.
  json create(const json& body);
  // {"event": {...}} (or the bare event object) -> StepResult payload.
  json post_event(const std::string& id, const json& body);
  json query(const std::string& id, const json& body);
  // {"index", "activity", "step"?, "instance"?}: without step and instance
  // the reasons cover every reading of the activity.
  json explain(const std::string& id, const json& body);
  json finalize(const std::string& id);
  json state(const std::string& id);

  // Server-sent event frames from position `from` on, waiting up to
  // `timeout` for the first new one. `closed` once the session is
  // finalized or gone and every frame has been handed out.
  struct StreamChunk {
    std::vector<std::string> frames;
    bool closed = false;
  };
  StreamChunk read_stream(const std::string& id, std::size_t from, std::chrono::milliseconds timeout);

  // Re-runs a journal into a fresh session and checks every recorded
  // result; returns the new id. Throws ContractError on divergence.
  std::string replay(const std::string& journal_path);

  std::size_t evict_idle();
  std::size_t size() const;
  const StoreOptions& options() const { return options_; }

 private:
  struct Entry;
  std::shared_ptr<Entry> get(const std::string& id);
  std::shared_ptr<const DomainModel> load_model_ref(const json& ref, std::string& label);
  std::shared_ptr<const tagger::Tagger> load_tagger_ref(const json& ref, const DomainModel& model);
  std::string resolve(const std::string& path) const;
  std::string fresh_id();

  StoreOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::map<std::string, std::shared_ptr<const DomainModel>> models_;
  std::map<std::string, std::shared_ptr<const tagger::TrainedTagger>> taggers_;
  std::uint64_t counter_ = 0;
  std::uint64_t salt_;
};

}  // namespace sift::service
