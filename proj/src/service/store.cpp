#include "sift/service/store.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "sift/errors.hpp"
#include "sift/pipeline/pipeline.hpp"

namespace sift::service {

namespace {

using Clock = std::chrono::steady_clock;

// Grants the lock in request arrival order.
class TicketLock {
 public:
  void lock() {
    std::unique_lock l(m_);
    const auto ticket = next_++;
    cv_.wait(l, [&] { return serving_ == ticket; });
  }
  void unlock() {
    {
      std::lock_guard l(m_);
      ++serving_;
    }
    cv_.notify_all();
  }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  std::uint64_t next_ = 0, serving_ = 0;
};

std::string frame(std::size_t seq, const char* event, const json& data) {
  return "id: " + std::to_string(seq) + "\nevent: " + event + "\ndata: " + data.dump() + "\n\n";
}

}  // namespace

struct SessionStore::Entry {
  std::string id;
  json model_ref, tagger_ref;
  SessionConfig config;
  std::shared_ptr<const DomainModel> model;
  std::unique_ptr<pipeline::Analysis> analysis;
  std::optional<pipeline::Summary> summary;
  std::atomic<Clock::rep> last_used{Clock::now().time_since_epoch().count()};
  void touch() { last_used = Clock::now().time_since_epoch().count(); }
  std::ofstream journal;

  TicketLock order;  // serializes operations

  std::mutex stream_mutex;  // guards the fields below
  std::condition_variable stream_cv;
  std::vector<std::string> frames;
  bool closed = false;

  void publish(const char* event, const json& data) {
    {
      std::lock_guard l(stream_mutex);
      frames.push_back(frame(frames.size(), event, data));
    }
    stream_cv.notify_all();
  }
  void close() {
    {
      std::lock_guard l(stream_mutex);
      closed = true;
    }
    stream_cv.notify_all();
  }
  void log(const json& record) {
    if (journal.is_open()) journal << record.dump() << '\n' << std::flush;
  }
};

StoreOptions options_from_environment() {
  StoreOptions o;
  if (const char* d = std::getenv("SIFT_MODEL_DIR")) o.model_dir = d;
  if (const char* j = std::getenv("SIFT_JOURNAL_DIR")) o.journal_dir = j;
  if (const char* t = std::getenv("SIFT_SESSION_TTL")) o.idle_ttl = std::chrono::seconds(std::strtoll(t, nullptr, 10));
  return o;
}

SessionStore::SessionStore(StoreOptions options) : options_(std::move(options)), salt_(std::random_device{}()) {}

SessionStore::~SessionStore() {
  std::lock_guard l(mutex_);
  for (auto& [id, e] : sessions_) e->close();
}

std::string SessionStore::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? path : (std::filesystem::path(options_.model_dir) / p).string();
}

std::string SessionStore::fresh_id() {
  std::mt19937_64 rng(salt_ ^ (++counter_ * 0x9e3779b97f4a7c15ull));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

std::shared_ptr<const DomainModel> SessionStore::load_model_ref(const json& ref, std::string& label) {
  if (ref.is_object()) {
    label = "inline";
    return std::make_shared<const DomainModel>(parse_model(ref.dump()));
  }
  if (!ref.is_string()) throw ParseError("model", "model must be a path or an inline model object");
  label = ref.get<std::string>();
  const auto path = resolve(label);
  std::lock_guard l(mutex_);
  auto& slot = models_[path];
  if (!slot) slot = std::make_shared<const DomainModel>(load_model(path));
  return slot;
}

std::shared_ptr<const tagger::Tagger> SessionStore::load_tagger_ref(const json& ref, const DomainModel& model) {
  if (!ref.is_string()) throw ParseError("tagger", "tagger must be \"uniform\" or a path");
  const auto name = ref.get<std::string>();
  if (name == "uniform") return std::make_shared<const tagger::UniformTagger>(model.num_activities());
  const auto path = resolve(name);
  std::shared_ptr<const tagger::TrainedTagger> t;
  {
    std::lock_guard l(mutex_);
    auto& slot = taggers_[path];
    if (!slot) slot = std::make_shared<const tagger::TrainedTagger>(tagger::load_tagger(path));
    t = slot;
  }
  std::vector<std::string> names;
  for (std::size_t a = 0; a < model.num_activities(); ++a) names.emplace_back(model.activities.name(a));
  if (t->activities() != names) throw SchemaError("tagger activities do not match the model's activities");
  return t;
}

json SessionStore::create(const json& body) {
  auto e = std::make_shared<Entry>();
  std::string model_label;
  e->model = load_model_ref(field(body, "model"), model_label);
  e->model_ref = body.at("model").is_object() ? json("inline") : body.at("model");
  e->tagger_ref = body.contains("tagger") ? body.at("tagger") : json("uniform");
  auto tg = load_tagger_ref(e->tagger_ref, *e->model);
  e->config = config_from_json(body.contains("config") ? body.at("config") : json());
  e->analysis = std::make_unique<pipeline::Analysis>(e->model, tg, e->config.pipeline, e->config.solver);
  {
    std::lock_guard l(mutex_);
    do e->id = fresh_id();
    while (sessions_.count(e->id));
    sessions_[e->id] = e;
  }
  if (!options_.journal_dir.empty()) {
    std::filesystem::create_directories(options_.journal_dir);
    e->journal.open((std::filesystem::path(options_.journal_dir) / (e->id + ".jsonl")).string(), std::ios::app);
    json create_record = body;
    if (!create_record.contains("tagger")) create_record["tagger"] = "uniform";
    e->log({{"op", "create"}, {"body", create_record}});
  }
  json activities = json::array();
  for (std::size_t a = 0; a < e->model->num_activities(); ++a) activities.push_back(e->model->activities.name(a));
  return {{"v", kWireVersion}, {"id", e->id}, {"k", e->analysis->k()}, {"activities", activities}};
}

std::shared_ptr<SessionStore::Entry> SessionStore::get(const std::string& id) {
  std::lock_guard l(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
  return it->second;
}

namespace {

// Holds a session's ticket for the duration of one operation.
template <class Entry>
struct Turn {
  explicit Turn(Entry& e) : e_(e) {
    e_.order.lock();
    e_.touch();
  }
  ~Turn() {
    e_.touch();
    e_.order.unlock();
  }
  Entry& e_;
};

}  // namespace

json SessionStore::post_event(const std::string& id, const json& body) {
  auto e = get(id);
  Turn turn(*e);
  if (e->analysis->finalized()) throw ContractError("session is finalized");
  const json& ev = body.is_object() && body.contains("event") ? body.at("event") : body;
  auto event = event_from_json(*e->model, ev);
  event.index = e->analysis->length() + 1;
  try {
    const auto& r = e->analysis->process_event(event);
    auto payload = step_result_to_json(*e->model, r);
    e->publish("step", payload);
    if (r.deviation) e->publish("deviation", {{"v", kWireVersion}, {"index", r.index}});
    e->log({{"op", "event"}, {"event", event_to_json(*e->model, event)}, {"result", payload}});
    return payload;
  } catch (const BudgetExceeded&) {
    if (e->analysis->length() == event.index) {
      auto payload = step_result_to_json(*e->model, e->analysis->results().back());
      e->publish("step", payload);
      e->log({{"op", "event"}, {"event", event_to_json(*e->model, event)}, {"result", payload}});
    }
    throw;
  }
}

json SessionStore::query(const std::string& id, const json& body) {
  auto e = get(id);
  Turn turn(*e);
  const auto q = query_from_json(*e->model, body);
  auto out = answer_to_json(*e->model, e->analysis->session().answer(q));
  out["index"] = q.index;
  return out;
}

json SessionStore::explain(const std::string& id, const json& body) {
  auto e = get(id);
  Turn turn(*e);
  auto q = query_from_json(*e->model, body);
  if (!q.activity) throw ParseError("activity", "missing field 'activity'");
  auto& s = e->analysis->session();
  std::vector<reasoner::InvalidityReason> reasons;
  if (q.step && q.instance)
    reasons = s.explain(q);
  else if (!q.step && !q.instance)
    reasons = s.explain_activity(q.index, *q.activity);
  else
    throw ParseError("step", "give both step and instance, or neither");
  auto out = reasons_to_json(*e->model, reasons);
  out["index"] = q.index;
  return out;
}

json SessionStore::finalize(const std::string& id) {
  auto e = get(id);
  Turn turn(*e);
  if (e->analysis->finalized()) throw ContractError("session is already finalized");
  e->summary = e->analysis->finalize();
  auto payload = summary_to_json(*e->model, *e->summary);
  e->publish("finalized", payload);
  e->log({{"op", "finalize"}, {"result", payload}});
  e->close();
  return payload;
}

json SessionStore::state(const std::string& id) {
  auto e = get(id);
  Turn turn(*e);
  json events = json::array();
  for (const auto& ev : e->analysis->session().events()) events.push_back(event_to_json(*e->model, ev));
  json results = json::array();
  for (const auto& r : e->analysis->results()) results.push_back(step_result_to_json(*e->model, r));
  json out = {{"v", kWireVersion},
              {"id", e->id},
              {"model", e->model_ref},
              {"tagger", e->tagger_ref},
              {"config", config_to_json(e->config)},
              {"k", e->analysis->k()},
              {"length", e->analysis->length()},
              {"finalized", e->analysis->finalized()},
              {"events", events},
              {"results", results}};
  if (e->summary) out["summary"] = summary_to_json(*e->model, *e->summary);
  return out;
}

SessionStore::StreamChunk SessionStore::read_stream(const std::string& id, std::size_t from,
                                                    std::chrono::milliseconds timeout) {
  auto e = get(id);
  std::unique_lock l(e->stream_mutex);
  e->stream_cv.wait_for(l, timeout, [&] { return e->frames.size() > from || e->closed; });
  StreamChunk out;
  for (auto i = from; i < e->frames.size(); ++i) out.frames.push_back(e->frames[i]);
  out.closed = e->closed;
  return out;
}

std::string SessionStore::replay(const std::string& journal_path) {
  std::ifstream in(journal_path);
  if (!in) throw ParseError(journal_path, "cannot open journal");
  std::string line, id;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& ex) {
      throw ParseError("line " + std::to_string(line_no), ex.what());
    }
    const auto op = field(record, "op").get<std::string>();
    if (op == "create") {
      id = create(field(record, "body")).at("id").get<std::string>();
      continue;
    }
    if (id.empty()) throw ParseError("line " + std::to_string(line_no), "journal does not start with a create record");
    json got;
    if (op == "event") {
      try {
        got = post_event(id, field(record, "event"));
      } catch (const BudgetExceeded&) {
        got = state(id).at("results").back();
      }
    } else if (op == "finalize") {
      got = finalize(id);
    } else {
      throw ParseError("line " + std::to_string(line_no), "unknown op '" + op + "'");
    }
    if (got != field(record, "result"))
      throw ContractError("replay diverges from the journal at line " + std::to_string(line_no));
  }
  if (id.empty()) throw ParseError(journal_path, "empty journal");
  return id;
}

std::size_t SessionStore::evict_idle() {
  const auto now = Clock::now().time_since_epoch().count();
  const auto ttl = std::chrono::duration_cast<Clock::duration>(options_.idle_ttl).count();
  std::vector<std::shared_ptr<Entry>> gone;
  {
    std::lock_guard l(mutex_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      // A request that already holds the entry keeps it alive.
      if (now - it->second->last_used.load() > ttl) {
        gone.push_back(it->second);
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& e : gone) e->close();
  return gone.size();
}

std::size_t SessionStore::size() const {
  std::lock_guard l(mutex_);
  return sessions_.size();
}

}  // namespace sift::service
