#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "sift/errors.hpp"
#include "sift/eval/eval.hpp"
#include "sift/service/cli.hpp"
#include "sift/service/server.hpp"
#include "sift/service/store.hpp"
#include "sift/service/wire.hpp"
#include "sift/synth/synth.hpp"
#include "support/fixtures.hpp"
#include "support/random_models.hpp"
// After Eigen: <resolv.h> defines a `_res` macro that Eigen uses as a name.
#include "httplib.h"

using namespace sift;
using namespace sift::service;

namespace {

const char* kEvents[] = {"BloodSample", "BloodPressure", "Temperature", "CannulaInsertion"};

std::string fixtures() { return SIFT_FIXTURES; }

StoreOptions fixture_store() {
  StoreOptions o;
  o.model_dir = fixtures();
  return o;
}

json event(const char* type) { return {{"event", {{"type", type}}}}; }

// A server on a free local port, served from a background thread.
struct LiveServer {
  explicit LiveServer(StoreOptions o) : server(std::move(o)) {
    port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    thread = std::thread([this] { server.run(); });
    httplib::Client probe("127.0.0.1", port);
    for (int i = 0; i < 200 && !probe.Get("/sessions/none/state"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }

  Server server;
  int port = 0;
  std::thread thread;
};

json post(httplib::Client& c, const std::string& path, const json& body, int expect = 200) {
  auto res = c.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == expect);
  return json::parse(res->body);
}

// Temporary directory removed on scope exit.
struct TempDir {
  TempDir() {
    static std::atomic<int> n{0};
    path = std::filesystem::temp_directory_path() / ("sift_service_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::filesystem::path path;
};

}  // namespace

TEST_CASE("wire format: events, queries and configs") {
  const auto m = testing::care();
  const auto e = event_from_json(m, {{"type", "Temperature"}, {"attrs", {{"ward", "icu"}, {"dose", 2.5}}}});
  CHECK(m.event_types.name(e.type.value) == "Temperature");
  REQUIRE(e.attrs.size() == 2);
  CHECK_THROWS_AS(event_from_json(m, {{"type", "Nope"}}), SchemaError);
  CHECK_THROWS_AS(event_from_json(m, {{"attrs", json::object()}}), ParseError);
  CHECK_THROWS_AS(event_from_json(m, {{"type", "Temperature"}, {"attrs", {{"x", true}}}}), ParseError);

  const auto q = query_from_json(m, {{"index", 4}, {"activity", "A2"}, {"step", "last"}, {"instance", 1}});
  CHECK(q.is_boolean());
  CHECK(q.semantics == reasoner::Semantics::Credulous);
  const auto w = query_from_json(m, {{"index", 2}, {"semantics", "skeptical"}});
  CHECK_FALSE(w.activity);
  CHECK(w.semantics == reasoner::Semantics::Skeptical);
  CHECK_THROWS_AS(query_from_json(m, {{"activity", "A2"}}), ParseError);
  CHECK_THROWS_AS(query_from_json(m, {{"index", 1}, {"step", "middle"}}), ParseError);
  CHECK_THROWS_AS(query_from_json(m, {{"index", 1}, {"instance", 0}}), ParseError);

  const auto c = config_from_json({{"k", 2}, {"gamma", 0.01}, {"denominator", "valid"}, {"node_budget", 5}});
  CHECK(c.pipeline.k == 2u);
  CHECK(c.pipeline.denominator == pipeline::SmoothingDenominator::ValidSet);
  CHECK(c.solver.node_budget == 5u);
  CHECK(config_from_json(config_to_json(c)).pipeline.k == 2u);
  CHECK_FALSE(config_from_json({{"k", "auto"}}).pipeline.k);
  CHECK_THROWS_AS(config_from_json({{"k", 0}}), ParseError);
  CHECK_THROWS_AS(config_from_json({{"denominator", "x"}}), ParseError);
}

TEST_CASE("store answers equal direct library calls") {
  std::mt19937_64 rng(42);
  SessionStore store({});
  for (int round = 0; round < 25; ++round) {
    auto model = std::make_shared<const DomainModel>(testing::random_model(rng));
    const auto trace = testing::random_trace(rng, *model, 1 + rng() % 6, false);
    const json model_doc = json::parse(serialize_model(*model));
    const json config = {{"k", 1 + rng() % model->num_activities()}, {"gamma", 0.01}};
    const auto id = store.create({{"model", model_doc}, {"tagger", "uniform"}, {"config", config}}).at("id").get<std::string>();
    const auto cfg = config_from_json(config);
    pipeline::Analysis direct(model, std::make_shared<const tagger::UniformTagger>(model->num_activities()), cfg.pipeline,
                              cfg.solver);
    for (const auto& e : trace.events) {
      const auto via_store = store.post_event(id, {{"event", event_to_json(*model, e)}});
      CHECK(via_store == step_result_to_json(*model, direct.process_event(e)));
      for (int k = 0; k < 4; ++k) {
        json q = {{"index", 1 + rng() % e.index}};
        if (rng() % 2) q["activity"] = model->activities.name(rng() % model->num_activities());
        if (rng() % 2) q["step"] = to_string(kAllSteps[rng() % 4]);
        if (rng() % 2) q["instance"] = 1 + rng() % 2;
        if (rng() % 2) q["semantics"] = "skeptical";
        const auto parsed = query_from_json(*model, q);
        auto expected = answer_to_json(*model, direct.session().answer(parsed));
        expected["index"] = parsed.index;
        CHECK(store.query(id, q) == expected);
      }
    }
    CHECK(store.finalize(id) == summary_to_json(*model, direct.finalize()));
  }
}

TEST_CASE("store rejects bad references and finalized sessions") {
  SessionStore store(fixture_store());
  CHECK_THROWS_AS(store.create({{"tagger", "uniform"}}), ParseError);
  CHECK_THROWS_AS(store.create({{"model", "missing.json"}}), ParseError);
  CHECK_THROWS_AS(store.post_event("nope", event("BloodSample")), NotFound);
  const auto id = store.create({{"model", "care.json"}}).at("id").get<std::string>();
  store.post_event(id, event("BloodSample"));
  store.finalize(id);
  CHECK_THROWS_AS(store.post_event(id, event("BloodSample")), ContractError);
  CHECK_THROWS_AS(store.finalize(id), ContractError);
}

TEST_CASE("trained taggers load by path and must match the model") {
  TempDir dir;
  const auto m = testing::care_restricted();
  tagger::ArchitectureSpec spec = tagger::ArchitectureSpec::windowed(2, 3);
  spec.mlp = {4};
  tagger::Network net(spec, tagger::EmbeddingConfig::for_dataset(m.num_event_types(), {}));
  net.initialize(1);
  tagger::save_tagger(tagger::TrainedTagger(net, {"A1", "A2", "A3"}, {}), (dir.path / "t.json").string());
  tagger::save_tagger(tagger::TrainedTagger(net, {"X", "Y", "Z"}, {}), (dir.path / "bad.json").string());
  std::filesystem::copy_file(fixtures() + "/care_restricted.json", dir.path / "care_restricted.json");
  StoreOptions o;
  o.model_dir = dir.path.string();
  SessionStore store(o);
  const auto id = store.create({{"model", "care_restricted.json"}, {"tagger", "t.json"}}).at("id").get<std::string>();
  for (auto* t : kEvents) store.post_event(id, event(t));
  const auto last = store.state(id).at("results").back();
  REQUIRE(last.at("ranked").size() == 1);
  CHECK(last.at("ranked")[0].at("activity") == "A2");
  CHECK_THROWS_AS(store.create({{"model", "care_restricted.json"}, {"tagger", "bad.json"}}), SchemaError);
}

TEST_CASE("idle sessions expire") {
  StoreOptions o = fixture_store();
  o.idle_ttl = std::chrono::milliseconds(20);
  SessionStore store(o);
  const auto id = store.create({{"model", "care.json"}}).at("id").get<std::string>();
  CHECK(store.evict_idle() == 0);
  std::this_thread::sleep_for(std::chrono::milliseconds(60));
  CHECK(store.evict_idle() == 1);
  CHECK(store.size() == 0);
  CHECK_THROWS_AS(store.state(id), NotFound);
}

TEST_CASE("journals replay to identical results") {
  TempDir dir;
  StoreOptions o = fixture_store();
  o.journal_dir = dir.path.string();
  SessionStore store(o);
  const auto id = store.create({{"model", "care_restricted.json"}, {"config", {{"k", 2}}}}).at("id").get<std::string>();
  for (auto* t : kEvents) store.post_event(id, event(t));
  store.finalize(id);
  const auto journal = (dir.path / (id + ".jsonl")).string();
  const auto again = store.replay(journal);
  CHECK(again != id);
  CHECK(store.state(again).at("results") == store.state(id).at("results"));
  CHECK(store.state(again).at("summary") == store.state(id).at("summary"));

  // A tampered result is detected.
  std::ifstream in(journal);
  std::stringstream text;
  text << in.rdbuf();
  auto tampered = text.str();
  const auto at = tampered.find("\"deviation\":false");
  REQUIRE(at != std::string::npos);
  tampered.replace(at, 17, "\"deviation\":true");
  std::ofstream(dir.path / "bad.jsonl") << tampered;
  CHECK_THROWS_AS(store.replay((dir.path / "bad.jsonl").string()), ContractError);
}

TEST_CASE("HTTP: the Example-1 session") {
  LiveServer live(fixture_store());
  auto c = live.client();
  const auto created = post(c, "/sessions", {{"model", "care_restricted.json"}, {"tagger", "uniform"}});
  CHECK(created.at("v") == kWireVersion);
  const auto id = created.at("id").get<std::string>();
  const auto base = "/sessions/" + id;
  json last;
  for (auto* t : kEvents) last = post(c, base + "/events", event(t));
  CHECK(last.at("index") == 4);
  REQUIRE(last.at("ranked").size() == 1);
  CHECK(last.at("ranked")[0].at("activity") == "A2");

  const auto yes = post(c, base + "/query", {{"index", 4}, {"activity", "A2"}, {"step", "last"}, {"instance", 1}});
  CHECK(yes.at("kind") == "boolean");
  CHECK(yes.at("yes") == true);
  const auto none = post(c, base + "/query", {{"index", 4}, {"activity", "A1"}});
  CHECK(none.at("kind") == "wildcard");
  CHECK(none.at("arguments").empty());
  const auto why = post(c, base + "/explain", {{"index", 4}, {"activity", "A1"}});
  CHECK(why.at("valid") == false);
  REQUIRE(!why.at("reasons").empty());
  CHECK(why.at("reasons")[0].at("kind") == "mapping_violation");

  post(c, base + "/query", {{"index", 5}, {"activity", "A2"}}, 400);
  post(c, base + "/explain", {{"index", 4}, {"activity", "A1"}, {"step", "first"}}, 400);
  auto bad = c.Post(base + "/events", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body).at("error").at("status") == 400);
  post(c, "/sessions/unknown/events", event("BloodSample"), 404);
  auto missing = c.Get("/sessions/unknown/state");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  auto state = c.Get(base + "/state");
  REQUIRE(state);
  const auto s = json::parse(state->body);
  CHECK(s.at("length") == 4);
  CHECK(s.at("results").size() == 4);
  CHECK(s.at("events")[3].at("type") == "CannulaInsertion");
  const auto summary = post(c, base + "/finalize", json::object());
  CHECK(summary.at("deviations").empty());
}

TEST_CASE("HTTP: solver overflow answers 503 with a retry hint") {
  TempDir dir;
  const auto m = synth::generate_syn_model({}, 3);
  std::ofstream(dir.path / "syn.json") << serialize_model(m);
  synth::DatasetSpec spec;
  spec.counts = {{20, 1}};
  const auto trace = synth::generate_dataset(m, spec).front().trace;
  StoreOptions o;
  o.model_dir = dir.path.string();
  LiveServer live(o);
  auto c = live.client();
  const auto id = post(c, "/sessions", {{"model", "syn.json"}, {"config", {{"node_budget", 1}}}}).at("id").get<std::string>();
  bool overflowed = false;
  for (const auto& e : trace.events) {
    auto res = c.Post("/sessions/" + id + "/events", json{{"event", event_to_json(m, e)}}.dump(), "application/json");
    REQUIRE(res);
    if (res->status == 503) {
      overflowed = true;
      CHECK(res->get_header_value("Retry-After") == "1");
      CHECK(json::parse(res->body).at("error").at("status") == 503);
      break;
    }
    CHECK(res->status == 200);
  }
  CHECK(overflowed);
}

TEST_CASE("HTTP: interleaved sessions do not affect each other") {
  LiveServer live(fixture_store());
  auto c = live.client();
  const auto a = post(c, "/sessions", {{"model", "care_restricted.json"}}).at("id").get<std::string>();
  const auto b = post(c, "/sessions", {{"model", "care.json"}, {"config", {{"k", 1}}}}).at("id").get<std::string>();
  std::vector<json> ra, rb;
  const char* other[] = {"Temperature", "BloodSample", "CannulaInsertion", "BloodPressure"};
  for (int i = 0; i < 4; ++i) {
    ra.push_back(post(c, "/sessions/" + a + "/events", event(kEvents[i])));
    rb.push_back(post(c, "/sessions/" + b + "/events", event(other[i])));
  }
  SessionStore alone(fixture_store());
  const auto a2 = alone.create({{"model", "care_restricted.json"}}).at("id").get<std::string>();
  const auto b2 = alone.create({{"model", "care.json"}, {"config", {{"k", 1}}}}).at("id").get<std::string>();
  for (int i = 0; i < 4; ++i) CHECK(alone.post_event(a2, event(kEvents[i])) == ra[i]);
  for (int i = 0; i < 4; ++i) CHECK(alone.post_event(b2, event(other[i])) == rb[i]);
  for (int i = 1; i <= 4; ++i) {
    const json q = {{"index", i}};
    CHECK(post(c, "/sessions/" + a + "/query", q) == alone.query(a2, q));
    CHECK(post(c, "/sessions/" + b + "/query", q) == alone.query(b2, q));
  }
}

TEST_CASE("HTTP: concurrent requests on one session are serialized") {
  LiveServer live(fixture_store());
  auto c = live.client();
  const auto id = post(c, "/sessions", {{"model", "care.json"}}).at("id").get<std::string>();
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&] {
      auto cc = live.client();
      for (int i = 0; i < 3; ++i) {
        auto res = cc.Post("/sessions/" + id + "/events", event("Temperature").dump(), "application/json");
        if (res && res->status == 200) ++ok;
      }
    });
  for (auto& t : threads) t.join();
  CHECK(ok == 12);
  const auto s = json::parse(c.Get("/sessions/" + id + "/state")->body);
  CHECK(s.at("length") == 12);
  for (std::size_t i = 0; i < 12; ++i) CHECK(s.at("results")[i].at("index") == i + 1);
}

TEST_CASE("HTTP: the stream delivers steps in order and closes on finalize") {
  LiveServer live(fixture_store());
  auto c = live.client();
  const auto id = post(c, "/sessions", {{"model", "care_restricted.json"}}).at("id").get<std::string>();
  post(c, "/sessions/" + id + "/events", event(kEvents[0]));

  std::string received;
  std::thread reader([&] {
    auto rc = live.client();
    rc.Get("/sessions/" + id + "/stream", [&](const char* data, std::size_t n) {
      received.append(data, n);
      return true;
    });
  });
  for (int i = 1; i < 4; ++i) post(c, "/sessions/" + id + "/events", event(kEvents[i]));
  post(c, "/sessions/" + id + "/finalize", json::object());
  reader.join();

  std::vector<std::string> kinds;
  std::vector<std::size_t> ids, indices;
  std::istringstream lines(received);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("id: ", 0) == 0) ids.push_back(std::stoul(line.substr(4)));
    if (line.rfind("event: ", 0) == 0) kinds.push_back(line.substr(7));
    if (line.rfind("data: ", 0) == 0 && kinds.back() == "step") indices.push_back(json::parse(line.substr(6)).at("index"));
  }
  CHECK(kinds == std::vector<std::string>{"step", "step", "step", "step", "finalized"});
  CHECK(ids == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(indices == std::vector<std::size_t>{1, 2, 3, 4});

  // Resuming after the second frame replays the rest only.
  std::string resumed;
  auto rc = live.client();
  rc.Get("/sessions/" + id + "/stream", httplib::Headers{{"Last-Event-ID", "1"}}, [&](const char* data, std::size_t n) {
    resumed.append(data, n);
    return true;
  });
  CHECK(resumed.rfind("id: 2\n", 0) == 0);
}

TEST_CASE("HTTP: deviations are announced on the stream") {
  LiveServer live(fixture_store());
  auto c = live.client();
  const auto id = post(c, "/sessions", {{"model", "care_restricted.json"}}).at("id").get<std::string>();
  // Event 1 must open the start activity A1, which CannulaInsertion never is.
  const auto r = post(c, "/sessions/" + id + "/events", event("CannulaInsertion"));
  CHECK(r.at("deviation") == true);
  post(c, "/sessions/" + id + "/finalize", json::object());
  std::string received;
  c.Get("/sessions/" + id + "/stream", [&](const char* data, std::size_t n) {
    received.append(data, n);
    return true;
  });
  CHECK(received.find("event: deviation") != std::string::npos);
}

namespace {

int run_cli(std::vector<std::string> args, const std::string& input, std::string* out_text = nullptr,
            std::string* err_text = nullptr) {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = cli_main(args, in, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

TEST_CASE("CLI: exit codes") {
  std::string out, err;
  CHECK(run_cli({"--frobnicate"}, "", &out, &err) == 2);
  CHECK(err.find("Usage") != std::string::npos);
  CHECK(run_cli({}, "") == 2);
  CHECK(run_cli({"data", "gen", "--model", "x.json"}, "") == 2);
  CHECK(run_cli({"eval", "run", "--data", "d", "--model", "m", "--k", "zero"}, "") == 2);
  CHECK(run_cli({"data", "gen", "--model", "/nonexistent/m.json", "--lengths", "5:1", "--out", "/tmp/x"}, "") == 1);
  CHECK(run_cli({"--help"}, "", &out) == 0);
  CHECK(out.find("serve") != std::string::npos);
}

TEST_CASE("CLI: generate, train, evaluate, sweep") {
  TempDir dir;
  const auto model = (dir.path / "m.json").string();
  const auto data = (dir.path / "d.jsonl").string();
  const auto tagger_file = (dir.path / "t.json").string();
  REQUIRE(run_cli({"model", "gen", "--seed", "5", "--out", model}, "") == 0);
  REQUIRE(run_cli({"data", "gen", "--model", model, "--lengths", "6:6,10:4", "--seed", "2", "--out", data}, "") == 0);
  CHECK(std::filesystem::exists(data + ".manifest.json"));
  REQUIRE(run_cli({"tagger", "train", "--model", model, "--data", data, "--arch", "MB_2", "--epochs", "1", "--train-share",
                   "0.7", "--out", tagger_file, "--quiet"},
                  "") == 0);
  std::string csv;
  REQUIRE(run_cli({"eval", "run", "--data", data, "--tagger", tagger_file, "--model", model, "--k", "auto", "--gamma", "0.001",
                   "--train-share", "0.7"},
                  "", &csv) == 0);
  const auto table = eval::parse_csv(csv);
  CHECK(table.find("MB_2", "ALL", 100) != nullptr);
  std::string plot;
  REQUIRE(run_cli({"eval", "sweep", "--data", data, "--model", model, "--arch", "MB_2", "--fractions", "50,100", "--epochs",
                   "1", "--format", "plot"},
                  "", &plot) == 0);
  CHECK(json::parse(plot).is_object());
  CHECK(run_cli({"eval", "sweep", "--data", data, "--model", model, "--fractions", "0,100"}, "") == 2);
}

TEST_CASE("CLI: repl drives one session") {
  std::string out;
  const auto script =
      "event BloodSample\nevent BloodPressure\nevent Temperature\nevent CannulaInsertion\n"
      "query 4 A2 last 1\nexplain 4 A1\nquery 9 A2 last 1\nbogus\nfinalize\n";
  REQUIRE(run_cli({"repl", "--model", fixtures() + "/care_restricted.json"}, script, &out) == 0);
  std::istringstream lines(out);
  std::vector<std::string> all;
  for (std::string l; std::getline(lines, l);) all.push_back(l);
  REQUIRE(all.size() == 10);
  CHECK(json::parse(all[4]).at("ranked")[0].at("activity") == "A2");
  CHECK(json::parse(all[5]).at("yes") == true);
  CHECK(json::parse(all[6]).at("reasons")[0].at("kind") == "mapping_violation");
  CHECK(all[7].rfind("error:", 0) == 0);
  CHECK(all[8].rfind("error:", 0) == 0);
  CHECK(json::parse(all[9]).contains("events"));
}
