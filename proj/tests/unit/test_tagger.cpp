#include <cmath>
#include <random>

#include "doctest.h"
#include "sift/core/dataset.hpp"
#include "sift/errors.hpp"
#include "sift/tagger/tagger.hpp"

using namespace sift;
using namespace sift::tagger;

namespace {

ArchitectureSpec small_recurrent() {
  auto s = ArchitectureSpec::recurrent(3);
  s.hidden = 4;
  s.layers = 2;
  s.dense = 6;
  s.head = 5;
  return s;
}

ArchitectureSpec small_windowed(std::size_t k) {
  auto s = ArchitectureSpec::windowed(k, 3);
  s.mlp = {8, 6};
  return s;
}

EmbeddingConfig type_only(std::size_t types, FieldMode mode = FieldMode::Learned) {
  EmbeddingConfig cfg;
  cfg.fields.push_back(FieldSpec{"type", FieldKind::EventType, mode, mode == FieldMode::Learned ? 4u : 0u, types});
  return cfg;
}

Event ev(std::uint32_t type, std::size_t index = 1) { return Event{index, EventTypeId{type}, {}}; }

// Four event types, three activities. The label of an event is a function
// of its own type and the previous type, so both architectures can fit it.
std::vector<LabeledTrace> toy_dataset(std::size_t n, std::size_t len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> type(0, 3);
  std::vector<LabeledTrace> out;
  for (std::size_t t = 0; t < n; ++t) {
    LabeledTrace r;
    r.trace.id = "t" + std::to_string(t);
    std::uint32_t prev = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const auto ty = type(rng);
      r.trace.events.push_back(ev(ty, i + 1));
      const std::uint32_t label = ty == 3 ? (prev % 2 == 0 ? 1 : 2) : ty % 3;
      r.labels.push_back(Assignment{ActivityId{label}, StepType::FirstAndLast, 1});
      prev = ty;
    }
    out.push_back(std::move(r));
  }
  return out;
}

const std::vector<std::string> kThree = {"a", "b", "c"};

}  // namespace

TEST_CASE("gradient check: windowed network") {
  for (std::size_t k : {1u, 3u, 5u}) {
    const auto r = gradient_check(small_windowed(k), 11 + k);
    CAPTURE(k);
    CHECK(r.parameters > 0);
    CHECK(r.max_relative_error <= 1e-4);
  }
}

TEST_CASE("gradient check: recurrent network through time, dropout on") {
  const auto r = gradient_check(small_recurrent(), 5);
  CHECK(r.max_relative_error <= 1e-4);
  auto three = small_recurrent();
  three.layers = 3;
  CHECK(gradient_check(three, 6).max_relative_error <= 1e-4);
}

TEST_CASE("zero weights give a uniform softmax and loss ln|A|") {
  for (auto spec : {small_recurrent(), small_windowed(3)}) {
    spec.num_activities = 5;
    Network net(spec, type_only(4));
    net.parameters().setZero();
    Sequence s;
    for (std::uint32_t i = 0; i < 4; ++i) {
      s.events.push_back(EncodedEvent{{i}, {}});
      s.labels.push_back(i);
    }
    const Sequence* batch[] = {&s};
    CHECK(net.loss(batch, nullptr, nullptr) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  }
}

TEST_CASE("embedding layouts") {
  SUBCASE("one-hot over 16 event types") {
    Network net(small_windowed(3), type_only(16, FieldMode::OneHot));
    const auto v = net.embed(EncodedEvent{{9}, {}});
    CHECK(v.size() == 16);
    CHECK(v.sum() == 1.0);
    CHECK(v[9] == 1.0);
  }
  SUBCASE("learned width 4 is the table column") {
    Network net(small_windowed(3), type_only(6));
    net.initialize(3);
    const auto& table = net.layout().front();
    CHECK(table.rows == 4);
    CHECK(table.cols == 6);
    const auto v = net.embed(EncodedEvent{{2}, {}});
    REQUIRE(v.size() == 4);
    for (int k = 0; k < 4; ++k) CHECK(v[k] == net.parameters()[static_cast<Eigen::Index>(table.offset + 2 * 4 + k)]);
  }
  SUBCASE("attribute fields from a dataset") {
    std::vector<Trace> traces(1);
    traces[0].events.push_back(Event{1, EventTypeId{0}, {{"ward", std::string("B")}, {"dose", 2.0}}});
    traces[0].events.push_back(Event{2, EventTypeId{1}, {{"ward", std::string("A")}, {"dose", 6.0}}});
    const auto cfg = EmbeddingConfig::for_dataset(2, traces);
    REQUIRE(cfg.fields.size() == 3);
    CHECK(cfg.width() == 4 + 2 + 1);
    const auto at_max = encode(cfg, traces[0].events[1]);
    CHECK(at_max.numbers == std::vector<double>{1.0});
    CHECK(at_max.categories == std::vector<std::uint32_t>{1, 0});
    CHECK(encode(cfg, traces[0].events[0]).numbers == std::vector<double>{0.0});
    const auto unseen = encode(cfg, Event{1, EventTypeId{0}, {{"ward", std::string("Z")}, {"dose", 99.0}}});
    CHECK(unseen.categories[1] == kUnknownCategory);
    CHECK(unseen.numbers[0] == 1.0);
    CHECK_THROWS_AS(encode(cfg, Event{1, EventTypeId{2}, {}}), ContractError);
  }
}

TEST_CASE("predictions are distributions and states behave") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::uint32_t> type(0, 5);
  for (auto spec : {ArchitectureSpec::recurrent(7), ArchitectureSpec::windowed(3, 7), ArchitectureSpec::windowed(5, 7)}) {
    Network net(spec, type_only(6));
    net.initialize(4);
    TrainedTagger t(net, {"1", "2", "3", "4", "5", "6", "7"}, {});
    CHECK(t.init().steps == 0);
    auto s = t.init();
    for (int i = 0; i < 50; ++i) {
      const auto p = t.predict(s, ev(type(rng)));
      CHECK(p.size() == 7);
      CHECK(p.minCoeff() >= 0.0);
      CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
    }
    auto fresh = t.init();
    auto again = t.init();
    CHECK(t.predict(fresh, ev(2)) == t.predict(again, ev(2)));
    auto other = t.init();
    CHECK_THROWS_AS(t.predict(other, ev(6)), ContractError);
  }
}

TEST_CASE("MB_3 only sees the last three events") {
  Network net(ArchitectureSpec::windowed(3, 4), type_only(5));
  net.initialize(8);
  TrainedTagger t(net, {"a", "b", "c", "d"}, {});
  auto s1 = t.init();
  auto s2 = t.init();
  for (std::uint32_t ty : {0u, 1u, 4u, 4u}) t.predict(s1, ev(ty));
  for (std::uint32_t ty : {3u, 2u}) t.predict(s2, ev(ty));
  Eigen::VectorXd p1, p2;
  for (std::uint32_t ty : {2u, 0u, 1u}) {
    p1 = t.predict(s1, ev(ty));
    p2 = t.predict(s2, ev(ty));
  }
  CHECK(p1 == p2);
}

TEST_CASE("MA depends on history and init erases it") {
  Network net(ArchitectureSpec::recurrent(4), type_only(5));
  net.initialize(9);
  TrainedTagger t(net, {"a", "b", "c", "d"}, {});
  auto s1 = t.init();
  auto s2 = t.init();
  t.predict(s1, ev(0));
  t.predict(s2, ev(4));
  t.predict(s2, ev(1));
  const auto p1 = t.predict(s1, ev(3));
  const auto p2 = t.predict(s2, ev(3));
  CHECK((p1 - p2).cwiseAbs().maxCoeff() > 1e-9);
  CHECK(s1.h[0].cwiseAbs().maxCoeff() > 0.0);

  auto fresh = t.init();
  auto after = t.init();
  t.predict(after, ev(2));
  after = t.init();
  CHECK(t.predict(fresh, ev(3)) == t.predict(after, ev(3)));
}

TEST_CASE("training: loss falls, seeds reproduce") {
  const auto data = toy_dataset(50, 12, 1);
  const std::span<const LabeledTrace> all(data);
  for (const auto& spec : {ArchitectureSpec::recurrent(3), ArchitectureSpec::windowed(3, 3)}) {
    CAPTURE(spec.name());
    TrainingOptions o;
    o.epochs = 5;
    o.learning_rate = 1e-3;
    o.seed = 21;
    const auto cfg = type_only(4);
    const auto a = train(spec, cfg, kThree, all.first(40), all.subspan(40), o);
    const auto& curve = a.metadata().train_loss;
    REQUIRE(curve.size() == 5);
    CHECK(curve.back() < curve.front());
    CHECK(a.metadata().validation_loss.size() == 5);
    const auto b = train(spec, cfg, kThree, all.first(40), all.subspan(40), o);
    CHECK(a.network().parameters() == b.network().parameters());
    CHECK(a.metadata() == b.metadata());
    o.seed = 22;
    const auto c = train(spec, cfg, kThree, all.first(40), all.subspan(40), o);
    CHECK(a.network().parameters() != c.network().parameters());
  }
}

TEST_CASE("training: a small set is fitted") {
  const auto data = toy_dataset(10, 12, 2);
  for (const auto& spec : {ArchitectureSpec::windowed(3, 3), ArchitectureSpec::recurrent(3)}) {
    CAPTURE(spec.name());
    TrainingOptions o;
    o.epochs = 200;
    o.learning_rate = 1e-3;
    o.batch_size = 8;
    const auto t = train(spec, type_only(4), kThree, data, {}, o);
    CHECK(tagging_accuracy(t, data) >= 0.95);
  }
}

TEST_CASE("training preconditions") {
  auto data = toy_dataset(3, 4, 3);
  TrainingOptions o;
  o.epochs = 1;
  const auto spec = ArchitectureSpec::windowed(3, 3);
  CHECK_THROWS_AS(train(spec, type_only(4), kThree, {}, {}, o), ContractError);
  auto bad = data;
  bad[1].labels.pop_back();
  CHECK_THROWS_AS(train(spec, type_only(4), kThree, bad, {}, o), ContractError);
  bad = data;
  bad[0].labels[0].activity = ActivityId{3};
  CHECK_THROWS_AS(train(spec, type_only(4), kThree, bad, {}, o), ContractError);
  CHECK_THROWS_AS(train(spec, type_only(4), {"a"}, data, {}, o), ContractError);
}

TEST_CASE("tagger files round-trip exactly") {
  const auto data = toy_dataset(6, 5, 4);
  TrainingOptions o;
  o.epochs = 2;
  for (const auto& spec : {ArchitectureSpec::recurrent(3), ArchitectureSpec::windowed(5, 3)}) {
    EmbeddingConfig cfg = type_only(4);
    cfg.fields.push_back(FieldSpec{"ward", FieldKind::Categorical, FieldMode::OneHot, 0, 2, {"A", "B"}});
    cfg.fields.push_back(FieldSpec{"dose", FieldKind::Numeric, FieldMode::OneHot, 0, 0, {}, 1.5, 9.25});
    const auto t = train(spec, cfg, kThree, data, data, o);
    const auto text = serialize_tagger(t);
    const auto back = parse_tagger(text);
    CHECK(back.network().parameters() == t.network().parameters());
    CHECK(back.network().spec() == t.network().spec());
    CHECK(back.network().embedding() == t.network().embedding());
    CHECK(back.metadata() == t.metadata());
    CHECK(back.activities() == t.activities());
    CHECK(serialize_tagger(back) == text);
  }
  CHECK_THROWS_AS(parse_tagger("{\"format\":\"sift-tagger\",\"version\":99}"), ParseError);
  CHECK_THROWS_AS(parse_tagger("[1,2"), ParseError);
}

TEST_CASE("uniform tagger") {
  UniformTagger u(4);
  auto s = u.init();
  const auto p = u.predict(s, ev(0));
  CHECK(p.size() == 4);
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK(argmax(p) == 0);
  CHECK_THROWS_AS(UniformTagger(0), ContractError);
}
