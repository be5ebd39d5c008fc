#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "sift/core/dataset.hpp"
#include "sift/core/model.hpp"
#include "sift/core/validity.hpp"
#include "sift/errors.hpp"
#include "sift/synth/synth.hpp"

using namespace sift;

namespace {

std::map<ConstraintKind, std::size_t> census(const DomainModel& m) {
  std::map<ConstraintKind, std::size_t> out;
  for (const auto& c : m.process.constraints) ++out[c.kind];
  return out;
}

const DomainModel& shared_model() {
  static const DomainModel m = synth::generate_syn_model({}, 3);
  return m;
}

}  // namespace

TEST_CASE("generated models have the requested shape") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto m = synth::generate_syn_model({}, seed);
    CHECK(m.activities.size() == 16);
    CHECK(m.num_event_types() == 16);
    auto counts = census(m);
    CHECK(counts[ConstraintKind::Must] == 6);
    CHECK(counts[ConstraintKind::Not] == 4);
    CHECK(counts[ConstraintKind::Precedence] == 2);
    CHECK(counts[ConstraintKind::NegPrecedence] == 0);
    double total = 0;
    for (std::uint32_t t = 0; t < 16; ++t) {
      const auto d = m.mapping.cand_act(EventTypeId{t}).size();
      CHECK(d >= 1);
      CHECK(d <= 5);
      total += static_cast<double>(d);
    }
    CHECK(std::abs(total / 16 - 2.5) <= 0.5 + 1e-12);
    std::set<std::uint32_t> covered;
    for (std::uint32_t t = 0; t < 16; ++t)
      for (auto a : m.mapping.cand_act(EventTypeId{t})) covered.insert(a.value);
    CHECK(covered.size() == 16);
    for (const auto& c : m.process.constraints) {
      REQUIRE(c.window.has_value());
      CHECK(*c.window >= 2);
      CHECK(*c.window <= 8);
    }
    CHECK(std::count(m.process.start_acts.begin(), m.process.start_acts.end(), true) == 2);
  }
}

TEST_CASE("model generation is deterministic per seed") {
  const auto a = synth::generate_syn_model({}, 9);
  const auto b = synth::generate_syn_model({}, 9);
  CHECK(serialize_model(a) == serialize_model(b));
}

TEST_CASE("every generated trace has the requested length and a valid labelling") {
  const auto& m = shared_model();
  std::mt19937_64 rng(5);
  for (std::size_t length : {1, 2, 7, 20, 40}) {
    for (int i = 0; i < 3; ++i) {
      const auto lt = synth::generate_trace(m, length, rng);
      REQUIRE(lt.trace.events.size() == length);
      CHECK(lt.trace.finalized);
      CHECK(validate_interpretation(lt.trace, lt.labels, m).valid());
    }
  }
}

TEST_CASE("dataset generation is reproducible and ordered by length") {
  const auto& m = shared_model();
  synth::DatasetSpec spec;
  spec.counts = {{20, 4}, {5, 3}};
  spec.seed = 11;
  const auto a = synth::generate_dataset(m, spec);
  const auto b = synth::generate_dataset(m, spec);
  REQUIRE(a.size() == 7);
  CHECK(serialize_dataset(m, a) == serialize_dataset(m, b));
  CHECK(a.front().trace.events.size() == 5);
  CHECK(a.back().trace.events.size() == 20);
  CHECK(a.front().trace.id == "L5-1");
  // Traces do not depend on how many others are requested.
  spec.counts = {{20, 2}};
  const auto c = synth::generate_dataset(m, spec);
  CHECK(serialize_record(m, c[1]) == serialize_record(m, a[4]));
}

TEST_CASE("zero trace counts yield an empty dataset") {
  synth::DatasetSpec spec;
  CHECK(synth::generate_dataset(shared_model(), spec).empty());
}

TEST_CASE("impossible lengths surface as InfeasibleError") {
  // Every activity needs two events, so odd lengths cannot be produced
  // with a single instance per trace.
  DomainModel m = shared_model();
  synth::TraceOptions opts;
  opts.min_instance_length = 2;
  opts.max_instance_length = 2;
  opts.min_concurrency = 1;
  opts.max_concurrency = 1;
  opts.retries = 5;
  opts.nodes_per_attempt = 200;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(synth::generate_trace(m, 1, rng, opts), InfeasibleError);
}

TEST_CASE("written datasets round-trip and carry a manifest") {
  const auto& m = shared_model();
  synth::DatasetSpec spec;
  spec.counts = {{6, 3}};
  spec.seed = 4;
  const auto data = synth::generate_dataset(m, spec);
  const auto dir = std::filesystem::temp_directory_path() / "sift_synth_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "d.jsonl").string();
  const auto manifest_text = synth::write_dataset(m, spec, data, path);
  const auto loaded = load_dataset(m, path);
  CHECK(serialize_dataset(m, loaded) == serialize_dataset(m, data));
  const auto manifest = nlohmann::json::parse(manifest_text);
  CHECK(manifest["seed"] == 4);
  std::ifstream in(path, std::ios::binary);
  std::stringstream bytes;
  bytes << in.rdbuf();
  char hex[9];
  std::snprintf(hex, sizeof hex, "%08x", synth::crc32_of(bytes.str()));
  CHECK(manifest["checksums"]["dataset_crc32"] == std::string(hex));
  std::ifstream side(path + ".manifest.json");
  CHECK(side.good());
  std::filesystem::remove_all(dir);
}

TEST_CASE("length counts parse strictly") {
  const auto counts = synth::parse_length_counts("20:100,40:5");
  CHECK(counts.at(20) == 100);
  CHECK(counts.at(40) == 5);
  CHECK_THROWS_AS(synth::parse_length_counts("20"), ParseError);
  CHECK_THROWS_AS(synth::parse_length_counts("20:x"), ParseError);
  CHECK_THROWS_AS(synth::parse_length_counts("0:3"), ParseError);
}

TEST_CASE("crc32 matches the standard check value") {
  CHECK(synth::crc32_of("123456789") == 0xCBF43926u);
}
