#include <algorithm>
#include <memory>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "sift/errors.hpp"
#include "sift/eval/eval.hpp"
#include "sift/synth/synth.hpp"
#include "support/fixtures.hpp"
#include "support/pipeline_fuzz.hpp"

using namespace sift;
using namespace sift::testing;

namespace {

// Puts all mass on the labelled activity of one known trace.
class LabelTagger final : public tagger::Tagger {
 public:
  LabelTagger(std::size_t n, Interpretation labels) : n_(n), labels_(std::move(labels)) {}
  std::size_t num_activities() const override { return n_; }
  tagger::DecodingState init() const override { return {}; }
  Eigen::VectorXd predict(tagger::DecodingState& s, const Event&) const override {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    p[labels_.at(s.steps++).activity.value] = 1.0;
    return p;
  }

 private:
  std::size_t n_;
  Interpretation labels_;
};

std::shared_ptr<const DomainModel> syn_model() {
  static const auto m = std::make_shared<const DomainModel>(synth::generate_syn_model({}, 3));
  return m;
}

std::vector<LabeledTrace> syn_data(std::map<std::size_t, std::size_t> counts, std::uint64_t seed) {
  synth::DatasetSpec spec;
  spec.counts = std::move(counts);
  spec.seed = seed;
  return synth::generate_dataset(*syn_model(), spec);
}

LabeledTrace care_example(const DomainModel& m) {
  return {example_trace(m, true),
          {as(m, "A1", StepType::First), as(m, "A1", StepType::Last), as(m, "A2", StepType::First),
           as(m, "A2", StepType::Last)}};
}

}  // namespace

TEST_CASE("a tagger that knows the labels scores 100 everywhere") {
  const auto data = syn_data({{8, 3}, {15, 2}}, 2);
  for (const auto& record : data) {
    auto tg = std::make_shared<const LabelTagger>(16, record.labels);
    const auto table = eval::evaluate(std::span(&record, 1), tg, syn_model(), {});
    const auto* all = table.find("tagger", "ALL", 100.0);
    REQUIRE(all != nullptr);
    CHECK(all->acc_t == 100.0);
    CHECK(all->acc_ta == 100.0);
    CHECK(all->acc_tr == 100.0);
  }
}

TEST_CASE("knowledge rescues a tagger that always names an unmapped activity") {
  const auto m = std::make_shared<const DomainModel>(care());
  const auto record = care_example(*m);
  auto tg = std::make_shared<const PointTagger>(3, m->activity("A3"));
  const auto table = eval::evaluate(std::span(&record, 1), tg, m, {});
  const auto* row = table.find("tagger", "ALL", 100.0);
  REQUIRE(row != nullptr);
  CHECK(row->acc_t == 0.0);
  // Only CannulaInsertion excludes A3; its single candidate is A2.
  CHECK(row->acc_ta == 25.0);
  // The first event must open a start activity.
  CHECK(row->acc_tr >= 25.0);
}

TEST_CASE("restricting to candidate activities never lowers accuracy") {
  const auto data = syn_data({{10, 4}, {20, 4}}, 8);
  for (std::uint64_t seed : {1, 2, 3}) {
    auto tg = std::make_shared<const NoiseTagger>(16, seed);
    const auto table = eval::evaluate(data, tg, syn_model(), {});
    for (const auto& row : table.rows) CHECK(row.acc_ta >= row.acc_t);
  }
}

TEST_CASE("rows cover each length and an event-weighted total") {
  const auto data = syn_data({{5, 2}, {15, 2}}, 4);
  auto tg = std::make_shared<const NoiseTagger>(16, 9);
  eval::EvalConfig cfg;
  cfg.arch = "noise";
  cfg.fraction = 40;
  const auto table = eval::evaluate(data, tg, syn_model(), cfg);
  REQUIRE(table.rows.size() == 3);
  const auto* a = table.find("noise", "5", 40);
  const auto* b = table.find("noise", "15", 40);
  const auto* all = table.find("noise", "ALL", 40);
  REQUIRE(a);
  REQUIRE(b);
  REQUIRE(all);
  CHECK(all->acc_t == doctest::Approx((a->acc_t * 10 + b->acc_t * 30) / 40));
  CHECK(all->acc_tr == doctest::Approx((a->acc_tr * 10 + b->acc_tr * 30) / 40));
  for (const auto& row : table.rows) {
    CHECK(row.time_t_ms >= 0.0);
    CHECK(row.time_tr_ms >= 0.0);
  }
}

TEST_CASE("evaluation preconditions") {
  const auto m = std::make_shared<const DomainModel>(care());
  auto record = care_example(*m);
  auto wrong_width = std::make_shared<const tagger::UniformTagger>(4);
  CHECK_THROWS_AS(eval::evaluate(std::span(&record, 1), wrong_width, m, {}), ContractError);
  record.labels.clear();
  auto ok = std::make_shared<const tagger::UniformTagger>(3);
  CHECK_THROWS_AS(eval::evaluate(std::span(&record, 1), ok, m, {}), ContractError);
}

TEST_CASE("csv reports round-trip exactly") {
  eval::MetricsTable table;
  table.rows.push_back({"MB_5", "20", 20, 61.25, 70.0 / 3, 88.1, 0.012345678901234567, 0.02, 912.5});
  table.rows.push_back({"MB_5", "ALL", 20, 1.0 / 7, 2.0 / 7, 3.0 / 7, 1e-9, 2e-9, 3e-9});
  const auto csv = eval::emit_report(table, eval::ReportFormat::Csv);
  CHECK(csv.rfind("arch,bucket,fraction,acc_t,acc_ta,acc_tr,time_t_ms,time_ta_ms,time_tr_ms\n", 0) == 0);
  CHECK(eval::parse_csv(csv) == table);
  CHECK_THROWS_AS(eval::parse_csv("arch,bucket\nx,y\n"), ParseError);
}

TEST_CASE("plot data is JSON and empty tables are rejected") {
  eval::MetricsTable table;
  CHECK_THROWS_AS(eval::emit_report(table, eval::ReportFormat::Csv), ContractError);
  CHECK_THROWS_AS(eval::emit_report(table, eval::ReportFormat::PlotData), ContractError);
  table.rows.push_back({"MA", "40", 100, 50, 60, 70, 0.1, 0.2, 30});
  table.rows.push_back({"MA", "ALL", 100, 50, 60, 70, 0.1, 0.2, 30});
  const auto plot = nlohmann::json::parse(eval::emit_report(table, eval::ReportFormat::PlotData));
  CHECK(plot.is_object());
  CHECK(!plot.empty());
}

TEST_CASE("splits and subsamples are seeded partitions") {
  const auto data = syn_data({{4, 10}}, 1);
  auto [train, test] = eval::split_dataset(data, 0.8, 5);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  std::set<std::string> ids;
  for (const auto& r : train) ids.insert(r.trace.id);
  for (const auto& r : test) ids.insert(r.trace.id);
  CHECK(ids.size() == 10);
  auto [train2, test2] = eval::split_dataset(data, 0.8, 5);
  CHECK(train2.front().trace.id == train.front().trace.id);
  CHECK(eval::subsample(data, 20, 3).size() == 2);
  CHECK(eval::subsample(data, 1, 3).size() == 1);
  CHECK(eval::subsample(data, 100, 3).size() == 10);
}

TEST_CASE("training-fraction sweep emits one row group per fraction") {
  const auto data = syn_data({{6, 10}}, 6);
  auto [train, test] = eval::split_dataset(data, 0.7, 1);
  eval::SweepConfig cfg;
  cfg.fractions = {50, 100};
  cfg.arch = tagger::ArchitectureSpec::windowed(2, 16);
  cfg.arch.mlp = {8};
  cfg.embedding = tagger::EmbeddingConfig::for_dataset(16, {});
  cfg.training.epochs = 1;
  cfg.eval.arch = "MB_2";
  const auto table = eval::sweep_training_fraction(train, test, syn_model(), cfg);
  CHECK(table.find("MB_2", "ALL", 50) != nullptr);
  CHECK(table.find("MB_2", "ALL", 100) != nullptr);
  CHECK(table.find("MB_2", "6", 100) != nullptr);
}
