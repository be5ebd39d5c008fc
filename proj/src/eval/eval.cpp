#include "sift/eval/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "sift/errors.hpp"

namespace sift::eval {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Tally {
  std::size_t events = 0, t = 0, ta = 0, tr = 0;
  double time_t = 0, time_ta = 0, time_tr = 0;

  void add(const Tally& o) {
    events += o.events;
    t += o.t;
    ta += o.ta;
    tr += o.tr;
    time_t += o.time_t;
    time_ta += o.time_ta;
    time_tr += o.time_tr;
  }
};

MetricsRow to_row(const Tally& x, const EvalConfig& cfg, std::string bucket) {
  MetricsRow r;
  r.arch = cfg.arch;
  r.bucket = std::move(bucket);
  r.fraction = cfg.fraction;
  if (x.events == 0) return r;
  const double n = static_cast<double>(x.events);
  r.acc_t = 100.0 * static_cast<double>(x.t) / n;
  r.acc_ta = 100.0 * static_cast<double>(x.ta) / n;
  r.acc_tr = 100.0 * static_cast<double>(x.tr) / n;
  r.time_t_ms = x.time_t / n;
  r.time_ta_ms = x.time_ta / n;
  r.time_tr_ms = x.time_tr / n;
  return r;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* kHeader = "arch,bucket,fraction,acc_t,acc_ta,acc_tr,time_t_ms,time_ta_ms,time_tr_ms";

}  // namespace

const MetricsRow* MetricsTable::find(const std::string& arch, const std::string& bucket, double fraction) const {
  for (const auto& r : rows)
    if (r.arch == arch && r.bucket == bucket && r.fraction == fraction) return &r;
  return nullptr;
}

MetricsTable evaluate(std::span<const LabeledTrace> data, std::shared_ptr<const tagger::Tagger> tagger,
                      std::shared_ptr<const DomainModel> model, const EvalConfig& config) {
  if (tagger->num_activities() != model->num_activities())
    throw ContractError("tagger predicts " + std::to_string(tagger->num_activities()) + " activities, model has " +
                        std::to_string(model->num_activities()));
  config.pipeline.resolve_k(*model);
  pipeline::PipelineConfig cand_only = config.pipeline;
  std::map<std::size_t, Tally> buckets;
  for (const auto& rec : data) {
    if (rec.labels.size() != rec.trace.events.size())
      throw ContractError("trace '" + rec.trace.id + "' is not fully labeled");
    Tally& tally = buckets[rec.trace.size()];
    const auto& events = rec.trace.events;

    auto state = tagger->init();
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto t0 = Clock::now();
      const auto guess = tagger::argmax(tagger->predict(state, events[i]));
      tally.time_t += ms_since(t0);
      tally.t += guess == rec.labels[i].activity.value;
    }

    state = tagger->init();
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto t0 = Clock::now();
      const auto pd = tagger->predict(state, events[i]);
      const auto cand = model->mapping.cand_act(events[i].type);
      const auto guess = tagger::argmax(pipeline::smooth_and_filter(pd, cand, cand_only));
      tally.time_ta += ms_since(t0);
      tally.ta += !cand.empty() && guess == rec.labels[i].activity.value;
    }

    pipeline::Analysis an(model, tagger, config.pipeline, config.solver);
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto t0 = Clock::now();
      const auto& r = an.process_event(events[i]);
      tally.time_tr += ms_since(t0);
      tally.tr += r.top() == rec.labels[i].activity;
    }
    tally.events += events.size();
  }
  MetricsTable out;
  Tally all;
  for (const auto& [len, tally] : buckets) {
    out.rows.push_back(to_row(tally, config, std::to_string(len)));
    all.add(tally);
  }
  out.rows.push_back(to_row(all, config, "ALL"));
  return out;
}

std::pair<std::vector<LabeledTrace>, std::vector<LabeledTrace>> split_dataset(std::span<const LabeledTrace> data,
                                                                              double train_share, std::uint64_t seed) {
  if (!(train_share >= 0.0 && train_share <= 1.0)) throw ContractError("train share must lie in [0, 1]");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto cut = static_cast<std::size_t>(std::llround(train_share * static_cast<double>(data.size())));
  std::pair<std::vector<LabeledTrace>, std::vector<LabeledTrace>> out;
  for (std::size_t i = 0; i < order.size(); ++i) (i < cut ? out.first : out.second).push_back(data[order[i]]);
  return out;
}

std::vector<LabeledTrace> subsample(std::span<const LabeledTrace> data, double percent, std::uint64_t seed) {
  if (!(percent > 0.0 && percent <= 100.0)) throw ContractError("fraction must lie in (0, 100]");
  if (data.empty()) return {};
  auto n = static_cast<std::size_t>(std::llround(percent / 100.0 * static_cast<double>(data.size())));
  n = std::clamp<std::size_t>(n, 1, data.size());
  auto [head, rest] = split_dataset(data, static_cast<double>(n) / static_cast<double>(data.size()), seed);
  return head;
}

MetricsTable sweep_training_fraction(std::span<const LabeledTrace> training, std::span<const LabeledTrace> test,
                                     std::shared_ptr<const DomainModel> model, const SweepConfig& config) {
  MetricsTable out;
  for (double r : config.fractions) {
    const auto part = subsample(training, r, config.subsample_seed);
    auto tagger = std::make_shared<const tagger::TrainedTagger>(
        tagger::train(config.arch, config.embedding, model->activities.names(), part, {}, config.training));
    EvalConfig ec = config.eval;
    ec.fraction = r;
    const auto t = evaluate(test, tagger, model, ec);
    out.rows.insert(out.rows.end(), t.rows.begin(), t.rows.end());
  }
  return out;
}

std::string emit_report(const MetricsTable& table, ReportFormat format) {
  if (table.rows.empty()) throw ContractError("empty metrics table");
  if (format == ReportFormat::Csv) {
    std::string out = std::string(kHeader) + "\n";
    for (const auto& r : table.rows) {
      if (r.arch.find_first_of(",\n\"") != std::string::npos || r.bucket.find_first_of(",\n\"") != std::string::npos)
        throw ContractError("arch and bucket names cannot contain commas, quotes or newlines");
      out += r.arch + "," + r.bucket + "," + fmt(r.fraction) + "," + fmt(r.acc_t) + "," + fmt(r.acc_ta) + "," +
             fmt(r.acc_tr) + "," + fmt(r.time_t_ms) + "," + fmt(r.time_ta_ms) + "," + fmt(r.time_tr_ms) + "\n";
    }
    return out;
  }
  // Series keyed "<arch> <variant>"; x is trace length or training fraction.
  json acc_len = json::object(), acc_frac = json::object(), time_len = json::object();
  const std::pair<const char*, double MetricsRow::*> acc[] = {
      {"T", &MetricsRow::acc_t}, {"T+A", &MetricsRow::acc_ta}, {"T+R", &MetricsRow::acc_tr}};
  const std::pair<const char*, double MetricsRow::*> time[] = {
      {"T", &MetricsRow::time_t_ms}, {"T+A", &MetricsRow::time_ta_ms}, {"T+R", &MetricsRow::time_tr_ms}};
  double full = 0.0;
  for (const auto& r : table.rows) full = std::max(full, r.fraction);
  for (const auto& r : table.rows) {
    for (const auto& [name, field] : acc) {
      const auto key = r.arch + " " + name;
      if (r.bucket == "ALL") {
        if (!acc_frac.contains(key)) acc_frac[key] = json::array();
        acc_frac[key].push_back({r.fraction, r.*field});
      } else if (r.fraction == full) {
        if (!acc_len.contains(key)) acc_len[key] = json::array();
        acc_len[key].push_back({std::stod(r.bucket), r.*field});
      }
    }
    if (r.bucket != "ALL" && r.fraction == full)
      for (const auto& [name, field] : time) {
        const auto key = r.arch + " " + name;
        if (!time_len.contains(key)) time_len[key] = json::array();
        time_len[key].push_back({std::stod(r.bucket), r.*field});
      }
  }
  json doc = {{"v", 1},
              {"accuracy_vs_length", acc_len},
              {"accuracy_vs_fraction", acc_frac},
              {"time_vs_length", time_len}};
  return doc.dump(2) + "\n";
}

MetricsTable parse_csv(std::string_view text) {
  MetricsTable out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kHeader) throw ParseError("line 1", "unexpected CSV header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw ParseError("line " + std::to_string(line_no), "expected 9 columns");
    MetricsRow r;
    r.arch = cells[0];
    r.bucket = cells[1];
    try {
      double* fields[] = {&r.fraction, &r.acc_t, &r.acc_ta, &r.acc_tr, &r.time_t_ms, &r.time_ta_ms, &r.time_tr_ms};
      for (int i = 0; i < 7; ++i) {
        std::size_t used = 0;
        *fields[i] = std::stod(cells[2 + i], &used);
        if (used != cells[2 + i].size()) throw std::invalid_argument("trailing characters");
      }
    } catch (const std::logic_error&) {
      throw ParseError("line " + std::to_string(line_no), "malformed number");
    }
    out.rows.push_back(std::move(r));
  }
  if (line_no == 0) throw ParseError("line 1", "missing CSV header");
  return out;
}

}  // namespace sift::eval
