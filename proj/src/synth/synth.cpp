#include "sift/synth/synth.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "sift/core/validity.hpp"
#include "sift/errors.hpp"

namespace sift::synth {

using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename T>
const T& pick(const std::vector<T>& xs, std::mt19937_64& rng) {
  return xs[std::uniform_int_distribution<std::size_t>(0, xs.size() - 1)(rng)];
}

std::uint32_t uniform(std::uint32_t lo, std::uint32_t hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng);
}

// ---- trace simulation -------------------------------------------------

class Simulator {
 public:
  Simulator(const DomainModel& m, std::size_t length, const TraceOptions& o, std::mt19937_64& rng)
      : m_(m), length_(length), o_(o), rng_(rng), types_(m.num_activities() * 4), count_(m.num_activities(), 0),
        open_slot_(m.num_activities(), -1) {
    for (std::uint32_t et = 0; et < m.num_event_types(); ++et)
      for (auto [a, s] : m.mapping.cand_steps(EventTypeId{et}))
        types_[a.value * 4 + static_cast<unsigned>(s)].push_back(EventTypeId{et});
    trace_.id = "sim";
  }

  enum class Outcome { Found, Exhausted, Budget };

  Outcome run(std::uint32_t concurrency) {
    cap_ = concurrency;
    nodes_ = 0;
    trace_.events.clear();
    interp_.clear();
    open_.clear();
    std::fill(count_.begin(), count_.end(), 0);
    std::fill(open_slot_.begin(), open_slot_.end(), -1);
    committed_ = 0;
    return dfs();
  }

  LabeledTrace result() const {
    LabeledTrace out{trace_, interp_};
    out.trace.finalized = true;
    return out;
  }

 private:
  struct Open {
    ActivityId a;
    std::uint32_t instance;
    std::uint32_t emitted;
    std::uint32_t planned;
  };
  struct Move {
    int slot = -1;  // advance open_[slot], or open a new instance when -1
    ActivityId a;
    std::uint32_t planned = 0;
    double key = 0.0;
  };

  const std::vector<EventTypeId>& types(ActivityId a, StepType s) const {
    return types_[a.value * 4 + static_cast<unsigned>(s)];
  }

  bool supports_length(ActivityId a, std::uint32_t len) const {
    if (len == 1) return !types(a, StepType::FirstAndLast).empty();
    if (types(a, StepType::First).empty() || types(a, StepType::Last).empty()) return false;
    return len == 2 || !types(a, StepType::Intermediate).empty();
  }

  std::vector<Move> moves() {
    const std::size_t pos = trace_.events.size();
    const std::size_t free_slots = length_ - pos - committed_;
    std::vector<Move> out;
    std::exponential_distribution<double> expo(1.0);
    // Advancing each open instance weighs 1; opening something new weighs
    // 1 in total, spread over its variants.
    for (std::size_t i = 0; i < open_.size(); ++i) out.push_back(Move{static_cast<int>(i), open_[i].a, 0, expo(rng_)});
    if (open_.size() < cap_) {
      std::vector<Move> fresh;
      for (std::uint32_t a = 0; a < m_.num_activities(); ++a) {
        const ActivityId act{a};
        if (open_slot_[a] >= 0) continue;
        if (pos == 0 && !m_.process.is_start(act)) continue;
        const auto cap = m_.process.max_inst[a];
        if (cap && count_[a] >= *cap) continue;
        for (std::uint32_t len = o_.min_instance_length; len <= o_.max_instance_length; ++len)
          if (len <= free_slots && supports_length(act, len)) fresh.push_back(Move{-1, act, len, 0.0});
      }
      const double w = 1.0 / static_cast<double>(std::max<std::size_t>(fresh.size(), 1));
      for (auto& mv : fresh) {
        mv.key = expo(rng_) / w;
        out.push_back(mv);
      }
    }
    std::sort(out.begin(), out.end(), [](const Move& x, const Move& y) { return x.key < y.key; });
    return out;
  }

  Outcome dfs() {
    const std::size_t pos = trace_.events.size();
    if (pos == length_) {
      if (!open_.empty()) return Outcome::Exhausted;
      trace_.finalized = true;
      const bool ok = validate_interpretation(trace_, interp_, m_).valid();
      trace_.finalized = false;
      return ok ? Outcome::Found : Outcome::Exhausted;
    }
    if (++nodes_ > o_.nodes_per_attempt) return Outcome::Budget;
    bool budget = false;
    for (const auto& mv : moves()) {
      // apply
      StepType step;
      Assignment asg;
      if (mv.slot >= 0) {
        auto& o = open_[static_cast<std::size_t>(mv.slot)];
        step = o.emitted + 1 == o.planned ? StepType::Last : StepType::Intermediate;
        asg = Assignment{o.a, step, o.instance};
      } else {
        step = mv.planned == 1 ? StepType::FirstAndLast : StepType::First;
        asg = Assignment{mv.a, step, count_[mv.a.value] + 1};
      }
      const auto et = pick(types(asg.activity, step), rng_);
      trace_.events.push_back(Event{pos + 1, et, {}});
      interp_.push_back(asg);
      const auto saved_open = open_;
      const auto saved_slot = open_slot_;
      const auto saved_committed = committed_;
      if (mv.slot >= 0) {
        auto& o = open_[static_cast<std::size_t>(mv.slot)];
        ++o.emitted;
        --committed_;
        if (o.emitted == o.planned) close_slot(static_cast<std::size_t>(mv.slot));
      } else {
        ++count_[mv.a.value];
        if (mv.planned > 1) {
          open_slot_[mv.a.value] = static_cast<int>(open_.size());
          open_.push_back(Open{mv.a, asg.instance, 1, mv.planned});
          committed_ += mv.planned - 1;
        }
      }
      Outcome r = Outcome::Exhausted;
      if (validate_interpretation(trace_, interp_, m_).valid()) r = dfs();
      if (r == Outcome::Found) return r;
      if (r == Outcome::Budget) budget = true;
      // undo
      if (mv.slot < 0) --count_[mv.a.value];
      open_ = saved_open;
      open_slot_ = saved_slot;
      committed_ = saved_committed;
      trace_.events.pop_back();
      interp_.pop_back();
      if (budget) return Outcome::Budget;
    }
    return Outcome::Exhausted;
  }

  void close_slot(std::size_t slot) {
    open_slot_[open_[slot].a.value] = -1;
    open_.erase(open_.begin() + static_cast<std::ptrdiff_t>(slot));
    for (std::size_t i = slot; i < open_.size(); ++i) open_slot_[open_[i].a.value] = static_cast<int>(i);
  }

  const DomainModel& m_;
  std::size_t length_;
  const TraceOptions& o_;
  std::mt19937_64& rng_;
  std::vector<std::vector<EventTypeId>> types_;
  std::vector<std::uint32_t> count_;
  std::vector<int> open_slot_;
  std::vector<Open> open_;
  std::size_t committed_ = 0;  // events still owed by open instances
  std::uint32_t cap_ = 1;
  std::size_t nodes_ = 0;
  Trace trace_;
  Interpretation interp_;
};

// ---- model sampling ---------------------------------------------------

DomainModel sample_model(const SynModelSpec& spec, std::mt19937_64& rng) {
  const auto na = spec.activities, ne = spec.event_types;
  DomainModel m;
  for (std::uint32_t a = 1; a <= na; ++a) m.activities.add("A" + std::to_string(a));
  for (std::uint32_t e = 1; e <= ne; ++e) m.event_types.add("E" + std::to_string(e));

  // Degrees: min + Binomial(max - min, p) has the requested mean; redrawn
  // until the empirical mean is within tolerance and every activity fits.
  const double p = std::clamp((spec.mean_degree - spec.min_degree) / std::max(1u, spec.max_degree - spec.min_degree),
                              0.0, 1.0);
  std::binomial_distribution<std::uint32_t> extra(spec.max_degree - spec.min_degree, p);
  std::vector<std::uint32_t> degree(ne);
  for (int tries = 0;; ++tries) {
    if (tries > 10'000) throw InfeasibleError("cannot draw mapping degrees for the requested mean");
    std::uint32_t total = 0;
    for (auto& d : degree) total += d = spec.min_degree + extra(rng);
    const double mean = static_cast<double>(total) / ne;
    if (total >= na && std::abs(mean - spec.mean_degree) <= spec.mean_tolerance) break;
  }

  // Every activity gets one slot first (a permutation), the remaining
  // slots draw distinct activities per event type.
  std::vector<std::uint32_t> slots;
  for (std::uint32_t e = 0; e < ne; ++e) slots.insert(slots.end(), degree[e], e);
  std::shuffle(slots.begin(), slots.end(), rng);
  std::vector<std::uint32_t> perm(na);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::uint32_t>> acts(ne);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto& row = acts[slots[i]];
    if (i < na) {
      row.push_back(perm[i]);
      continue;
    }
    std::vector<std::uint32_t> free;
    for (std::uint32_t a = 0; a < na; ++a)
      if (std::find(row.begin(), row.end(), a) == row.end()) free.push_back(a);
    row.push_back(pick(free, rng));
  }

  // Step sets: each step kept with probability 0.4, never empty; First and
  // Last are patched in where an activity lacks them.
  std::vector<std::vector<std::pair<std::uint32_t, std::uint8_t>>> by_activity(na);  // (et, mask)
  std::bernoulli_distribution keep(0.4);
  for (std::uint32_t e = 0; e < ne; ++e)
    for (auto a : acts[e]) {
      std::uint8_t mask = 0;
      while (!mask)
        for (int s = 0; s < 4; ++s)
          if (keep(rng)) mask |= static_cast<std::uint8_t>(1u << s);
      by_activity[a].push_back({e, mask});
    }
  for (auto& pairs : by_activity)
    for (auto s : {StepType::First, StepType::Last}) {
      const auto bit = static_cast<std::uint8_t>(1u << static_cast<unsigned>(s));
      if (std::none_of(pairs.begin(), pairs.end(), [&](auto& pr) { return pr.second & bit; }))
        pairs[std::uniform_int_distribution<std::size_t>(0, pairs.size() - 1)(rng)].second |= bit;
    }
  m.mapping = TypeLevelMapping(ne, na);
  for (std::uint32_t a = 0; a < na; ++a)
    for (auto [e, mask] : by_activity[a])
      for (auto s : kAllSteps)
        if (mask & (1u << static_cast<unsigned>(s))) m.mapping.add(EventTypeId{e}, ActivityId{a}, s);

  m.process.start_acts.assign(na, false);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::uint32_t i = 0; i < std::min(spec.start_activities, na); ++i) m.process.start_acts[perm[i]] = true;
  m.process.max_inst.assign(na, spec.max_instances ? std::optional<std::uint32_t>(spec.max_instances) : std::nullopt);

  // Must edges follow a random order so obligations cannot cycle.
  std::vector<std::uint32_t> order(na);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto window = [&] { return std::optional<std::uint32_t>(uniform(spec.min_window, spec.max_window, rng)); };
  auto two_distinct = [&] {
    const auto a = uniform(0, na - 1, rng);
    auto b = uniform(0, na - 2, rng);
    if (b >= a) ++b;
    return std::pair{a, b};
  };
  if (na < 2 && spec.must + spec.not_ + spec.precedence + spec.neg_precedence > 0)
    throw InfeasibleError("constraints need at least two activities");
  for (std::uint32_t i = 0; i < spec.must; ++i) {
    const auto pos = uniform(0, na - 2, rng);
    Constraint c{ConstraintKind::Must, {ActivityId{order[pos]}}, {}, window()};
    const auto k = std::min<std::uint32_t>(uniform(1, 2, rng), na - 1 - pos);
    std::vector<std::uint32_t> later(order.begin() + pos + 1, order.end());
    std::shuffle(later.begin(), later.end(), rng);
    for (std::uint32_t j = 0; j < k; ++j) c.rhs.emplace_back(later[j]);
    std::sort(c.rhs.begin(), c.rhs.end());
    m.process.constraints.push_back(std::move(c));
  }
  for (std::uint32_t i = 0; i < spec.not_; ++i) {
    const auto [a, b] = two_distinct();
    m.process.constraints.push_back(Constraint{ConstraintKind::Not, {ActivityId{a}}, {ActivityId{b}}, window()});
  }
  for (std::uint32_t i = 0; i < spec.precedence; ++i) {
    std::vector<std::uint32_t> targets;
    for (std::uint32_t a = 0; a < na; ++a)
      if (!m.process.start_acts[a]) targets.push_back(a);
    if (targets.empty()) throw InfeasibleError("precedence needs a non-start activity");
    const auto b = pick(targets, rng);
    std::vector<std::uint32_t> others;
    for (std::uint32_t a = 0; a < na; ++a)
      if (a != b) others.push_back(a);
    std::shuffle(others.begin(), others.end(), rng);
    Constraint c{ConstraintKind::Precedence, {}, {ActivityId{b}}, window()};
    const auto k = std::min<std::size_t>(uniform(1, 2, rng), others.size());
    for (std::size_t j = 0; j < k; ++j) c.lhs.emplace_back(others[j]);
    std::sort(c.lhs.begin(), c.lhs.end());
    m.process.constraints.push_back(std::move(c));
  }
  for (std::uint32_t i = 0; i < spec.neg_precedence; ++i) {
    const auto [a, b] = two_distinct();
    m.process.constraints.push_back(
        Constraint{ConstraintKind::NegPrecedence, {ActivityId{a}}, {ActivityId{b}}, window()});
  }
  m.validate();
  return m;
}

}  // namespace

LabeledTrace generate_trace(const DomainModel& model, std::size_t length, std::mt19937_64& rng,
                            const TraceOptions& options) {
  if (length == 0) throw ContractError("trace length must be >= 1");
  if (options.min_concurrency < 1 || options.min_concurrency > options.max_concurrency)
    throw ContractError("concurrency range must satisfy 1 <= min <= max");
  if (options.min_instance_length < 1 || options.min_instance_length > options.max_instance_length)
    throw ContractError("instance length range must satisfy 1 <= min <= max");
  Simulator sim(model, length, options, rng);
  for (std::size_t attempt = 0; attempt < options.retries; ++attempt) {
    const auto cap = uniform(options.min_concurrency, options.max_concurrency, rng);
    const auto outcome = sim.run(cap);
    if (outcome == Simulator::Outcome::Found) {
      auto out = sim.result();
      if (!validate_interpretation(out.trace, out.labels, model).valid())
        throw std::logic_error("simulator produced an invalid trace");
      return out;
    }
    if (outcome == Simulator::Outcome::Exhausted && cap == options.max_concurrency)
      throw InfeasibleError("no trace of length " + std::to_string(length) + " exists under the generator's moves");
  }
  throw InfeasibleError("no trace of length " + std::to_string(length) + " after " + std::to_string(options.retries) +
                        " attempts");
}

DomainModel generate_syn_model(const SynModelSpec& spec, std::uint64_t seed) {
  if (spec.activities == 0 || spec.event_types == 0) throw ContractError("empty universes");
  if (spec.min_degree < 1 || spec.min_degree > spec.max_degree || spec.max_degree > spec.activities)
    throw ContractError("degree range must satisfy 1 <= min <= max <= |A|");
  if (spec.min_window < 1 || spec.min_window > spec.max_window) throw ContractError("bad window range");
  std::mt19937_64 rng(seed);
  TraceOptions trial;
  trial.retries = 200;
  for (std::size_t attempt = 0; attempt < spec.max_resamples; ++attempt) {
    auto m = sample_model(spec, rng);
    std::mt19937_64 trial_rng(rng());
    try {
      for (auto len : spec.trial_lengths)
        for (int i = 0; i < 3; ++i) generate_trace(m, len, trial_rng, trial);
    } catch (const InfeasibleError&) {
      continue;
    }
    return m;
  }
  throw InfeasibleError("no feasible model after " + std::to_string(spec.max_resamples) + " samples");
}

std::vector<LabeledTrace> generate_dataset(const DomainModel& model, const DatasetSpec& spec) {
  std::vector<LabeledTrace> out;
  for (const auto& [len, count] : spec.counts) {
    if (len == 0) throw ContractError("trace length must be >= 1");
    for (std::size_t i = 0; i < count; ++i) {
      std::mt19937_64 rng(mix(mix(spec.seed) ^ mix(len * 1'000'003u + i)));
      auto r = generate_trace(model, len, rng, spec.trace);
      r.trace.id = "L" + std::to_string(len) + "-" + std::to_string(i + 1);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::uint32_t crc32_of(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string write_dataset(const DomainModel& model, const DatasetSpec& spec, const std::vector<LabeledTrace>& data,
                          const std::string& path) {
  const auto text = serialize_dataset(model, data);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("cannot write '" + path + "'");
    out << text;
  }
  json counts = json::object(), by_length = json::object();
  for (const auto& [len, n] : spec.counts) counts[std::to_string(len)] = n;
  std::size_t events = 0;
  std::vector<std::size_t> per_activity(model.num_activities(), 0);
  for (const auto& r : data) {
    events += r.trace.size();
    const auto key = std::to_string(r.trace.size());
    by_length[key] = by_length.value(key, 0) + 1;
    for (const auto& l : r.labels) ++per_activity[l.activity.value];
  }
  json labels = json::object();
  for (std::uint32_t a = 0; a < model.num_activities(); ++a) labels[model.activities.name(a)] = per_activity[a];
  char hex[2][9];
  std::snprintf(hex[0], sizeof hex[0], "%08x", crc32_of(text));
  std::snprintf(hex[1], sizeof hex[1], "%08x", crc32_of(serialize_model(model)));
  json manifest = {
      {"v", 1},
      {"seed", spec.seed},
      {"counts", counts},
      {"trace_options",
       {{"min_instance_length", spec.trace.min_instance_length},
        {"max_instance_length", spec.trace.max_instance_length},
        {"min_concurrency", spec.trace.min_concurrency},
        {"max_concurrency", spec.trace.max_concurrency},
        {"retries", spec.trace.retries}}},
      {"census", {{"traces", data.size()}, {"events", events}, {"by_length", by_length}, {"labels", labels}}},
      {"checksums", {{"dataset_crc32", hex[0]}, {"model_crc32", hex[1]}}}};
  const auto body = manifest.dump(2) + "\n";
  std::ofstream out(path + ".manifest.json", std::ios::binary);
  if (!out) throw ContractError("cannot write manifest for '" + path + "'");
  out << body;
  return body;
}

std::map<std::size_t, std::size_t> parse_length_counts(const std::string& text) {
  std::map<std::size_t, std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    const auto item = text.substr(start, end - start);
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument("");
      std::size_t used = 0;
      const auto len = std::stoul(item.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("");
      const auto rest = item.substr(colon + 1);
      const auto n = std::stoul(rest, &used);
      if (used != rest.size() || len == 0) throw std::invalid_argument("");
      out[len] += n;
    } catch (const std::logic_error&) {
      throw ParseError("lengths", "expected LENGTH:COUNT[,LENGTH:COUNT...], got '" + item + "'");
    }
    start = end + 1;
  }
  return out;
}

}  // namespace sift::synth
