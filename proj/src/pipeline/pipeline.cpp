#include "sift/pipeline/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include "sift/errors.hpp"

namespace sift::pipeline {

using Eigen::VectorXd;

std::size_t PipelineConfig::resolve_k(const DomainModel& model) const {
  const std::size_t value = k ? *k : model.mapping.max_degree();
  if (value < 1 || value > model.num_activities())
    throw ContractError("k must lie in [1, " + std::to_string(model.num_activities()) + "], got " +
                        std::to_string(value));
  if (!(gamma > 0.0)) throw ContractError("gamma must be positive");
  if (!(pseudo_count > 0.0)) throw ContractError("pseudo count must be positive");
  return value;
}

std::vector<ActivityId> StepResult::support() const {
  std::vector<ActivityId> out;
  for (const auto& r : ranked) out.push_back(r.activity);
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<ActivityId> StepResult::top() const {
  if (ranked.empty()) return std::nullopt;
  return ranked.front().activity;
}

VectorXd smooth_and_filter(const VectorXd& pd, std::span<const ActivityId> valid, const PipelineConfig& cfg) {
  VectorXd out = VectorXd::Zero(pd.size());
  if (valid.empty()) return out;
  const double d = cfg.denominator == SmoothingDenominator::Universe ? static_cast<double>(pd.size())
                                                                      : static_cast<double>(valid.size());
  const double denom = cfg.pseudo_count + cfg.gamma * d;
  for (auto a : valid) {
    if (a.value >= pd.size()) throw ContractError("valid activity outside the distribution");
    out[a.value] = (pd[a.value] * cfg.pseudo_count + cfg.gamma) / denom;
  }
  return out;
}

VectorXd top_k(const VectorXd& v, std::size_t k) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] > v[b]; });
  VectorXd out = VectorXd::Zero(v.size());
  double mass = 0.0;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
    const auto a = order[i];
    if (v[a] < 0.0) throw ContractError("top_k needs non-negative entries");
    out[a] = v[a];
    mass += v[a];
  }
  if (mass > 0.0) out /= mass;
  return out;
}

Analysis::Analysis(std::shared_ptr<const DomainModel> model, std::shared_ptr<const tagger::Tagger> tagger,
                   PipelineConfig config, aaf::SolverOptions solver)
    : model_(std::move(model)),
      tagger_(std::move(tagger)),
      config_(config),
      k_(config_.resolve_k(*model_)),
      session_(model_, solver),
      state_(tagger_->init()) {
  if (tagger_->num_activities() != model_->num_activities())
    throw ContractError("tagger predicts " + std::to_string(tagger_->num_activities()) + " activities, model has " +
                        std::to_string(model_->num_activities()));
}

const StepResult& Analysis::process_event(Event e) {
  if (session_.finalized()) throw ContractError("analysis already finalized");
  if (e.index == 0) e.index = session_.length() + 1;
  if (e.index != session_.length() + 1)
    throw ContractError("event index " + std::to_string(e.index) + " does not extend a prefix of length " +
                        std::to_string(session_.length()));
  StepResult result;
  result.index = e.index;

  const auto snapshot = session_.get_aaf();
  session_.update_aaf(e, model_->mapping.cand_act(e.type));
  const VectorXd pd = tagger_->predict(state_, e);
  result.prediction.assign(pd.data(), pd.data() + pd.size());

  try {
    for (std::uint32_t a = 0; a < model_->num_activities(); ++a)
      if (session_.has_accepted(e.index, ActivityId{a})) result.valid.emplace_back(a);
  } catch (const BudgetExceeded&) {
    result.unresolved = true;
    result.deviation = true;
    results_.push_back(std::move(result));
    throw;
  }

  const VectorXd dist = top_k(smooth_and_filter(pd, result.valid, config_), k_);
  std::vector<ActivityId> support;
  for (std::uint32_t a = 0; a < dist.size(); ++a)
    if (dist[a] > 0.0) {
      support.emplace_back(a);
      result.ranked.push_back({ActivityId{a}, dist[a]});
    }
  std::stable_sort(result.ranked.begin(), result.ranked.end(),
                   [](const auto& x, const auto& y) { return x.probability > y.probability; });
  result.deviation = support.empty();

  session_.set_aaf(snapshot);
  session_.update_aaf(e, support);
  results_.push_back(std::move(result));
  return results_.back();
}

Summary Analysis::finalize() {
  if (session_.finalized()) throw ContractError("analysis already finalized");
  session_.finalize();
  Summary out;
  for (const auto& r : results_) {
    EventSummary s;
    s.index = r.index;
    s.accepted = session_.accepted_at(r.index);
    for (const auto& ranked : r.ranked) {
      const bool alive = std::any_of(s.accepted.begin(), s.accepted.end(),
                                     [&](const auto& arg) { return arg.activity == ranked.activity; });
      if (!alive) s.dropped.push_back(ranked.activity);
    }
    std::sort(s.dropped.begin(), s.dropped.end());
    if (const auto top = r.top())
      s.top_inconsistent = std::find(s.dropped.begin(), s.dropped.end(), *top) != s.dropped.end();
    if (s.top_inconsistent) out.inconsistent.push_back(r.index);
    if (s.accepted.empty()) out.deviations.push_back(r.index);
    out.events.push_back(std::move(s));
  }
  return out;
}

}  // namespace sift::pipeline
