#include "sift/tagger/tagger.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "sift/errors.hpp"

namespace sift::tagger {

using Eigen::VectorXd;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "sift-tagger";
constexpr int kVersion = 1;

class Adam {
 public:
  Adam(const TrainingOptions& o, Eigen::Index n)
      : o_(o), m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)) {}

  void step(VectorXd& theta, const VectorXd& g) {
    ++t_;
    m_ = o_.beta1 * m_ + (1.0 - o_.beta1) * g;
    v_ = o_.beta2 * v_ + (1.0 - o_.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(o_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(o_.beta2, static_cast<double>(t_));
    theta.array() -= o_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + o_.epsilon);
  }

 private:
  const TrainingOptions& o_;
  VectorXd m_, v_;
  std::size_t t_ = 0;
};

// Recurrent batches: indices of equally long sequences, at most `size` each.
std::vector<std::vector<std::size_t>> length_batches(const std::vector<Sequence>& seqs, std::size_t size,
                                                     std::mt19937_64* rng) {
  std::map<std::size_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < seqs.size(); ++i)
    if (!seqs[i].events.empty()) buckets[seqs[i].events.size()].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [len, ids] : buckets) {
    if (rng) std::shuffle(ids.begin(), ids.end(), *rng);
    for (std::size_t s = 0; s < ids.size(); s += size)
      out.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(s),
                       ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), s + size)));
  }
  if (rng) std::shuffle(out.begin(), out.end(), *rng);
  return out;
}

std::vector<WindowSample> all_windows(const std::vector<Sequence>& seqs) {
  std::vector<WindowSample> out;
  for (const auto& s : seqs)
    for (std::size_t p = 0; p < s.events.size(); ++p) out.push_back({&s, p});
  return out;
}

// Event-weighted mean loss without dropout.
double mean_loss(const Network& net, const std::vector<Sequence>& seqs, std::size_t batch) {
  double total = 0.0;
  std::size_t count = 0;
  if (net.spec().kind == ArchKind::Recurrent) {
    for (const auto& ids : length_batches(seqs, batch, nullptr)) {
      std::vector<const Sequence*> b;
      for (auto i : ids) b.push_back(&seqs[i]);
      const auto n = ids.size() * seqs[ids.front()].events.size();
      total += net.sequence_loss(b, nullptr, nullptr) * static_cast<double>(n);
      count += n;
    }
  } else {
    const auto samples = all_windows(seqs);
    const std::size_t chunk = 512;
    for (std::size_t s = 0; s < samples.size(); s += chunk) {
      const auto n = std::min(chunk, samples.size() - s);
      total += net.window_loss(std::span(samples).subspan(s, n), nullptr) * static_cast<double>(n);
      count += n;
    }
  }
  return count ? total / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

json field_to_json(const FieldSpec& f) {
  static const char* kinds[] = {"event_type", "categorical", "numeric"};
  json j = {{"name", f.name},
            {"kind", kinds[static_cast<int>(f.kind)]},
            {"mode", f.mode == FieldMode::Learned ? "learned" : "one_hot"},
            {"dim", f.dim},
            {"cardinality", f.cardinality},
            {"categories", f.categories},
            {"min", f.min},
            {"max", f.max}};
  return j;
}

FieldSpec field_from_json(const json& j) {
  FieldSpec f;
  f.name = j.at("name").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "event_type")
    f.kind = FieldKind::EventType;
  else if (kind == "categorical")
    f.kind = FieldKind::Categorical;
  else if (kind == "numeric")
    f.kind = FieldKind::Numeric;
  else
    throw ParseError("/embedding", "unknown field kind '" + kind + "'");
  const auto mode = j.at("mode").get<std::string>();
  if (mode != "learned" && mode != "one_hot") throw ParseError("/embedding", "unknown field mode '" + mode + "'");
  f.mode = mode == "learned" ? FieldMode::Learned : FieldMode::OneHot;
  f.dim = j.at("dim").get<std::size_t>();
  f.cardinality = j.at("cardinality").get<std::size_t>();
  f.categories = j.at("categories").get<std::vector<std::string>>();
  f.min = j.at("min").get<double>();
  f.max = j.at("max").get<double>();
  return f;
}

}  // namespace

UniformTagger::UniformTagger(std::size_t num_activities) : n_(num_activities) {
  if (n_ == 0) throw ContractError("uniform tagger needs at least one activity");
}

VectorXd UniformTagger::predict(DecodingState& state, const Event&) const {
  ++state.steps;
  return VectorXd::Constant(static_cast<Eigen::Index>(n_), 1.0 / static_cast<double>(n_));
}

TrainedTagger::TrainedTagger(Network network, std::vector<std::string> activities, TrainingMetadata metadata)
    : network_(std::move(network)), activities_(std::move(activities)), metadata_(std::move(metadata)) {
  if (activities_.size() != network_.spec().num_activities)
    throw ContractError("activity names do not match the network's output width");
  if (!network_.parameters().allFinite()) throw ContractError("tagger weights are not finite");
}

VectorXd TrainedTagger::predict(DecodingState& state, const Event& e) const {
  return network_.step(state, encode(network_.embedding(), e));
}

Sequence to_sequence(const EmbeddingConfig& cfg, const LabeledTrace& record) {
  if (record.labels.size() != record.trace.events.size())
    throw ContractError("trace '" + record.trace.id + "' has " + std::to_string(record.labels.size()) +
                        " labels for " + std::to_string(record.trace.events.size()) + " events");
  Sequence s;
  for (std::size_t i = 0; i < record.labels.size(); ++i) {
    s.events.push_back(encode(cfg, record.trace.events[i]));
    s.labels.push_back(record.labels[i].activity.value);
  }
  return s;
}

TrainedTagger train(const ArchitectureSpec& spec, const EmbeddingConfig& cfg, std::vector<std::string> activities,
                    std::span<const LabeledTrace> training, std::span<const LabeledTrace> validation,
                    const TrainingOptions& options) {
  if (training.empty()) throw ContractError("empty training set");
  if (options.batch_size == 0) throw ContractError("batch size must be positive");
  auto convert = [&](std::span<const LabeledTrace> records) {
    std::vector<Sequence> out;
    for (const auto& r : records) {
      out.push_back(to_sequence(cfg, r));
      for (auto l : out.back().labels)
        if (l >= spec.num_activities) throw ContractError("label outside the activity universe");
    }
    return out;
  };
  const auto train_set = convert(training);
  const auto valid_set = convert(validation);

  Network net(spec, cfg);
  net.initialize(options.seed);
  const std::size_t epochs = options.epochs ? options.epochs : (spec.kind == ArchKind::Recurrent ? 10 : 50);
  std::mt19937_64 rng(options.seed ^ 0x5851f42d4c957f2dULL);
  Adam adam(options, net.parameters().size());
  VectorXd grad;

  TrainingMetadata meta;
  meta.seed = options.seed;
  meta.epochs = epochs;
  meta.learning_rate = options.learning_rate;
  meta.batch_size = options.batch_size;
  meta.train_traces = training.size();
  meta.validation_traces = validation.size();

  auto windows = all_windows(train_set);
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    double total = 0.0;
    std::size_t count = 0;
    if (spec.kind == ArchKind::Recurrent) {
      for (const auto& ids : length_batches(train_set, options.batch_size, &rng)) {
        std::vector<const Sequence*> b;
        for (auto i : ids) b.push_back(&train_set[i]);
        const auto n = ids.size() * train_set[ids.front()].events.size();
        total += net.sequence_loss(b, &grad, &rng) * static_cast<double>(n);
        count += n;
        adam.step(net.parameters(), grad);
      }
    } else {
      std::shuffle(windows.begin(), windows.end(), rng);
      for (std::size_t s = 0; s < windows.size(); s += options.batch_size) {
        const auto n = std::min(options.batch_size, windows.size() - s);
        total += net.window_loss(std::span(windows).subspan(s, n), &grad) * static_cast<double>(n);
        count += n;
        adam.step(net.parameters(), grad);
      }
    }
    if (count == 0) throw ContractError("training set has no events");
    const double train_loss = total / static_cast<double>(count);
    const double valid_loss =
        valid_set.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_loss(net, valid_set, 256);
    meta.train_loss.push_back(train_loss);
    if (!valid_set.empty()) meta.validation_loss.push_back(valid_loss);
    if (options.on_epoch) options.on_epoch(epoch, train_loss, valid_loss);
  }
  return TrainedTagger(std::move(net), std::move(activities), std::move(meta));
}

std::uint32_t argmax(const VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<std::uint32_t>(best);
}

double tagging_accuracy(const Tagger& tagger, std::span<const LabeledTrace> records) {
  std::size_t hits = 0, total = 0;
  for (const auto& r : records) {
    if (r.labels.size() != r.trace.events.size()) throw ContractError("label count differs from event count");
    auto state = tagger.init();
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
      hits += argmax(tagger.predict(state, r.trace.events[i])) == r.labels[i].activity.value;
      ++total;
    }
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

std::string serialize_tagger(const TrainedTagger& tagger) {
  const auto& net = tagger.network();
  const auto& s = net.spec();
  json fields = json::array();
  for (const auto& f : net.embedding().fields) fields.push_back(field_to_json(f));
  json layout = json::array();
  for (const auto& b : net.layout())
    layout.push_back({{"name", b.name}, {"offset", b.offset}, {"rows", b.rows}, {"cols", b.cols}});
  const auto& p = net.parameters();
  const auto& m = tagger.metadata();
  json doc = {
      {"format", kFormat},
      {"version", kVersion},
      {"architecture",
       {{"kind", s.kind == ArchKind::Recurrent ? "recurrent" : "windowed"},
        {"num_activities", s.num_activities},
        {"hidden", s.hidden},
        {"layers", s.layers},
        {"dense", s.dense},
        {"head", s.head},
        {"dropout", s.dropout},
        {"window", s.window},
        {"mlp", s.mlp}}},
      {"embedding", fields},
      {"activities", tagger.activities()},
      {"layout", layout},
      {"parameters", std::vector<double>(p.data(), p.data() + p.size())},
      {"metadata",
       {{"seed", m.seed},
        {"epochs", m.epochs},
        {"learning_rate", m.learning_rate},
        {"batch_size", m.batch_size},
        {"train_traces", m.train_traces},
        {"validation_traces", m.validation_traces},
        {"train_loss", m.train_loss},
        {"validation_loss", m.validation_loss}}}};
  return doc.dump();
}

TrainedTagger parse_tagger(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError("", e.what());
  }
  try {
    if (doc.value("format", std::string()) != kFormat) throw ParseError("/format", "not a tagger document");
    if (doc.value("version", 0) != kVersion)
      throw ParseError("/version", "unsupported tagger version " + doc.value("version", json()).dump());
    const auto& a = doc.at("architecture");
    ArchitectureSpec spec;
    const auto kind = a.at("kind").get<std::string>();
    if (kind != "recurrent" && kind != "windowed") throw ParseError("/architecture/kind", "unknown kind '" + kind + "'");
    spec.kind = kind == "recurrent" ? ArchKind::Recurrent : ArchKind::Windowed;
    spec.num_activities = a.at("num_activities").get<std::size_t>();
    spec.hidden = a.at("hidden").get<std::size_t>();
    spec.layers = a.at("layers").get<std::size_t>();
    spec.dense = a.at("dense").get<std::size_t>();
    spec.head = a.at("head").get<std::size_t>();
    spec.dropout = a.at("dropout").get<double>();
    spec.window = a.at("window").get<std::size_t>();
    spec.mlp = a.at("mlp").get<std::vector<std::size_t>>();
    EmbeddingConfig cfg;
    for (const auto& f : doc.at("embedding")) cfg.fields.push_back(field_from_json(f));
    Network net(spec, cfg);
    const auto& layout = doc.at("layout");
    if (layout.size() != net.layout().size()) throw ParseError("/layout", "layout does not match the architecture");
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const Block b{layout[i].at("name").get<std::string>(), layout[i].at("offset").get<std::size_t>(),
                    layout[i].at("rows").get<std::size_t>(), layout[i].at("cols").get<std::size_t>()};
      if (!(b == net.layout()[i])) throw ParseError("/layout/" + std::to_string(i), "block '" + b.name + "' differs");
    }
    const auto params = doc.at("parameters").get<std::vector<double>>();
    if (params.size() != net.num_parameters())
      throw ParseError("/parameters", "expected " + std::to_string(net.num_parameters()) + " values, got " +
                                          std::to_string(params.size()));
    net.parameters() = Eigen::Map<const VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
    const auto& jm = doc.at("metadata");
    TrainingMetadata m;
    m.seed = jm.at("seed").get<std::uint64_t>();
    m.epochs = jm.at("epochs").get<std::size_t>();
    m.learning_rate = jm.at("learning_rate").get<double>();
    m.batch_size = jm.at("batch_size").get<std::size_t>();
    m.train_traces = jm.at("train_traces").get<std::size_t>();
    m.validation_traces = jm.at("validation_traces").get<std::size_t>();
    m.train_loss = jm.at("train_loss").get<std::vector<double>>();
    m.validation_loss = jm.at("validation_loss").get<std::vector<double>>();
    return TrainedTagger(std::move(net), doc.at("activities").get<std::vector<std::string>>(), std::move(m));
  } catch (const json::exception& e) {
    throw ParseError("", e.what());
  } catch (const ContractError& e) {
    throw ParseError("", e.what());
  }
}

void save_tagger(const TrainedTagger& tagger, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write '" + path + "'");
  out << serialize_tagger(tagger) << '\n';
}

TrainedTagger load_tagger(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, "cannot open tagger file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_tagger(buf.str());
}

}  // namespace sift::tagger
