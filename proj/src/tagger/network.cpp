#include "sift/tagger/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sift/errors.hpp"

namespace sift::tagger {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

MatrixXd sigmoid(const MatrixXd& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

// Column-wise softmax, shifted by the column max for stability.
MatrixXd softmax(const MatrixXd& logits) {
  MatrixXd p = logits;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    auto col = p.col(j);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
  return p;
}

MatrixXd relu(const MatrixXd& z) { return z.cwiseMax(0.0); }

MatrixXd relu_mask(const MatrixXd& z) { return (z.array() > 0.0).cast<double>().matrix(); }

// Inverted dropout: kept units are scaled by 1/(1-p).
MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  MatrixXd m(rows, cols);
  const double scale = 1.0 / (1.0 - p);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = keep(rng) ? scale : 0.0;
  return m;
}

double cross_entropy(const MatrixXd& p, const std::vector<std::uint32_t>& labels) {
  double loss = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j)
    loss -= std::log(std::max(p(labels[j], static_cast<Eigen::Index>(j)), 1e-300));
  return loss / static_cast<double>(labels.size());
}

}  // namespace

ArchitectureSpec ArchitectureSpec::recurrent(std::size_t num_activities) {
  ArchitectureSpec s;
  s.kind = ArchKind::Recurrent;
  s.num_activities = num_activities;
  return s;
}

ArchitectureSpec ArchitectureSpec::windowed(std::size_t k, std::size_t num_activities) {
  ArchitectureSpec s;
  s.kind = ArchKind::Windowed;
  s.window = k;
  s.num_activities = num_activities;
  return s;
}

std::string ArchitectureSpec::name() const {
  return kind == ArchKind::Recurrent ? "MA" : "MB_" + std::to_string(window);
}

Network::Network(ArchitectureSpec spec, EmbeddingConfig embedding)
    : spec_(std::move(spec)), embedding_(std::move(embedding)) {
  if (spec_.num_activities == 0) throw ContractError("architecture needs at least one activity");
  if (embedding_.fields.empty()) throw ContractError("embedding needs at least the event-type field");
  std::size_t offset = 0;
  for (const auto& f : embedding_.fields) {
    field_offset_.push_back(offset);
    offset += f.width();
    if (f.kind != FieldKind::Numeric && f.mode == FieldMode::Learned)
      table_block_.push_back(add_block("embed." + f.name, f.dim, f.cardinality, -1.0));
    else
      table_block_.push_back(kNone);
  }
  const auto d = embedding_.width();
  const auto a = spec_.num_activities;
  if (spec_.kind == ArchKind::Recurrent) {
    const auto h = spec_.hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    for (std::size_t l = 0; l < spec_.layers; ++l) {
      const auto in = l == 0 ? d : h;
      const auto tag = "lstm" + std::to_string(l);
      lstm_w_.push_back(add_block(tag + ".W", 4 * h, in, bound));
      lstm_u_.push_back(add_block(tag + ".U", 4 * h, h, bound));
      lstm_b_.push_back(add_block(tag + ".b", 4 * h, 1, bound));
    }
    const std::size_t sizes[] = {h, spec_.dense, spec_.head, a};
    for (std::size_t i = 0; i + 1 < 4; ++i) {
      const double b = 1.0 / std::sqrt(static_cast<double>(sizes[i]));
      dense_w_.push_back(add_block("dense" + std::to_string(i) + ".W", sizes[i + 1], sizes[i], b));
      dense_b_.push_back(add_block("dense" + std::to_string(i) + ".b", sizes[i + 1], 1, b));
    }
  } else {
    if (spec_.window == 0) throw ContractError("window must be positive");
    std::vector<std::size_t> sizes{spec_.window * d};
    sizes.insert(sizes.end(), spec_.mlp.begin(), spec_.mlp.end());
    sizes.push_back(a);
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      const double b = 1.0 / std::sqrt(static_cast<double>(sizes[i]));
      dense_w_.push_back(add_block("dense" + std::to_string(i) + ".W", sizes[i + 1], sizes[i], b));
      dense_b_.push_back(add_block("dense" + std::to_string(i) + ".b", sizes[i + 1], 1, b));
    }
  }
  params_ = VectorXd::Zero(static_cast<Eigen::Index>(layout_.empty() ? 0 : layout_.back().offset +
                                                                                layout_.back().rows * layout_.back().cols));
}

std::size_t Network::add_block(const std::string& name, std::size_t rows, std::size_t cols, double bound) {
  const std::size_t offset = layout_.empty() ? 0 : layout_.back().offset + layout_.back().rows * layout_.back().cols;
  layout_.push_back(Block{name, offset, rows, cols});
  init_bound_.push_back(bound);
  return layout_.size() - 1;
}

Eigen::Map<const MatrixXd> Network::mat(std::size_t block) const {
  const auto& b = layout_[block];
  return {params_.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}

Eigen::Map<MatrixXd> Network::mat(VectorXd& v, std::size_t block) const {
  const auto& b = layout_[block];
  return {v.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}

void Network::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    const auto& b = layout_[i];
    const double bound = std::max(init_bound_[i], 0.0);
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (std::size_t k = 0; k < b.rows * b.cols; ++k)
      params_[static_cast<Eigen::Index>(b.offset + k)] = bound > 0 ? uniform(rng) : normal(rng);
  }
}

void Network::embed_into(const EncodedEvent& e, double* out) const {
  std::size_t ci = 0, ni = 0;
  for (std::size_t f = 0; f < embedding_.fields.size(); ++f) {
    const auto& field = embedding_.fields[f];
    double* dst = out + field_offset_[f];
    if (field.kind == FieldKind::Numeric) {
      dst[0] = e.numbers.at(ni++);
      continue;
    }
    const auto id = e.categories.at(ci++);
    std::fill(dst, dst + field.width(), 0.0);
    if (id == kUnknownCategory) continue;
    if (id >= field.cardinality) throw ContractError("category id outside field '" + field.name + "'");
    if (table_block_[f] == kNone) {
      dst[id] = 1.0;
    } else {
      const auto table = mat(table_block_[f]);
      for (std::size_t k = 0; k < field.dim; ++k) dst[k] = table(static_cast<Eigen::Index>(k), id);
    }
  }
}

void Network::scatter_embedding(const EncodedEvent& e, const double* grad_in, VectorXd& grad) const {
  std::size_t ci = 0;
  for (std::size_t f = 0; f < embedding_.fields.size(); ++f) {
    const auto& field = embedding_.fields[f];
    if (field.kind == FieldKind::Numeric) continue;
    const auto id = e.categories[ci++];
    if (table_block_[f] == kNone || id == kUnknownCategory) continue;
    auto table = mat(grad, table_block_[f]);
    for (std::size_t k = 0; k < field.dim; ++k)
      table(static_cast<Eigen::Index>(k), id) += grad_in[field_offset_[f] + k];
  }
}

VectorXd Network::embed(const EncodedEvent& e) const {
  VectorXd v(static_cast<Eigen::Index>(embedding_.width()));
  embed_into(e, v.data());
  return v;
}

double Network::loss(std::span<const Sequence* const> batch, VectorXd* grad, std::mt19937_64* dropout) const {
  if (spec_.kind == ArchKind::Recurrent) return sequence_loss(batch, grad, dropout);
  std::vector<WindowSample> samples;
  for (const auto* s : batch)
    for (std::size_t p = 0; p < s->events.size(); ++p) samples.push_back({s, p});
  return window_loss(samples, grad);
}

double Network::sequence_loss(std::span<const Sequence* const> batch, VectorXd* grad, std::mt19937_64* dropout) const {
  if (spec_.kind != ArchKind::Recurrent) throw ContractError("sequence_loss needs the recurrent architecture");
  if (batch.empty()) throw ContractError("empty batch");
  const auto T = batch.front()->events.size();
  const auto B = static_cast<Eigen::Index>(batch.size());
  for (const auto* s : batch) {
    if (s->events.size() != T) throw ContractError("recurrent batches need equally long sequences");
    if (s->labels.size() != T) throw ContractError("label count differs from event count");
    for (auto l : s->labels)
      if (l >= spec_.num_activities) throw ContractError("label outside the activity universe");
  }
  if (T == 0) throw ContractError("empty sequences");
  const auto H = static_cast<Eigen::Index>(spec_.hidden);
  const auto L = spec_.layers;
  const auto d = static_cast<Eigen::Index>(embedding_.width());
  const double p = dropout ? spec_.dropout : 0.0;
  const auto N = static_cast<Eigen::Index>(T) * B;

  struct StepCache {
    MatrixXd in, i, f, g, o, c, tc, h, mask;
  };
  std::vector<std::vector<StepCache>> cache(L, std::vector<StepCache>(T));

  for (std::size_t t = 0; t < T; ++t) {
    auto& in = cache[0][t].in;
    in.resize(d, B);
    for (Eigen::Index b = 0; b < B; ++b) embed_into(batch[b]->events[t], in.col(b).data());
  }
  for (std::size_t l = 0; l < L; ++l) {
    const auto W = mat(lstm_w_[l]);
    const auto U = mat(lstm_u_[l]);
    const auto bias = mat(lstm_b_[l]);
    MatrixXd h_prev = MatrixXd::Zero(H, B), c_prev = MatrixXd::Zero(H, B);
    for (std::size_t t = 0; t < T; ++t) {
      auto& s = cache[l][t];
      if (l > 0) {
        const auto& below = cache[l - 1][t].h;
        if (p > 0) {
          s.mask = dropout_mask(H, B, p, *dropout);
          s.in = below.cwiseProduct(s.mask);
        } else {
          s.in = below;
        }
      }
      MatrixXd z = W * s.in + U * h_prev;
      z.colwise() += bias.col(0);
      s.i = sigmoid(z.topRows(H));
      s.f = sigmoid(z.middleRows(H, H));
      s.g = z.middleRows(2 * H, H).array().tanh().matrix();
      s.o = sigmoid(z.bottomRows(H));
      s.c = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.g);
      s.tc = s.c.array().tanh().matrix();
      s.h = s.o.cwiseProduct(s.tc);
      h_prev = s.h;
      c_prev = s.c;
    }
  }

  MatrixXd top(H, N);
  std::vector<std::uint32_t> labels(static_cast<std::size_t>(N));
  for (std::size_t t = 0; t < T; ++t) {
    top.middleCols(static_cast<Eigen::Index>(t) * B, B) = cache[L - 1][t].h;
    for (Eigen::Index b = 0; b < B; ++b) labels[t * static_cast<std::size_t>(B) + b] = batch[b]->labels[t];
  }
  const auto W1 = mat(dense_w_[0]), W2 = mat(dense_w_[1]), W3 = mat(dense_w_[2]);
  MatrixXd z1 = W1 * top;
  z1.colwise() += mat(dense_b_[0]).col(0);
  MatrixXd a1 = relu(z1);
  MatrixXd m1;
  if (p > 0) {
    m1 = dropout_mask(a1.rows(), a1.cols(), p, *dropout);
    a1 = a1.cwiseProduct(m1);
  }
  MatrixXd z2 = W2 * a1;
  z2.colwise() += mat(dense_b_[1]).col(0);
  const MatrixXd a2 = relu(z2);
  MatrixXd logits = W3 * a2;
  logits.colwise() += mat(dense_b_[2]).col(0);
  const MatrixXd prob = softmax(logits);
  const double loss = cross_entropy(prob, labels);
  if (!grad) return loss;

  grad->setZero(params_.size());
  MatrixXd dlogits = prob;
  for (Eigen::Index j = 0; j < N; ++j) dlogits(labels[static_cast<std::size_t>(j)], j) -= 1.0;
  dlogits /= static_cast<double>(N);
  mat(*grad, dense_w_[2]) += dlogits * a2.transpose();
  mat(*grad, dense_b_[2]) += dlogits.rowwise().sum();
  const MatrixXd dz2 = (W3.transpose() * dlogits).cwiseProduct(relu_mask(z2));
  mat(*grad, dense_w_[1]) += dz2 * a1.transpose();
  mat(*grad, dense_b_[1]) += dz2.rowwise().sum();
  MatrixXd dz1 = (W2.transpose() * dz2).cwiseProduct(relu_mask(z1));
  if (p > 0) dz1 = dz1.cwiseProduct(m1);
  mat(*grad, dense_w_[0]) += dz1 * top.transpose();
  mat(*grad, dense_b_[0]) += dz1.rowwise().sum();
  const MatrixXd dtop = W1.transpose() * dz1;

  std::vector<MatrixXd> dh_above(T);
  for (std::size_t t = 0; t < T; ++t) dh_above[t] = dtop.middleCols(static_cast<Eigen::Index>(t) * B, B);
  for (std::size_t l = L; l-- > 0;) {
    const auto W = mat(lstm_w_[l]);
    const auto U = mat(lstm_u_[l]);
    auto gW = mat(*grad, lstm_w_[l]);
    auto gU = mat(*grad, lstm_u_[l]);
    auto gb = mat(*grad, lstm_b_[l]);
    MatrixXd dh_next = MatrixXd::Zero(H, B), dc_next = MatrixXd::Zero(H, B);
    const MatrixXd zeros = MatrixXd::Zero(H, B);
    MatrixXd dz(4 * H, B);
    for (std::size_t t = T; t-- > 0;) {
      const auto& s = cache[l][t];
      const MatrixXd& c_prev = t > 0 ? cache[l][t - 1].c : zeros;
      const MatrixXd& h_prev = t > 0 ? cache[l][t - 1].h : zeros;
      const MatrixXd dh = dh_above[t] + dh_next;
      const MatrixXd dout = dh.cwiseProduct(s.tc);
      const MatrixXd dc =
          dc_next + dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tc.array().square()).matrix());
      dz.topRows(H) = dc.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct((1.0 - s.i.array()).matrix()));
      dz.middleRows(H, H) = dc.cwiseProduct(c_prev).cwiseProduct(s.f.cwiseProduct((1.0 - s.f.array()).matrix()));
      dz.middleRows(2 * H, H) = dc.cwiseProduct(s.i).cwiseProduct((1.0 - s.g.array().square()).matrix());
      dz.bottomRows(H) = dout.cwiseProduct(s.o.cwiseProduct((1.0 - s.o.array()).matrix()));
      gW += dz * s.in.transpose();
      gU += dz * h_prev.transpose();
      gb += dz.rowwise().sum();
      MatrixXd dx = W.transpose() * dz;
      dh_next = U.transpose() * dz;
      dc_next = dc.cwiseProduct(s.f);
      if (l > 0) {
        dh_above[t] = p > 0 ? MatrixXd(dx.cwiseProduct(s.mask)) : dx;
      } else {
        for (Eigen::Index b = 0; b < B; ++b) scatter_embedding(batch[b]->events[t], dx.col(b).data(), *grad);
      }
    }
  }
  return loss;
}

MatrixXd Network::window_input(std::span<const WindowSample> batch) const {
  const auto d = embedding_.width();
  const auto K = spec_.window;
  MatrixXd x = MatrixXd::Zero(static_cast<Eigen::Index>(K * d), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    for (std::size_t slot = 0; slot < K; ++slot) {
      if (s.position + slot + 1 < K) continue;  // before the trace start: zero padding
      const auto pos = s.position + slot + 1 - K;
      embed_into(s.sequence->events[pos], x.col(static_cast<Eigen::Index>(b)).data() + slot * d);
    }
  }
  return x;
}

double Network::window_loss(std::span<const WindowSample> batch, VectorXd* grad) const {
  if (spec_.kind != ArchKind::Windowed) throw ContractError("window_loss needs the windowed architecture");
  if (batch.empty()) throw ContractError("empty batch");
  std::vector<std::uint32_t> labels;
  for (const auto& s : batch) {
    if (s.sequence->labels.size() != s.sequence->events.size())
      throw ContractError("label count differs from event count");
    if (s.position >= s.sequence->events.size()) throw ContractError("window position outside the sequence");
    const auto l = s.sequence->labels[s.position];
    if (l >= spec_.num_activities) throw ContractError("label outside the activity universe");
    labels.push_back(l);
  }
  const auto layers = dense_w_.size();
  std::vector<MatrixXd> acts{window_input(batch)};
  std::vector<MatrixXd> pre;
  for (std::size_t i = 0; i < layers; ++i) {
    MatrixXd z = mat(dense_w_[i]) * acts.back();
    z.colwise() += mat(dense_b_[i]).col(0);
    pre.push_back(z);
    acts.push_back(i + 1 < layers ? relu(z) : softmax(z));
  }
  const double loss = cross_entropy(acts.back(), labels);
  if (!grad) return loss;

  grad->setZero(params_.size());
  MatrixXd delta = acts.back();
  for (std::size_t j = 0; j < labels.size(); ++j) delta(labels[j], static_cast<Eigen::Index>(j)) -= 1.0;
  delta /= static_cast<double>(labels.size());
  for (std::size_t i = layers; i-- > 0;) {
    mat(*grad, dense_w_[i]) += delta * acts[i].transpose();
    mat(*grad, dense_b_[i]) += delta.rowwise().sum();
    MatrixXd below = mat(dense_w_[i]).transpose() * delta;
    if (i > 0) below = below.cwiseProduct(relu_mask(pre[i - 1]));
    delta = std::move(below);
  }
  const auto d = embedding_.width();
  const auto K = spec_.window;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    for (std::size_t slot = 0; slot < K; ++slot) {
      if (s.position + slot + 1 < K) continue;
      const auto pos = s.position + slot + 1 - K;
      scatter_embedding(s.sequence->events[pos], delta.col(static_cast<Eigen::Index>(b)).data() + slot * d, *grad);
    }
  }
  return loss;
}

InferenceState Network::initial_state() const {
  InferenceState s;
  if (spec_.kind == ArchKind::Recurrent) {
    s.h.assign(spec_.layers, VectorXd::Zero(static_cast<Eigen::Index>(spec_.hidden)));
    s.c.assign(spec_.layers, VectorXd::Zero(static_cast<Eigen::Index>(spec_.hidden)));
  }
  return s;
}

VectorXd Network::step(InferenceState& state, const EncodedEvent& e) const {
  VectorXd x = embed(e);
  ++state.steps;
  if (spec_.kind == ArchKind::Recurrent) {
    if (state.h.size() != spec_.layers) throw ContractError("state does not belong to this network");
    const auto H = static_cast<Eigen::Index>(spec_.hidden);
    for (std::size_t l = 0; l < spec_.layers; ++l) {
      VectorXd z = mat(lstm_w_[l]) * x + mat(lstm_u_[l]) * state.h[l] + mat(lstm_b_[l]).col(0);
      const VectorXd i = sigmoid(z.head(H));
      const VectorXd f = sigmoid(z.segment(H, H));
      const VectorXd g = z.segment(2 * H, H).array().tanh().matrix();
      const VectorXd o = sigmoid(z.tail(H));
      state.c[l] = f.cwiseProduct(state.c[l]) + i.cwiseProduct(g);
      state.h[l] = o.cwiseProduct(state.c[l].array().tanh().matrix());
      x = state.h[l];
    }
    for (std::size_t i = 0; i < dense_w_.size(); ++i) {
      VectorXd z = mat(dense_w_[i]) * x + mat(dense_b_[i]).col(0);
      x = i + 1 < dense_w_.size() ? VectorXd(z.cwiseMax(0.0)) : z;
    }
    return softmax(x).col(0);
  }
  const auto d = static_cast<Eigen::Index>(embedding_.width());
  const auto K = spec_.window;
  VectorXd in = VectorXd::Zero(static_cast<Eigen::Index>(K) * d);
  const auto past = state.history.size();
  for (std::size_t k = 0; k < past; ++k)
    in.segment(static_cast<Eigen::Index>(K - 1 - past + k) * d, d) = state.history[k];
  in.tail(d) = x;
  state.history.push_back(x);
  if (state.history.size() > K - 1) state.history.erase(state.history.begin());
  for (std::size_t i = 0; i < dense_w_.size(); ++i) {
    VectorXd z = mat(dense_w_[i]) * in + mat(dense_b_[i]).col(0);
    in = i + 1 < dense_w_.size() ? VectorXd(z.cwiseMax(0.0)) : z;
  }
  return softmax(in).col(0);
}

GradientCheckResult gradient_check(const ArchitectureSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EmbeddingConfig cfg;
  cfg.fields.push_back(FieldSpec{"type", FieldKind::EventType, FieldMode::Learned, 3, 4});
  cfg.fields.push_back(FieldSpec{"ward", FieldKind::Categorical, FieldMode::OneHot, 0, 3, {"x", "y", "z"}});
  cfg.fields.push_back(FieldSpec{"dose", FieldKind::Numeric});
  Network net(spec, cfg);
  net.initialize(seed);

  std::uniform_int_distribution<std::uint32_t> type(0, 3), ward(0, 3), label(0, static_cast<std::uint32_t>(spec.num_activities - 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Sequence> seqs(3);
  for (auto& s : seqs)
    for (int t = 0; t < 5; ++t) {
      const auto w = ward(rng);
      s.events.push_back(EncodedEvent{{type(rng), w == 3 ? kUnknownCategory : w}, {unit(rng)}});
      s.labels.push_back(label(rng));
    }
  std::vector<const Sequence*> batch;
  for (const auto& s : seqs) batch.push_back(&s);

  const std::uint64_t mask_seed = seed ^ 0x9e3779b97f4a7c15ULL;
  auto eval = [&](VectorXd* g) {
    std::mt19937_64 masks(mask_seed);
    return net.loss(batch, g, spec.kind == ArchKind::Recurrent ? &masks : nullptr);
  };
  VectorXd analytic;
  GradientCheckResult result;
  result.loss = eval(&analytic);
  result.parameters = net.num_parameters();
  constexpr double h = 1e-4;
  auto& theta = net.parameters();
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double keep = theta[k];
    theta[k] = keep + h;
    const double up = eval(nullptr);
    theta[k] = keep - h;
    const double down = eval(nullptr);
    theta[k] = keep;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic[k] - numeric) / denom);
  }
  return result;
}

}  // namespace sift::tagger
