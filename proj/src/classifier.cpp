#include "weakhier/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "weakhier/error.hpp"
#include "weakhier/kernels.hpp"
#include "weakhier/vmf.hpp"

namespace weakhier {

std::vector<double> encode_document(std::span<const TokenId> tokens, const EmbeddingTable& table) {
  std::vector<double> out(table.dim(), 0.0);
  std::size_t used = 0;
  for (TokenId t : tokens) {
    if (t == kOovToken || static_cast<std::size_t>(t) >= table.size()) continue;
    const auto v = table[t];
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += v[k];
    ++used;
  }
  if (used > 0) normalize_in_place(out);
  return out;
}

RowMatrix encode_documents(const std::vector<std::span<const TokenId>>& docs, const EmbeddingTable& table,
                           bool parallel) {
  RowMatrix out(docs.size(), table.dim());
  kernels::map_rows(parallel, docs.size(), [&](std::size_t i) {
    const auto e = encode_document(docs[i], table);
    std::copy(e.begin(), e.end(), out.row(i).begin());
  });
  return out;
}

double kl_divergence(std::span<const double> target, std::span<const double> predicted) {
  double kl = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j)
    if (target[j] > 0.0) kl += target[j] * (std::log(target[j]) - std::log(predicted[j]));
  return kl;
}

void softmax(std::span<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : z) v /= total;
}

LocalClassifier::LocalClassifier(NodeIndex owner, std::size_t m, std::size_t input_dim, std::size_t hidden,
                                 std::uint64_t seed)
    : owner_(owner), m_(m), input_(input_dim), hidden_(hidden) {
  if (m < 2) throw ValidationError("local classifier needs >= 2 children");
  if (input_dim == 0 || hidden == 0) throw ValidationError("local classifier dimensions must be positive");
  params_.assign(b2() + m_, 0.0);
  // Glorot-uniform input layer; zero output layer, so an untrained model is uniform.
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / double(input_ + hidden_));
  std::uniform_real_distribution<double> unif(-limit, limit);
  for (std::size_t i = 0; i < hidden_ * input_; ++i) params_[w1() + i] = unif(rng);
}

void LocalClassifier::logits(std::span<const double> x, std::span<double> hidden, std::span<double> z) const {
  const double* w = params_.data();
  for (std::size_t h = 0; h < hidden_; ++h) {
    double a = w[b1() + h];
    const double* row = w + w1() + h * input_;
    for (std::size_t k = 0; k < input_; ++k) a += row[k] * x[k];
    hidden[h] = std::tanh(a);
  }
  for (std::size_t c = 0; c < m_; ++c) {
    double a = w[b2() + c];
    const double* row = w + w2() + c * hidden_;
    for (std::size_t h = 0; h < hidden_; ++h) a += row[h] * hidden[h];
    z[c] = a;
  }
}

std::vector<double> LocalClassifier::predict(std::span<const double> x) const {
  if (x.size() != input_) throw ValidationError("local classifier input dimension mismatch");
  std::vector<double> hidden(hidden_), z(m_);
  logits(x, hidden, z);
  softmax(z);
  return z;
}

void LocalClassifier::backward(std::span<const double> x, std::span<const double> hidden,
                               std::span<const double> dlogits, std::span<double> grad) const {
  const double* w = params_.data();
  for (std::size_t c = 0; c < m_; ++c) {
    grad[b2() + c] += dlogits[c];
    double* g = grad.data() + w2() + c * hidden_;
    for (std::size_t h = 0; h < hidden_; ++h) g[h] += dlogits[c] * hidden[h];
  }
  for (std::size_t h = 0; h < hidden_; ++h) {
    double dh = 0.0;
    for (std::size_t c = 0; c < m_; ++c) dh += w[w2() + c * hidden_ + h] * dlogits[c];
    const double da = dh * (1.0 - hidden[h] * hidden[h]);
    if (da == 0.0) continue;
    grad[b1() + h] += da;
    double* g = grad.data() + w1() + h * input_;
    for (std::size_t k = 0; k < input_; ++k) g[k] += da * x[k];
  }
}

nlohmann::json LocalClassifier::to_json() const {
  return {{"version", 1},
          {"owner", owner_},
          {"shape", {{"children", m_}, {"input", input_}, {"hidden", hidden_}}},
          {"trained", trained_},
          {"params", params_}};
}

LocalClassifier LocalClassifier::from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw ParseError("unsupported classifier blob version");
    LocalClassifier clf;
    clf.owner_ = j.at("owner").get<NodeIndex>();
    const auto& shape = j.at("shape");
    clf.m_ = shape.at("children").get<std::size_t>();
    clf.input_ = shape.at("input").get<std::size_t>();
    clf.hidden_ = shape.at("hidden").get<std::size_t>();
    clf.trained_ = j.at("trained").get<bool>();
    clf.params_ = j.at("params").get<std::vector<double>>();
    if (clf.params_.size() != clf.b2() + clf.m_) throw ParseError("classifier blob has wrong parameter count");
    return clf;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("classifier blob: ") + e.what());
  }
}

double kl_loss_and_gradient(const LocalClassifier& clf, const RowMatrix& inputs, const RowMatrix& targets,
                            std::span<const std::size_t> rows, std::span<double> grad) {
  const std::size_t m = clf.num_children();
  std::vector<double> hidden(clf.hidden_dim()), z(m);
  double loss = 0.0;
  const double scale = 1.0 / double(rows.size());
  for (std::size_t r : rows) {
    clf.logits(inputs.row(r), hidden, z);
    softmax(z);
    const auto l = targets.row(r);
    loss += kl_divergence(l, z);
    // d KL / d logits = y - l (targets sum to one)
    for (std::size_t c = 0; c < m; ++c) z[c] = (z[c] - l[c]) * scale;
    clf.backward(inputs.row(r), hidden, z, grad);
  }
  return loss * scale;
}

double mean_kl(const LocalClassifier& clf, const RowMatrix& inputs, const RowMatrix& targets) {
  double total = 0.0;
  for (std::size_t r = 0; r < inputs.rows; ++r) total += kl_divergence(targets.row(r), clf.predict(inputs.row(r)));
  return inputs.rows ? total / double(inputs.rows) : 0.0;
}

PretrainReport pretrain(LocalClassifier& clf, const RowMatrix& inputs, const RowMatrix& targets,
                        const PretrainOptions& options) {
  if (targets.cols != clf.num_children())
    throw ValidationError("pretrain: label width " + std::to_string(targets.cols) + " != children " +
                          std::to_string(clf.num_children()));
  if (inputs.cols != clf.input_dim()) throw ValidationError("pretrain: input dimension mismatch");
  if (inputs.rows != targets.rows) throw ValidationError("pretrain: inputs and labels differ in count");
  if (options.batch_size == 0) throw ValidationError("pretrain: batch size must be >= 1");

  PretrainReport report;
  report.initial_loss = mean_kl(clf, inputs, targets);
  std::vector<std::size_t> order(inputs.rows);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options.seed);
  std::vector<double> grad(clf.parameters().size());
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t len = std::min(options.batch_size, order.size() - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      kl_loss_and_gradient(clf, inputs, targets, std::span(order).subspan(start, len), grad);
      auto& p = clf.parameters();
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= options.learning_rate * grad[i];
    }
    report.epoch_loss.push_back(mean_kl(clf, inputs, targets));
  }
  if (options.epochs > 0) clf.mark_trained();
  return report;
}

}  // namespace weakhier
