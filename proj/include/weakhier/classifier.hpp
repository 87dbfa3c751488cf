#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "weakhier/embedding.hpp"
#include "weakhier/matrix.hpp"
#include "weakhier/taxonomy.hpp"

namespace weakhier {

/// Mean of the token embeddings (OOV skipped), rescaled to unit length.
/// Documents with no in-vocabulary token encode to the zero vector.
std::vector<double> encode_document(std::span<const TokenId> tokens, const EmbeddingTable& table);

RowMatrix encode_documents(const std::vector<std::span<const TokenId>>& docs, const EmbeddingTable& table,
                           bool parallel = false);

/// KL(target || predicted) with 0 log 0 = 0.
double kl_divergence(std::span<const double> target, std::span<const double> predicted);

/// Softmax in place.
void softmax(std::span<double> z);

/// Per-node classifier over the node's m children: input -> tanh hidden layer
/// -> softmax. Parameters live in one flat vector laid out as
/// [W1 (hidden x input) | b1 | W2 (m x hidden) | b2].
class LocalClassifier {
 public:
  LocalClassifier() = default;
  LocalClassifier(NodeIndex owner, std::size_t m, std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

  NodeIndex owner() const { return owner_; }
  std::size_t num_children() const { return m_; }
  std::size_t input_dim() const { return input_; }
  std::size_t hidden_dim() const { return hidden_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  /// Forward pass. `hidden` receives tanh activations; returns logits.
  void logits(std::span<const double> x, std::span<double> hidden, std::span<double> z) const;
  /// p(child | this node) for one encoding.
  std::vector<double> predict(std::span<const double> x) const;

  /// Adds d(loss)/d(params) for one example to `grad`, given d(loss)/d(logits).
  void backward(std::span<const double> x, std::span<const double> hidden, std::span<const double> dlogits,
                std::span<double> grad) const;

  nlohmann::json to_json() const;
  static LocalClassifier from_json(const nlohmann::json& j);

  bool operator==(const LocalClassifier&) const = default;

 private:
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return hidden_ * input_; }
  std::size_t w2() const { return b1() + hidden_; }
  std::size_t b2() const { return w2() + m_ * hidden_; }

  NodeIndex owner_ = 0;
  std::size_t m_ = 0;
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
  bool trained_ = false;
  std::vector<double> params_;
};

/// Mean KL loss and its gradient over a batch of rows.
double kl_loss_and_gradient(const LocalClassifier& clf, const RowMatrix& inputs, const RowMatrix& targets,
                            std::span<const std::size_t> rows, std::span<double> grad);

struct PretrainOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 256;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

struct PretrainReport {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // mean KL over the set after each epoch
};

/// Mini-batch SGD on the mean KL(target || output) over (inputs, targets).
PretrainReport pretrain(LocalClassifier& clf, const RowMatrix& inputs, const RowMatrix& targets,
                        const PretrainOptions& options);

double mean_kl(const LocalClassifier& clf, const RowMatrix& inputs, const RowMatrix& targets);

}  // namespace weakhier
