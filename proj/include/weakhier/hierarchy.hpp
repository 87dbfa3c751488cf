#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "weakhier/classifier.hpp"
#include "weakhier/keywords.hpp"
#include "weakhier/language_model.hpp"
#include "weakhier/pseudo.hpp"
#include "weakhier/taxonomy.hpp"

namespace weakhier {

/// One local classifier per class with at least two children, indexed by NodeIndex.
/// A class with a single child passes its full mass to that child.
struct HierarchicalModel {
  Taxonomy taxonomy;
  std::vector<std::optional<LocalClassifier>> classifiers;
};

HierarchicalModel make_model(const Taxonomy& taxonomy, std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

/// Product-of-conditionals classifier over the classes of `top`'s subtree that
/// sit at `level` (plus shallower leaves of that subtree).
struct GlobalClassifier {
  NodeIndex top = 0;
  int level = 1;
  std::vector<NodeIndex> classes;
  std::vector<NodeIndex> members;  // local classifiers on the paths to `classes`
};

GlobalClassifier make_global(const Taxonomy& taxonomy, int level, NodeIndex top = 0);

struct PredictionMatrix {
  std::vector<NodeIndex> classes;
  RowMatrix y;
};

/// Throws if a member classifier is untrained.
PredictionMatrix ensemble(const HierarchicalModel& model, const GlobalClassifier& global, const RowMatrix& encodings,
                          bool parallel = false);

struct TargetDistribution {
  RowMatrix targets;
  std::vector<double> frequencies;  // column sums of y
};

/// l_ij = (y_ij^2 / f_j) / sum_j' (y_ij'^2 / f_j'), f_j = sum_i y_ij. Columns with
/// f_j = 0 are dropped with a warning.
TargetDistribution compute_targets(const RowMatrix& y);

/// -(1/log m) sum q log q with 0 log 0 = 0.
double normalized_entropy(std::span<const double> q);
/// Strictly greater than gamma; gamma = 1 never blocks.
bool should_block(std::span<const double> q, double gamma);

/// Mean KL(targets || ensemble) over `rows` and its gradient for every member
/// classifier (grads[m] matches members[m]'s parameter vector).
double joint_loss_and_gradient(const HierarchicalModel& model, const GlobalClassifier& global,
                               const RowMatrix& encodings, const RowMatrix& targets,
                               std::span<const std::size_t> rows, std::vector<std::vector<double>>& grads);

struct SelfTrainOptions {
  double delta = 0.1;  // percent of documents whose argmax changes
  std::size_t max_rounds = 20;
  std::size_t batch_size = 256;
  double learning_rate = 1.0;
  double gamma = 1.0;  // only for the would-block statistic
  std::uint64_t seed = 0;
  bool parallel = false;
};

/// Measured at each target refresh, before the gradient pass.
struct RoundStats {
  int level = 0;
  NodeIndex top = 0;
  std::size_t round = 0;
  std::optional<double> changed_fraction;  // absent on the first round
  double loss = 0.0;                       // mean KL(targets || y)
  double mean_entropy = 0.0;               // normalized entropy of the deciding local output
  std::size_t would_block = 0;
  std::vector<NodeIndex> assignment;   // argmax class per row
  std::span<const std::size_t> documents;  // corpus index per row
};
using RoundObserver = std::function<void(const RoundStats&)>;

struct SelfTrainReport {
  std::size_t rounds = 0;  // gradient passes
  bool converged = false;
  std::vector<double> changed_fraction;
  std::vector<double> loss;
  std::vector<double> mean_entropy;
};

/// Refreshes targets once per pass and fits all member classifiers jointly by
/// mini-batch SGD on KL(targets || ensemble). Stops when fewer than delta% of
/// argmax assignments change between refreshes, or after max_rounds passes.
/// `documents` only labels rows for the observer.
SelfTrainReport self_train(HierarchicalModel& model, const GlobalClassifier& global, const RowMatrix& encodings,
                           const SelfTrainOptions& options, std::span<const std::size_t> documents = {},
                           const RoundObserver& observer = {});

struct ClassAssignment {
  std::size_t document = 0;
  NodeIndex node = 0;
  int level = 0;
  bool blocked = false;
};

struct TrainingInputs {
  const Taxonomy& taxonomy;  // supervision propagated
  const EmbeddingTable& table;
  const LanguageModel& lm;
  const std::vector<std::optional<MovMFMixture>>& mixtures;
  const std::vector<ClassKeywordSet>& keywords;
};

struct TrainOptions {
  TrainingSetOptions pseudo;
  PretrainOptions pretrain;
  SelfTrainOptions self;
  double gamma = 0.9;
  std::size_t hidden = 64;
  bool global = true;      // false: greedy top-down
  bool self_train = true;  // false: pre-trained classifiers only
  std::uint64_t seed = 0;
};

/// Splitmix-style derivation of the per-node (or per-level) seed used by the
/// training entry points.
std::uint64_t node_seed(std::uint64_t seed, std::uint64_t salt);

/// Pseudo training set encoded for one node's classifier.
void pretrain_node(HierarchicalModel& model, NodeIndex node, const PseudoTrainingSet& set,
                   const EmbeddingTable& table, const PretrainOptions& options);

/// Generates pseudo documents and pre-trains every local classifier.
HierarchicalModel pretrain_all(const TrainingInputs& inputs, const TrainOptions& options);

struct LevelLog {
  int level = 0;
  std::size_t active = 0;
  std::size_t blocked = 0;
  std::size_t rounds = 0;
};

struct SelfTrainingResult {
  std::vector<ClassAssignment> assignments;  // one per document, in corpus order
  std::vector<LevelLog> levels;
  std::size_t total_rounds = 0;
};

/// The level loop over pre-trained classifiers: self-train the level-k global
/// classifier on the remaining documents, block by normalized entropy, remove
/// blocked documents, continue. Remaining documents get their deepest class.
SelfTrainingResult self_train_levels(HierarchicalModel& model, const RowMatrix& encodings,
                                     const TrainOptions& options, const RoundObserver& observer = {});

struct TrainResult {
  HierarchicalModel model;
  SelfTrainingResult result;
};

TrainResult train_all(const TrainingInputs& inputs, const RowMatrix& encodings, const TrainOptions& options,
                      const RoundObserver& observer = {});

/// Top-down inference with blocking; no parameter updates.
std::vector<ClassAssignment> predict(const HierarchicalModel& model, const RowMatrix& encodings, double gamma,
                                     bool global = true, bool parallel = false);

}  // namespace weakhier
