#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "weakhier/embedding.hpp"
#include "weakhier/keywords.hpp"
#include "weakhier/language_model.hpp"
#include "weakhier/taxonomy.hpp"
#include "weakhier/vmf.hpp"

namespace weakhier {

struct PseudoDocument {
  NodeIndex source = 0;
  std::vector<TokenId> tokens;
  std::uint64_t seed = 0;
};

/// Smoothed target over the m children of one local classifier.
using PseudoLabel = std::vector<double>;

/// (1 - alpha) + alpha/m at `source`, alpha/m elsewhere.
PseudoLabel make_pseudo_label(std::size_t source, std::size_t m, double alpha);

/// Where a pseudo document's first word (and the first word of every
/// concatenated sequence) comes from.
struct BeginWordSource {
  const MovMFMixture* mixture = nullptr;           // nearest word to a movMF sample
  const std::vector<std::string>* keywords = nullptr;  // uniform over the keyword set
};

struct GenerationOptions {
  std::size_t length = 50;
  std::size_t sequence_cap = 50;
};

PseudoDocument generate_pseudo_document(NodeIndex source, const BeginWordSource& begin, const LanguageModel& lm,
                                        const EmbeddingTable& table, const GenerationOptions& options,
                                        std::uint64_t seed);

enum class BeginWordMode { kMovMF, kKeywords };

struct TrainingSetOptions {
  std::size_t beta = 500;
  double alpha = 0.2;
  GenerationOptions generation;
  BeginWordMode begin_mode = BeginWordMode::kMovMF;
  std::uint64_t seed = 0;
  bool parallel = false;
};

struct PseudoTrainingSet {
  std::vector<PseudoDocument> documents;
  std::vector<PseudoLabel> labels;
  std::vector<std::size_t> child_index;  // source position among the node's children
};

/// beta pseudo documents per child of `node`, each paired with its label, in a
/// seeded shuffled order. Each child's own movMF seeds its documents.
PseudoTrainingSet generate_training_set(const Taxonomy& taxonomy, NodeIndex node,
                                        const std::vector<std::optional<MovMFMixture>>& mixtures,
                                        const std::vector<ClassKeywordSet>& keywords, const LanguageModel& lm,
                                        const EmbeddingTable& table, const TrainingSetOptions& options);

/// Line-delimited {class, tokens, seed} records (tokens as words).
void save_pseudo_documents(const std::filesystem::path& path, const Taxonomy& taxonomy,
                           const std::vector<PseudoDocument>& docs, const Vocabulary& vocab);
std::vector<PseudoDocument> load_pseudo_documents(const std::filesystem::path& path, const Taxonomy& taxonomy,
                                                  const Vocabulary& vocab);

}  // namespace weakhier
