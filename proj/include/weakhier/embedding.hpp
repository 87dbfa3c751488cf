#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "weakhier/matrix.hpp"
#include "weakhier/text.hpp"

namespace weakhier {

/// One d-vector per vocabulary index. Row kOovToken is never used for lookups.
struct EmbeddingTable {
  std::vector<std::string> words;
  RowMatrix vectors;
  bool normalized = false;

  std::size_t dim() const { return vectors.cols; }
  std::size_t size() const { return vectors.rows; }
  std::span<const double> operator[](TokenId id) const { return vectors.row(static_cast<std::size_t>(id)); }
};

struct SkipGramOptions {
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
  /// threads > 1 switches to lock-free (Hogwild) updates; output is then
  /// not reproducible.
  int threads = 1;
};

EmbeddingTable train_skipgram(const Corpus& corpus, const SkipGramOptions& options);

/// Rescales every row to unit norm. Zero rows are replaced by a seeded random
/// unit vector (with a warning).
EmbeddingTable normalize_to_sphere(EmbeddingTable table, std::uint64_t seed = 0);

struct Neighbor {
  TokenId id;
  std::string word;
  double similarity;
};

/// The k words with largest cosine to `query`, skipping `exclude` and the OOV
/// row. Ties are broken lexicographically.
std::vector<Neighbor> nearest_words(const EmbeddingTable& table, std::span<const double> query, std::size_t k,
                                    const std::unordered_set<std::string>& exclude = {}, bool parallel = false);

/// Text format: "<word> <f1> ... <fd>" per line.
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

/// Reorders a loaded table onto vocabulary indices; words missing from the
/// file get seeded random vectors.
EmbeddingTable align_to_vocabulary(const EmbeddingTable& loaded, const Vocabulary& vocab, std::uint64_t seed = 0);

}  // namespace weakhier
