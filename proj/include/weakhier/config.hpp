#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "weakhier/embedding.hpp"
#include "weakhier/hierarchy.hpp"
#include "weakhier/keywords.hpp"
#include "weakhier/text.hpp"

namespace weakhier {

struct Config {
  // corpus
  std::size_t min_count = 5;
  std::size_t min_token_length = 2;
  // embeddings
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t embed_epochs = 5;
  double embed_learning_rate = 0.025;
  std::string pretrained_embeddings;  // empty: train skip-gram
  // keywords and movMF
  std::size_t max_keywords = 100;
  std::string keyword_scope = "siblings";  // or "level"
  std::size_t em_max_iters = 100;
  double em_tol = 1e-6;
  // pseudo documents
  std::size_t lm_order = 3;
  double lm_discount = 0.75;
  double alpha = 0.2;
  std::size_t beta = 500;
  std::size_t pseudo_length = 0;  // 0: mean corpus document length, capped at 200
  std::size_t sequence_cap = 50;
  std::string begin_words = "movmf";  // or "keywords"
  // classifiers
  std::string encoder = "mean";
  std::size_t hidden = 64;
  std::size_t pretrain_epochs = 5;
  std::size_t batch_size = 256;
  double learning_rate = 0.1;
  // self-training and blocking
  double selftrain_learning_rate = 1.0;
  double delta = 0.1;
  double gamma = 0.9;
  std::size_t max_rounds = 20;
  std::string mode = "global";  // or "greedy"
  bool self_train = true;
  // run
  std::uint64_t seed = 0;
  int threads = 1;

  /// Throws ValidationError naming the first offending key.
  void validate() const;
  /// Applies one key=value pair; unknown keys and malformed values throw.
  void set(const std::string& key, const std::string& value);
  /// Canonical "key=value" lines in a fixed order.
  std::string to_text() const;
  /// Stable across runs of the same build.
  std::string hash() const;

  TokenizerConfig tokenizer() const;
  SkipGramOptions skipgram() const;
  KeywordOptions keywords() const;
  EmOptions em() const;
  /// `mean_doc_length` resolves pseudo_length = 0.
  TrainOptions train(double mean_doc_length) const;
};

/// Flat "key = value" file; '#' starts a comment.
Config load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const Config& config);

}  // namespace weakhier
