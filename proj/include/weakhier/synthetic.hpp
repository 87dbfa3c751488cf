#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "weakhier/text.hpp"

namespace weakhier {

/// Two-level labeled corpus with topic vocabularies laid out on a latent
/// sphere. Leaf l has mean direction normalize(e_parent + e_leaf); every topic
/// word gets a latent vector drawn from a vMF around its leaf (or parent) mean.
/// A document draws its own direction from its leaf's vMF and picks topic words
/// with probability proportional to zipf(rank) * exp(sharpness * <theta, v>).
struct SyntheticOptions {
  std::size_t supers = 3;
  std::size_t leaves_per_super = 2;
  std::size_t docs_per_leaf = 200;
  std::size_t words_per_leaf = 30;
  std::size_t words_per_super = 20;
  std::size_t background_words = 100;
  std::size_t keywords_per_leaf = 3;
  std::size_t min_length = 40;
  std::size_t max_length = 80;
  double leaf_share = 0.6;   // tokens from leaf vocabularies
  double super_share = 0.2;  // tokens from parent vocabularies; the rest is background
  double word_kappa = 40.0;
  double doc_kappa = 20.0;
  double sharpness = 12.0;
  /// Extra documents, spread over the parents in turn, whose tokens come from
  /// all children of their parent alike; labeled with the parent.
  std::size_t general_documents = 0;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  std::vector<RawRecord> records;
  std::string taxonomy_json;      // keyword supervision on the leaves
  std::vector<char> general;      // per record
};

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options);

}  // namespace weakhier
