#pragma once

#include <optional>
#include <string>
#include <vector>

#include "weakhier/embedding.hpp"
#include "weakhier/matrix.hpp"
#include "weakhier/taxonomy.hpp"
#include "weakhier/text.hpp"
#include "weakhier/vmf.hpp"

namespace weakhier {

struct ClassKeywordSet {
  NodeIndex node = 0;
  std::vector<std::string> keywords;
  RowMatrix vectors;  // one unit row per keyword
};

/// Which classes must end up with disjoint keyword sets.
enum class KeywordScope {
  kSiblings,  // children of the same parent
  kLevel,     // every class at the same depth
};

struct KeywordOptions {
  std::size_t max_n = 100;
  KeywordScope scope = KeywordScope::kSiblings;
};

/// Expands each non-root class's supervision into a keyword set. Keyword mode:
/// seeds plus the n nearest words to their mean direction; document mode: the
/// top-n tf-idf words of the labeled documents. n is the largest value (<= max_n)
/// keeping every compared group disjoint. Indexed by NodeIndex; the root entry
/// is empty.
std::vector<ClassKeywordSet> retrieve_class_keywords(const Taxonomy& propagated, const EmbeddingTable& table,
                                                     const Corpus& corpus, const KeywordOptions& options = {});

/// One movMF per non-root class: a single vMF for leaves, one component per
/// child for internal classes.
std::vector<std::optional<MovMFMixture>> fit_class_mixtures(const Taxonomy& taxonomy,
                                                            const std::vector<ClassKeywordSet>& keywords,
                                                            const EmOptions& options = {});

}  // namespace weakhier
