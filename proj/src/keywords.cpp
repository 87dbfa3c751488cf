#include "weakhier/keywords.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "weakhier/error.hpp"

namespace weakhier {

namespace {

struct Candidates {
  std::vector<std::string> seeds;   // always kept
  std::vector<std::string> ranked;  // expansion order
};

Candidates keyword_candidates(const ClassNode& node, const EmbeddingTable& table, const Vocabulary& vocab,
                              std::size_t max_n) {
  Candidates c;
  std::vector<double> query(table.dim(), 0.0);
  for (const auto& w : node.supervision.items) {
    const auto id = vocab.find(w);
    if (!id || *id == kOovToken) {
      spdlog::warn("class '{}': seed keyword '{}' is not in the vocabulary; ignored", node.id, w);
      continue;
    }
    c.seeds.push_back(w);
    const auto v = table[*id];
    for (std::size_t k = 0; k < query.size(); ++k) query[k] += v[k];
  }
  if (c.seeds.empty())
    throw ValidationError("class '" + node.id + "': none of its seed keywords occur in the corpus vocabulary");
  normalize_in_place(query);
  const std::unordered_set<std::string> exclude(c.seeds.begin(), c.seeds.end());
  for (auto& n : nearest_words(table, query, max_n, exclude)) c.ranked.push_back(std::move(n.word));
  return c;
}

Candidates document_candidates(const ClassNode& node, const Corpus& corpus, std::size_t max_n) {
  std::vector<const Document*> docs;
  for (const auto& id : node.supervision.items) {
    const auto idx = corpus.index_of(id);
    if (!idx) throw ValidationError("class '" + node.id + "': labeled document '" + id + "' not in corpus");
    docs.push_back(&corpus.documents[*idx]);
  }
  return {{}, tfidf_keywords(docs, corpus.vocabulary, max_n)};
}

std::vector<std::string> take(const Candidates& c, std::size_t n) {
  std::vector<std::string> out = c.seeds;
  for (std::size_t i = 0; i < n && i < c.ranked.size(); ++i) out.push_back(c.ranked[i]);
  return out;
}

bool disjoint(const std::vector<NodeIndex>& group, const std::vector<Candidates>& cand, std::size_t n) {
  std::unordered_map<std::string, NodeIndex> owner;
  for (NodeIndex node : group)
    for (const auto& w : take(cand[node], n)) {
      auto [it, inserted] = owner.emplace(w, node);
      if (!inserted && it->second != node) return false;
    }
  return true;
}

}  // namespace

std::vector<ClassKeywordSet> retrieve_class_keywords(const Taxonomy& propagated, const EmbeddingTable& table,
                                                     const Corpus& corpus, const KeywordOptions& options) {
  const auto mode = propagated.mode();
  if (mode == SupervisionMode::kKeywords && !table.normalized)
    throw ValidationError("retrieve_class_keywords: embeddings must be normalized");

  std::vector<Candidates> cand(propagated.size());
  for (NodeIndex i = 1; i < propagated.size(); ++i) {
    const auto& node = propagated.node(i);
    if (node.supervision.empty()) throw ValidationError("class '" + node.id + "' has no supervision; propagate first");
    cand[i] = mode == SupervisionMode::kKeywords ? keyword_candidates(node, table, corpus.vocabulary, options.max_n)
                                                 : document_candidates(node, corpus, options.max_n);
  }

  std::vector<std::vector<NodeIndex>> groups;
  if (options.scope == KeywordScope::kSiblings) {
    for (NodeIndex i = 0; i < propagated.size(); ++i)
      if (!propagated.node(i).is_leaf()) groups.push_back(propagated.node(i).children);
  } else {
    for (int level = 1; level <= propagated.max_level(); ++level) groups.push_back(propagated.nodes_at_level(level));
  }

  // A class sits in exactly one group under either scope.
  std::vector<std::size_t> chosen_n(propagated.size(), 0);
  const std::size_t min_n = mode == SupervisionMode::kKeywords ? 0 : 1;
  for (const auto& group : groups) {
    std::optional<std::size_t> found;
    for (std::size_t n = options.max_n + 1; n-- > min_n;) {
      if (disjoint(group, cand, n)) {
        found = n;
        break;
      }
    }
    if (!found) {
      std::string names;
      for (NodeIndex g : group) names += (names.empty() ? "" : ", ") + propagated.node(g).id;
      throw ValidationError("keyword sets of classes {" + names +
                            "} overlap even without expansion; revise the seed supervision");
    }
    for (NodeIndex g : group) chosen_n[g] = *found;
  }

  std::vector<ClassKeywordSet> out(propagated.size());
  for (NodeIndex i = 1; i < propagated.size(); ++i) {
    auto& set = out[i];
    set.node = i;
    set.keywords = take(cand[i], chosen_n[i]);
    set.vectors = RowMatrix(set.keywords.size(), table.dim());
    for (std::size_t r = 0; r < set.keywords.size(); ++r) {
      const auto id = corpus.vocabulary.lookup(set.keywords[r]);
      auto v = table[id];
      std::copy(v.begin(), v.end(), set.vectors.row(r).begin());
      normalize_in_place(set.vectors.row(r));
    }
  }
  out[0].node = 0;
  return out;
}

std::vector<std::optional<MovMFMixture>> fit_class_mixtures(const Taxonomy& taxonomy,
                                                            const std::vector<ClassKeywordSet>& keywords,
                                                            const EmOptions& options) {
  std::vector<std::optional<MovMFMixture>> out(taxonomy.size());
  for (NodeIndex i = 1; i < taxonomy.size(); ++i) {
    const auto& node = taxonomy.node(i);
    const std::size_t m = node.is_leaf() ? 1 : node.children.size();
    const auto& points = keywords.at(i).vectors;
    if (points.rows < m)
      throw ValidationError("class '" + node.id + "' has " + std::to_string(points.rows) + " keywords but needs " +
                            std::to_string(m) + " mixture components");
    EmOptions opt = options;
    opt.seed = options.seed + 1000003ULL * i;
    out[i] = fit_em(points, m, opt).mixture;
  }
  return out;
}

}  // namespace weakhier
