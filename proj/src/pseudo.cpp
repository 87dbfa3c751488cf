#include "weakhier/pseudo.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "weakhier/error.hpp"
#include "weakhier/kernels.hpp"

namespace weakhier {

PseudoLabel make_pseudo_label(std::size_t source, std::size_t m, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("pseudo label alpha must be in [0, 1]");
  if (m < 2) throw ValidationError("pseudo label needs m >= 2");
  if (source >= m) throw ValidationError("pseudo label source index out of range");
  PseudoLabel label(m, alpha / double(m));
  label[source] = (1.0 - alpha) + alpha / double(m);
  return label;
}

namespace {

TokenId begin_word(const BeginWordSource& begin, const EmbeddingTable& table, Rng& rng) {
  if (begin.mixture) {
    const auto v = sample(*begin.mixture, rng);
    const auto nn = nearest_words(table, v, 1);
    if (nn.empty()) throw ValidationError("generate_pseudo_document: empty embedding table");
    return nn.front().id;
  }
  if (begin.keywords && !begin.keywords->empty()) {
    const auto& kw = *begin.keywords;
    const auto& w = kw[std::uniform_int_distribution<std::size_t>(0, kw.size() - 1)(rng)];
    for (std::size_t i = 0; i < table.words.size(); ++i)
      if (table.words[i] == w) return static_cast<TokenId>(i);
    throw ValidationError("generate_pseudo_document: keyword '" + w + "' has no embedding row");
  }
  throw ValidationError("generate_pseudo_document: no begin-word source");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{std::uint32_t(base), std::uint32_t(base >> 32), std::uint32_t(a), std::uint32_t(b), std::uint32_t(c)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (std::uint64_t(out[0]) << 32) | out[1];
}

}  // namespace

PseudoDocument generate_pseudo_document(NodeIndex source, const BeginWordSource& begin, const LanguageModel& lm,
                                        const EmbeddingTable& table, const GenerationOptions& options,
                                        std::uint64_t seed) {
  if (options.sequence_cap == 0) throw ValidationError("sequence cap must be >= 1");
  Rng rng(seed);
  PseudoDocument doc{source, {}, seed};
  doc.tokens.reserve(options.length);
  std::vector<double> scratch;
  const std::size_t ctx_len = lm.order() > 0 ? lm.order() - 1 : 0;
  while (doc.tokens.size() < options.length) {
    const std::size_t start = doc.tokens.size();
    const std::size_t end = std::min(options.length, start + options.sequence_cap);
    doc.tokens.push_back(begin_word(begin, table, rng));
    while (doc.tokens.size() < end) {
      const std::size_t have = doc.tokens.size() - start;
      const std::size_t k = std::min(have, ctx_len);
      const std::span<const TokenId> ctx(doc.tokens.data() + doc.tokens.size() - k, k);
      doc.tokens.push_back(lm.sample_next(ctx, rng, scratch));
    }
  }
  return doc;
}

PseudoTrainingSet generate_training_set(const Taxonomy& taxonomy, NodeIndex node,
                                        const std::vector<std::optional<MovMFMixture>>& mixtures,
                                        const std::vector<ClassKeywordSet>& keywords, const LanguageModel& lm,
                                        const EmbeddingTable& table, const TrainingSetOptions& options) {
  const auto& children = taxonomy.node(node).children;
  const std::size_t m = children.size();
  if (m < 2) throw ValidationError("generate_training_set: class '" + taxonomy.node(node).id + "' has < 2 children");
  if (options.beta < 1) throw ValidationError("generate_training_set: beta must be >= 1");

  std::vector<BeginWordSource> sources(m);
  for (std::size_t c = 0; c < m; ++c) {
    const NodeIndex child = children[c];
    if (options.begin_mode == BeginWordMode::kMovMF) {
      if (child >= mixtures.size() || !mixtures[child])
        throw ValidationError("no fitted movMF for class '" + taxonomy.node(child).id + "'");
      sources[c].mixture = &*mixtures[child];
    } else {
      sources[c].keywords = &keywords.at(child).keywords;
    }
  }

  const std::size_t total = m * options.beta;
  PseudoTrainingSet set;
  set.documents.resize(total);
  set.labels.resize(total);
  set.child_index.resize(total);
  kernels::map_rows(options.parallel, total, [&](std::size_t i) {
    const std::size_t c = i / options.beta, j = i % options.beta;
    const auto seed = derive_seed(options.seed, node, c, j);
    set.documents[i] = generate_pseudo_document(children[c], sources[c], lm, table, options.generation, seed);
    set.labels[i] = make_pseudo_label(c, m, options.alpha);
    set.child_index[i] = c;
  });

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(options.seed, node, 0xffff, 0));
  std::shuffle(order.begin(), order.end(), rng);
  PseudoTrainingSet shuffled;
  for (std::size_t i : order) {
    shuffled.documents.push_back(std::move(set.documents[i]));
    shuffled.labels.push_back(std::move(set.labels[i]));
    shuffled.child_index.push_back(set.child_index[i]);
  }
  return shuffled;
}

void save_pseudo_documents(const std::filesystem::path& path, const Taxonomy& taxonomy,
                           const std::vector<PseudoDocument>& docs, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& d : docs) {
    std::vector<std::string> words;
    words.reserve(d.tokens.size());
    for (TokenId t : d.tokens) words.push_back(vocab.word(t));
    out << nlohmann::json{{"class", taxonomy.node(d.source).id}, {"tokens", words}, {"seed", d.seed}}.dump() << '\n';
  }
}

std::vector<PseudoDocument> load_pseudo_documents(const std::filesystem::path& path, const Taxonomy& taxonomy,
                                                  const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<PseudoDocument> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PseudoDocument d;
      d.source = taxonomy.index_of(j.at("class").get<std::string>());
      d.seed = j.at("seed").get<std::uint64_t>();
      for (const auto& w : j.at("tokens")) d.tokens.push_back(vocab.lookup(w.get<std::string>()));
      docs.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return docs;
}

}  // namespace weakhier
