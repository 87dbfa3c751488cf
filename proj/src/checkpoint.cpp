#include "weakhier/checkpoint.hpp"

#include <fstream>
#include <unordered_map>

#include <fmt/format.h>

#include "weakhier/error.hpp"

namespace weakhier {

namespace fs = std::filesystem;

namespace {

std::string blob_name(const Taxonomy& t, NodeIndex i) {
  std::string safe = t.node(i).id;
  for (char& c : safe)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return fmt::format("{:03}_{}.json", i, safe);
}

}  // namespace

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json mixtures_to_json(const Taxonomy& taxonomy, const std::vector<std::optional<MovMFMixture>>& mixtures) {
  nlohmann::json j = nlohmann::json::object();
  for (NodeIndex i = 0; i < mixtures.size(); ++i)
    if (mixtures[i]) j[taxonomy.node(i).id] = mixture_to_json(*mixtures[i]);
  return j;
}

std::vector<std::optional<MovMFMixture>> mixtures_from_json(const Taxonomy& taxonomy, const nlohmann::json& j) {
  std::vector<std::optional<MovMFMixture>> out(taxonomy.size());
  if (!j.is_object()) throw ParseError("mixtures: expected an object keyed by class id");
  for (const auto& [id, value] : j.items()) {
    const auto node = taxonomy.find(id);
    if (!node) throw ParseError("mixtures: unknown class '" + id + "'");
    out[*node] = mixture_from_json(value);
  }
  return out;
}

nlohmann::json keywords_to_json(const Taxonomy& taxonomy, const std::vector<ClassKeywordSet>& keywords) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : keywords)
    if (k.node != taxonomy.root()) j[taxonomy.node(k.node).id] = k.keywords;
  return j;
}

std::vector<ClassKeywordSet> keywords_from_json(const Taxonomy& taxonomy, const nlohmann::json& j,
                                                const EmbeddingTable& table) {
  std::unordered_map<std::string_view, TokenId> index;
  for (std::size_t w = 0; w < table.words.size(); ++w) index.emplace(table.words[w], TokenId(w));
  std::vector<ClassKeywordSet> out(taxonomy.size());
  for (NodeIndex i = 0; i < taxonomy.size(); ++i) out[i].node = i;
  try {
    for (const auto& [id, value] : j.items()) {
      const auto node = taxonomy.find(id);
      if (!node) throw ParseError("keywords: unknown class '" + id + "'");
      auto& set = out[*node];
      set.keywords = value.get<std::vector<std::string>>();
      set.vectors = RowMatrix(set.keywords.size(), table.dim());
      for (std::size_t r = 0; r < set.keywords.size(); ++r) {
        const auto it = index.find(set.keywords[r]);
        if (it == index.end()) throw ParseError("keywords: '" + set.keywords[r] + "' has no embedding");
        const auto v = table[it->second];
        std::copy(v.begin(), v.end(), set.vectors.row(r).begin());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("keywords: ") + e.what());
  }
  return out;
}

void save_checkpoint(const fs::path& dir, const ModelCheckpoint& c) {
  const auto& t = c.model.taxonomy;
  fs::create_directories(dir / "classifiers");
  {
    std::ofstream out(dir / "taxonomy.json");
    if (!out) throw ParseError("cannot write " + (dir / "taxonomy.json").string());
    out << taxonomy_to_json(t, true) << '\n';
  }
  write_json(dir / "mixtures.json", mixtures_to_json(t, c.mixtures));
  for (NodeIndex i = 0; i < c.model.classifiers.size(); ++i)
    if (c.model.classifiers[i]) write_json(dir / "classifiers" / blob_name(t, i), c.model.classifiers[i]->to_json());
  save_vocabulary(dir / "vocabulary.tsv", c.vocabulary);
  save_embeddings(dir / "embeddings.txt", c.table);
  save_config(dir / "config.txt", c.config);
}

ModelCheckpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError("model directory " + dir.string() + " does not exist");
  HierarchicalModel model{load_taxonomy(dir / "taxonomy.json"), {}};
  const auto& t = model.taxonomy;
  auto mixtures = mixtures_from_json(t, read_json(dir / "mixtures.json"));
  model.classifiers.resize(t.size());
  for (NodeIndex i : t.classifier_nodes()) {
    auto clf = LocalClassifier::from_json(read_json(dir / "classifiers" / blob_name(t, i)));
    if (clf.owner() != i || clf.num_children() != t.node(i).children.size())
      throw ParseError("classifier blob for '" + t.node(i).id + "' does not match the taxonomy");
    model.classifiers[i] = std::move(clf);
  }
  ModelCheckpoint c{std::move(model), std::move(mixtures), {}, {}, {}};
  c.vocabulary = load_vocabulary(dir / "vocabulary.tsv");
  c.table = load_embeddings(dir / "embeddings.txt");
  c.table.normalized = true;
  c.config = load_config(dir / "config.txt");
  return c;
}

}  // namespace weakhier
