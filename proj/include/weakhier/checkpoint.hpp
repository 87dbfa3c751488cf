#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "weakhier/config.hpp"
#include "weakhier/embedding.hpp"
#include "weakhier/hierarchy.hpp"
#include "weakhier/keywords.hpp"
#include "weakhier/vmf.hpp"

namespace weakhier {

/// Everything needed to classify new text: the propagated taxonomy, class
/// mixtures, local classifiers, the vocabulary and embeddings they were built
/// on, and the config that produced them.
struct ModelCheckpoint {
  HierarchicalModel model;
  std::vector<std::optional<MovMFMixture>> mixtures;
  Vocabulary vocabulary;
  EmbeddingTable table;
  Config config;
};

/// Directory layout:
///   taxonomy.json         tree with internal supervision
///   mixtures.json         {class id: mixture}
///   classifiers/NNN_<id>.json  one blob per class with >= 2 children
///   vocabulary.tsv, embeddings.txt, config.txt
void save_checkpoint(const std::filesystem::path& dir, const ModelCheckpoint& checkpoint);
ModelCheckpoint load_checkpoint(const std::filesystem::path& dir);

nlohmann::json mixtures_to_json(const Taxonomy& taxonomy, const std::vector<std::optional<MovMFMixture>>& mixtures);
std::vector<std::optional<MovMFMixture>> mixtures_from_json(const Taxonomy& taxonomy, const nlohmann::json& j);

/// {class id: [words]}; vectors are looked up again in `table`.
nlohmann::json keywords_to_json(const Taxonomy& taxonomy, const std::vector<ClassKeywordSet>& keywords);
std::vector<ClassKeywordSet> keywords_from_json(const Taxonomy& taxonomy, const nlohmann::json& j,
                                                const EmbeddingTable& table);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace weakhier
