#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "weakhier/checkpoint.hpp"
#include "weakhier/config.hpp"
#include "weakhier/eval.hpp"
#include "weakhier/language_model.hpp"

namespace weakhier {

/// All training inputs derived from a corpus and a taxonomy, held in memory.
struct PreparedData {
  Corpus corpus;
  Taxonomy taxonomy;  // supervision propagated
  EmbeddingTable table;
  NgramModel lm;
  std::vector<ClassKeywordSet> keywords;
  std::vector<std::optional<MovMFMixture>> mixtures;
  RowMatrix encodings;

  TrainingInputs inputs() const { return {taxonomy, table, lm, mixtures, keywords}; }
};

/// Skip-gram (or the configured pretrained file) projected onto the sphere.
EmbeddingTable build_embeddings(const Corpus& corpus, const Config& config);

/// Tokenize, embed, retrieve keywords, fit class mixtures, train the language
/// model and encode every document.
PreparedData prepare(const std::vector<RawRecord>& records, const Taxonomy& taxonomy, const Config& config);

double mean_document_length(const Corpus& corpus);
RowMatrix encode_corpus(const Corpus& corpus, const EmbeddingTable& table, bool parallel = false);

struct AssignmentRecord {
  std::string id;
  std::string label;
  int level = 0;
  bool blocked = false;

  bool operator==(const AssignmentRecord&) const = default;
};

std::vector<AssignmentRecord> to_records(const Taxonomy& taxonomy, const std::vector<std::string>& ids,
                                         const std::vector<ClassAssignment>& assignments);
/// Line-delimited {id, class, level, blocked}.
void write_assignments(const std::filesystem::path& path, const std::vector<AssignmentRecord>& records);
std::vector<AssignmentRecord> read_assignments(const std::filesystem::path& path);

/// Classifies raw texts with a saved model.
std::vector<AssignmentRecord> predict_records(const ModelCheckpoint& checkpoint, const std::vector<RawRecord>& records,
                                              const Config& config);

enum class Stage { kIngest, kEmbed, kFitMovMF, kGenerate, kPretrain, kSelfTrain, kPredict, kEval, kAblate };
std::string stage_name(Stage stage);

enum class StageOutcome { kRan, kSkipped };

/// A resumable run directory. Each stage reads earlier outputs from its own
/// subdirectory and writes its own; manifest.json records the config hash,
/// seed and output digests per stage. One instance per directory (lock file).
class Workspace {
 public:
  Workspace(std::filesystem::path root, Config config, bool force = false);
  ~Workspace();
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  /// Config stored by the last run in `root`, if any.
  static std::optional<Config> stored_config(const std::filesystem::path& root);

  StageOutcome ingest(const std::filesystem::path& corpus, const std::filesystem::path& taxonomy);
  StageOutcome embed();
  StageOutcome fit_movmf();
  StageOutcome generate();
  StageOutcome pretrain();
  StageOutcome selftrain();
  StageOutcome predict();
  StageOutcome eval(bool leaves_only = false);
  StageOutcome ablate(const std::vector<AblationMode>& modes);
  /// ingest through eval in order; finished stages are skipped.
  void pipeline(const std::filesystem::path& corpus, const std::filesystem::path& taxonomy);

  std::filesystem::path dir(Stage stage) const { return root_ / stage_name(stage); }
  const std::filesystem::path& root() const { return root_; }
  const nlohmann::json& manifest() const { return manifest_; }
  const Config& config() const { return config_; }

  Corpus load_corpus() const;
  Taxonomy load_taxonomy_snapshot() const;  // propagated, from fit-movmf
  EmbeddingTable load_table() const;

 private:
  bool begin(Stage stage, const nlohmann::json& inputs);
  void finish(Stage stage, const nlohmann::json& inputs, const std::vector<std::string>& outputs);
  void require(Stage stage, Stage needed) const;
  void save_manifest() const;

  std::filesystem::path root_;
  Config config_;
  bool force_;
  nlohmann::json manifest_;
  std::FILE* lock_ = nullptr;
};

/// Digest of a file, or of every file under a directory in path order.
std::string digest(const std::filesystem::path& path);

}  // namespace weakhier
