#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "weakhier/hierarchy.hpp"

namespace weakhier {

struct ClassScores {
  std::string id;
  std::size_t support = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;

  bool operator==(const ClassScores&) const = default;
};

struct EvalReport {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> level_accuracy;  // index 0 is level 1
  std::vector<ClassScores> classes;    // taxonomy order, scored classes only
  std::size_t documents = 0;
  std::size_t blocked = 0;
  std::string mode = "full";
  std::uint64_t seed = 0;
  std::string config_hash;
  std::size_t self_train_rounds = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  bool operator==(const EvalReport&) const = default;
};

struct PredictedLabel {
  std::string document;
  std::string label;
  bool blocked = false;
};

struct ScoreOptions {
  bool leaves_only = false;  // score only leaf-gold documents over leaf classes
};

/// Single-label F1 over taxonomy classes: each document contributes its most
/// specific predicted and gold class. Macro-F1 averages classes with gold support.
/// Throws on predictions for unknown documents or gold documents without one.
EvalReport score(const Taxonomy& taxonomy, const std::vector<PredictedLabel>& predicted,
                 const std::unordered_map<std::string, std::string>& gold, const ScoreOptions& options = {});

/// Gold labels of the documents that carry one.
std::unordered_map<std::string, std::string> gold_labels(const Corpus& corpus);

std::vector<PredictedLabel> to_labels(const Taxonomy& taxonomy, const Corpus& corpus,
                                      const std::vector<ClassAssignment>& assignments);

enum class AblationMode { kFull, kNoGlobal, kNoVmf, kNoSelfTrain };
std::string to_string(AblationMode mode);
AblationMode parse_ablation_mode(std::string_view name);

/// Per-iteration self-training series, keyed "<metric>_level<k>".
/// Accuracy series need gold labels and are filled only when given them.
class CurveRecorder {
 public:
  CurveRecorder(const Taxonomy& taxonomy, std::vector<std::optional<NodeIndex>> gold = {});
  RoundObserver observer();
  const std::map<std::string, std::vector<double>>& series() const { return series_; }

 private:
  void record(const RoundStats& stats);

  const Taxonomy* taxonomy_;
  std::vector<std::optional<NodeIndex>> gold_;
  std::map<std::string, std::vector<double>> series_;
};

/// Writes <dir>/<series>.tsv with "iteration<TAB>value" rows.
void emit_curves(const std::map<std::string, std::vector<double>>& series, const std::filesystem::path& dir);

struct AblationRun {
  EvalReport report;
  std::vector<ClassAssignment> assignments;
  std::map<std::string, std::vector<double>> curves;
};

/// The full method with exactly one component switched off, scored against the
/// corpus gold labels after training.
AblationRun run_ablation(AblationMode mode, const TrainingInputs& inputs, const Corpus& corpus,
                         const RowMatrix& encodings, TrainOptions options);

}  // namespace weakhier
