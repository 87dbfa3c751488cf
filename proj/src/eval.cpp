#include "weakhier/eval.hpp"

#include <fstream>
#include <unordered_set>

#include "weakhier/error.hpp"

namespace weakhier {

namespace {

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

double ratio(std::size_t a, std::size_t b) { return b ? double(a) / double(b) : 0.0; }

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json classes_json = nlohmann::json::array();
  for (const auto& c : classes)
    classes_json.push_back({{"class", c.id},
                            {"support", c.support},
                            {"tp", c.tp},
                            {"fp", c.fp},
                            {"fn", c.fn},
                            {"precision", c.precision},
                            {"recall", c.recall},
                            {"f1", c.f1}});
  return {{"micro_f1", micro_f1},
          {"macro_f1", macro_f1},
          {"level_accuracy", level_accuracy},
          {"classes", classes_json},
          {"documents", documents},
          {"blocked", blocked},
          {"metadata",
           {{"mode", mode}, {"seed", seed}, {"config_hash", config_hash}, {"self_train_rounds", self_train_rounds}}}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.micro_f1 = j.at("micro_f1").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.level_accuracy = j.at("level_accuracy").get<std::vector<double>>();
    for (const auto& c : j.at("classes"))
      r.classes.push_back({c.at("class").get<std::string>(), c.at("support").get<std::size_t>(),
                           c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>(),
                           c.at("precision").get<double>(), c.at("recall").get<double>(), c.at("f1").get<double>()});
    r.documents = j.at("documents").get<std::size_t>();
    r.blocked = j.at("blocked").get<std::size_t>();
    const auto& m = j.at("metadata");
    r.mode = m.at("mode").get<std::string>();
    r.seed = m.at("seed").get<std::uint64_t>();
    r.config_hash = m.at("config_hash").get<std::string>();
    r.self_train_rounds = m.at("self_train_rounds").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("eval report: ") + e.what());
  }
}

EvalReport score(const Taxonomy& taxonomy, const std::vector<PredictedLabel>& predicted,
                 const std::unordered_map<std::string, std::string>& gold, const ScoreOptions& options) {
  const std::size_t k = taxonomy.size();
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0), support(k, 0);
  std::vector<std::size_t> level_total(std::size_t(taxonomy.max_level()) + 1, 0), level_ok = level_total;
  std::unordered_set<std::string> seen;
  EvalReport report;

  const auto scored_class = [&](NodeIndex c) { return !options.leaves_only || taxonomy.node(c).is_leaf(); };
  for (const auto& p : predicted) {
    const auto g = gold.find(p.document);
    if (g == gold.end()) throw ValidationError("prediction for unknown document '" + p.document + "'");
    if (!seen.insert(p.document).second) throw ValidationError("two predictions for document '" + p.document + "'");
    const NodeIndex gi = taxonomy.index_of(g->second);
    const NodeIndex pi = taxonomy.index_of(p.label);
    if (!scored_class(gi)) continue;
    ++report.documents;
    report.blocked += p.blocked;
    ++support[gi];
    if (gi == pi) {
      ++tp[gi];
    } else {
      ++fn[gi];
      if (scored_class(pi)) ++fp[pi];
    }
    const auto& gn = taxonomy.node(gi);
    for (int l = 1; l <= gn.level; ++l) {
      ++level_total[std::size_t(l)];
      level_ok[std::size_t(l)] += taxonomy.node(pi).level >= l &&
                                  taxonomy.ancestor_at_level(pi, l) == taxonomy.ancestor_at_level(gi, l);
    }
  }
  for (const auto& [doc, label] : gold)
    if (!seen.contains(doc) && scored_class(taxonomy.index_of(label)))
      throw ValidationError("no prediction for gold document '" + doc + "'");

  std::size_t sum_tp = 0, sum_fp = 0, sum_fn = 0, with_support = 0;
  double macro = 0.0;
  for (NodeIndex c = 0; c < k; ++c) {
    if (!scored_class(c) || (support[c] == 0 && fp[c] == 0)) continue;
    ClassScores s{taxonomy.node(c).id, support[c], tp[c], fp[c], fn[c], 0.0, 0.0, 0.0};
    s.precision = ratio(tp[c], tp[c] + fp[c]);
    s.recall = ratio(tp[c], tp[c] + fn[c]);
    s.f1 = f1_of(s.precision, s.recall);
    if (support[c] > 0) {
      macro += s.f1;
      ++with_support;
    }
    sum_tp += tp[c];
    sum_fp += fp[c];
    sum_fn += fn[c];
    report.classes.push_back(std::move(s));
  }
  report.micro_f1 = f1_of(ratio(sum_tp, sum_tp + sum_fp), ratio(sum_tp, sum_tp + sum_fn));
  report.macro_f1 = with_support ? macro / double(with_support) : 0.0;
  for (std::size_t l = 1; l < level_total.size(); ++l) report.level_accuracy.push_back(ratio(level_ok[l], level_total[l]));
  return report;
}

std::unordered_map<std::string, std::string> gold_labels(const Corpus& corpus) {
  std::unordered_map<std::string, std::string> gold;
  for (const auto& d : corpus.documents)
    if (d.gold_label) gold.emplace(d.id, *d.gold_label);
  return gold;
}

std::vector<PredictedLabel> to_labels(const Taxonomy& taxonomy, const Corpus& corpus,
                                      const std::vector<ClassAssignment>& assignments) {
  std::vector<PredictedLabel> out;
  out.reserve(assignments.size());
  for (const auto& a : assignments)
    out.push_back({corpus.documents.at(a.document).id, taxonomy.node(a.node).id, a.blocked});
  return out;
}

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::kFull: return "full";
    case AblationMode::kNoGlobal: return "no_global";
    case AblationMode::kNoVmf: return "no_vmf";
    case AblationMode::kNoSelfTrain: return "no_selftrain";
  }
  return "full";
}

AblationMode parse_ablation_mode(std::string_view name) {
  for (auto m : {AblationMode::kFull, AblationMode::kNoGlobal, AblationMode::kNoVmf, AblationMode::kNoSelfTrain})
    if (to_string(m) == name) return m;
  throw ValidationError("unknown ablation mode '" + std::string(name) +
                        "' (expected full, no_global, no_vmf or no_selftrain)");
}

CurveRecorder::CurveRecorder(const Taxonomy& taxonomy, std::vector<std::optional<NodeIndex>> gold)
    : taxonomy_(&taxonomy), gold_(std::move(gold)) {}

RoundObserver CurveRecorder::observer() {
  return [this](const RoundStats& s) { record(s); };
}

void CurveRecorder::record(const RoundStats& s) {
  const std::string suffix = "_level" + std::to_string(s.level);
  series_["entropy" + suffix].push_back(s.mean_entropy);
  series_["would_block" + suffix].push_back(double(s.would_block));
  series_["loss" + suffix].push_back(s.loss);
  if (s.changed_fraction) series_["changed" + suffix].push_back(*s.changed_fraction);
  if (gold_.empty() || s.documents.size() != s.assignment.size()) return;
  std::size_t total = 0, ok = 0;
  for (std::size_t r = 0; r < s.documents.size(); ++r) {
    const auto& g = gold_.at(s.documents[r]);
    if (!g || taxonomy_->node(*g).level < s.level) continue;
    ++total;
    const NodeIndex a = s.assignment[r];
    ok += taxonomy_->node(a).level >= s.level &&
          taxonomy_->ancestor_at_level(a, s.level) == taxonomy_->ancestor_at_level(*g, s.level);
  }
  if (total) series_["accuracy" + suffix].push_back(double(ok) / double(total));
}

void emit_curves(const std::map<std::string, std::vector<double>>& series, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, values] : series) {
    std::ofstream out(dir / (name + ".tsv"));
    if (!out) throw ParseError("cannot write curve " + (dir / (name + ".tsv")).string());
    out.precision(17);
    out << "iteration\tvalue\n";
    for (std::size_t i = 0; i < values.size(); ++i) out << i << '\t' << values[i] << '\n';
  }
}

AblationRun run_ablation(AblationMode mode, const TrainingInputs& inputs, const Corpus& corpus,
                         const RowMatrix& encodings, TrainOptions options) {
  switch (mode) {
    case AblationMode::kFull: break;
    case AblationMode::kNoGlobal: options.global = false; break;
    case AblationMode::kNoVmf: options.pseudo.begin_mode = BeginWordMode::kKeywords; break;
    case AblationMode::kNoSelfTrain: options.self_train = false; break;
  }
  // Gold labels feed only the curve recorder, after predictions are formed.
  std::vector<std::optional<NodeIndex>> gold(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (const auto& g = corpus.documents[i].gold_label) gold[i] = inputs.taxonomy.find(*g);
  CurveRecorder recorder(inputs.taxonomy, std::move(gold));
  auto trained = train_all(inputs, encodings, options, recorder.observer());

  AblationRun run;
  run.assignments = std::move(trained.result.assignments);
  std::vector<PredictedLabel> labeled;
  for (const auto& p : to_labels(inputs.taxonomy, corpus, run.assignments))
    if (corpus.documents[corpus.index_of(p.document).value()].gold_label) labeled.push_back(p);
  run.report = score(inputs.taxonomy, labeled, gold_labels(corpus));
  run.report.mode = to_string(mode);
  run.report.seed = options.seed;
  run.report.self_train_rounds = trained.result.total_rounds;
  run.curves = recorder.series();
  return run;
}

}  // namespace weakhier
