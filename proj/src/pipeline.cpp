#include "weakhier/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "weakhier/error.hpp"
#include "weakhier/pseudo.hpp"

namespace weakhier {

namespace fs = std::filesystem;

EmbeddingTable build_embeddings(const Corpus& corpus, const Config& config) {
  EmbeddingTable table;
  if (!config.pretrained_embeddings.empty()) {
    spdlog::info("loading embeddings from {}", config.pretrained_embeddings);
    table = align_to_vocabulary(load_embeddings(config.pretrained_embeddings), corpus.vocabulary, config.seed);
  } else {
    table = train_skipgram(corpus, config.skipgram());
  }
  return normalize_to_sphere(std::move(table), config.seed);
}

double mean_document_length(const Corpus& corpus) {
  if (corpus.size() == 0) return 0.0;
  std::size_t total = 0;
  for (const auto& d : corpus.documents) total += d.tokens.size();
  return double(total) / double(corpus.size());
}

RowMatrix encode_corpus(const Corpus& corpus, const EmbeddingTable& table, bool parallel) {
  std::vector<std::span<const TokenId>> docs;
  docs.reserve(corpus.size());
  for (const auto& d : corpus.documents) docs.emplace_back(d.tokens);
  return encode_documents(docs, table, parallel);
}

PreparedData prepare(const std::vector<RawRecord>& records, const Taxonomy& taxonomy, const Config& config) {
  config.validate();
  auto corpus = build_corpus(records, config.tokenizer());
  auto propagated = propagate_supervision(taxonomy);
  auto table = build_embeddings(corpus, config);
  auto lm = NgramModel::train(corpus, config.lm_order, config.lm_discount);
  auto keywords = retrieve_class_keywords(propagated, table, corpus, config.keywords());
  auto mixtures = fit_class_mixtures(propagated, keywords, config.em());
  auto encodings = encode_corpus(corpus, table, config.threads > 1);
  return {std::move(corpus), std::move(propagated), std::move(table), std::move(lm),
          std::move(keywords), std::move(mixtures), std::move(encodings)};
}

std::vector<AssignmentRecord> to_records(const Taxonomy& taxonomy, const std::vector<std::string>& ids,
                                         const std::vector<ClassAssignment>& assignments) {
  std::vector<AssignmentRecord> out;
  out.reserve(assignments.size());
  for (const auto& a : assignments) out.push_back({ids.at(a.document), taxonomy.node(a.node).id, a.level, a.blocked});
  return out;
}

void write_assignments(const fs::path& path, const std::vector<AssignmentRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& r : records)
    out << nlohmann::json{{"id", r.id}, {"class", r.label}, {"level", r.level}, {"blocked", r.blocked}}.dump()
        << '\n';
}

std::vector<AssignmentRecord> read_assignments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<AssignmentRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("class").get<std::string>(), j.at("level").get<int>(),
                     j.at("blocked").get<bool>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<AssignmentRecord> predict_records(const ModelCheckpoint& checkpoint, const std::vector<RawRecord>& records,
                                              const Config& config) {
  config.validate();
  Corpus corpus;
  corpus.vocabulary = checkpoint.vocabulary;
  std::vector<std::string> ids;
  for (const auto& r : records) {
    corpus.documents.push_back({r.id, r.text, encode_text(r.text, checkpoint.vocabulary, config.tokenizer()), {}});
    ids.push_back(r.id);
  }
  const bool parallel = config.threads > 1;
  const auto enc = encode_corpus(corpus, checkpoint.table, parallel);
  const auto assigned = weakhier::predict(checkpoint.model, enc, config.gamma, config.mode == "global", parallel);
  return to_records(checkpoint.model.taxonomy, ids, assigned);
}

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::kIngest: return "ingest";
    case Stage::kEmbed: return "embed";
    case Stage::kFitMovMF: return "fit-movmf";
    case Stage::kGenerate: return "generate";
    case Stage::kPretrain: return "pretrain";
    case Stage::kSelfTrain: return "selftrain";
    case Stage::kPredict: return "predict";
    case Stage::kEval: return "eval";
    case Stage::kAblate: return "ablate";
  }
  return "unknown";
}

namespace {

constexpr Stage kAllStages[] = {Stage::kIngest,   Stage::kEmbed,     Stage::kFitMovMF,
                                Stage::kGenerate, Stage::kPretrain,  Stage::kSelfTrain,
                                Stage::kPredict,  Stage::kEval,      Stage::kAblate};

std::vector<Stage> prerequisites(Stage s) {
  switch (s) {
    case Stage::kIngest: return {};
    case Stage::kEmbed: return {Stage::kIngest};
    case Stage::kFitMovMF: return {Stage::kEmbed};
    case Stage::kGenerate: return {Stage::kFitMovMF};
    case Stage::kPretrain: return {Stage::kGenerate};
    case Stage::kSelfTrain: return {Stage::kPretrain};
    case Stage::kPredict: return {Stage::kSelfTrain};
    case Stage::kEval: return {Stage::kPredict};
    case Stage::kAblate: return {Stage::kFitMovMF};
  }
  return {};
}

bool depends_on(Stage s, Stage upstream) {
  for (Stage p : prerequisites(s))
    if (p == upstream || depends_on(p, upstream)) return true;
  return false;
}

std::string hex(std::size_t h) { return fmt::format("{:016x}", h); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string ablation_label(const Config& c) {
  std::vector<std::string> off;
  if (c.mode != "global") off.push_back(to_string(AblationMode::kNoGlobal));
  if (c.begin_words != "movmf") off.push_back(to_string(AblationMode::kNoVmf));
  if (!c.self_train) off.push_back(to_string(AblationMode::kNoSelfTrain));
  if (off.empty()) return to_string(AblationMode::kFull);
  return fmt::format("{}", fmt::join(off, "+"));
}

std::string pseudo_file(NodeIndex i) { return fmt::format("{:03}.jsonl", i); }

}  // namespace

std::string digest(const fs::path& path) {
  if (fs::is_regular_file(path)) return hex(std::hash<std::string>{}(read_file(path)));
  if (!fs::is_directory(path)) throw ParseError("cannot digest " + path.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, path).generic_string() + '\n' + digest(f) + '\n';
  return hex(std::hash<std::string>{}(all));
}

Workspace::Workspace(fs::path root, Config config, bool force)
    : root_(std::move(root)), config_(std::move(config)), force_(force) {
  config_.validate();
  fs::create_directories(root_);
  const auto lock = root_ / ".lock";
  lock_ = std::fopen(lock.c_str(), "wx");
  if (!lock_)
    throw WorkspaceError("workspace " + root_.string() + " is in use by another run (delete " + lock.string() +
                         " if that run is gone)");
  if (fs::exists(root_ / "manifest.json")) {
    manifest_ = read_json(root_ / "manifest.json");
  } else {
    manifest_ = {{"version", 1}, {"stages", nlohmann::json::object()}};
  }
}

Workspace::~Workspace() {
  if (lock_) {
    std::fclose(lock_);
    std::error_code ec;
    fs::remove(root_ / ".lock", ec);
  }
}

std::optional<Config> Workspace::stored_config(const fs::path& root) {
  if (!fs::exists(root / "config.txt")) return std::nullopt;
  return load_config(root / "config.txt");
}

void Workspace::save_manifest() const {
  write_json(root_ / "manifest.json", manifest_);
  save_config(root_ / "config.txt", config_);
}

void Workspace::require(Stage stage, Stage needed) const {
  if (!manifest_["stages"].contains(stage_name(needed)))
    throw WorkspaceError(fmt::format("stage '{}' needs the output of '{}'; run `weakhier {}` first", stage_name(stage),
                                     stage_name(needed), stage_name(needed)));
}

bool Workspace::begin(Stage stage, const nlohmann::json& inputs) {
  for (Stage p : prerequisites(stage)) require(stage, p);
  const auto hash = config_.hash();
  const auto name = stage_name(stage);
  if (manifest_.contains("config_hash") && manifest_["config_hash"] != hash && !force_)
    throw WorkspaceError(fmt::format(
        "workspace {} was built with config {}, the current config is {}; pass --force to rerun '{}' with it",
        root_.string(), manifest_["config_hash"].get<std::string>(), hash, name));

  auto& stages = manifest_["stages"];
  if (stages.contains(name)) {
    const auto& entry = stages[name];
    bool intact = entry["config_hash"] == hash && entry["inputs"] == inputs;
    if (intact)
      for (const auto& [file, d] : entry["outputs"].items())
        intact = intact && fs::exists(dir(stage) / file) && digest(dir(stage) / file) == d;
    if (intact) {
      spdlog::info("{}: up to date, skipping", name);
      return false;
    }
    if (!force_)
      throw WorkspaceError(fmt::format("stage '{}' already ran with different inputs or outputs; pass --force to rerun",
                                       name));
  }
  // Everything built on this stage's old output is stale.
  for (Stage s : kAllStages)
    if (depends_on(s, stage) && stages.contains(stage_name(s))) {
      spdlog::info("{}: invalidated by rerun of {}", stage_name(s), name);
      stages.erase(stage_name(s));
    }
  stages.erase(name);
  fs::remove_all(dir(stage));
  fs::create_directories(dir(stage));
  manifest_["config_hash"] = hash;
  manifest_["seed"] = config_.seed;
  spdlog::info("{}: running", name);
  return true;
}

void Workspace::finish(Stage stage, const nlohmann::json& inputs, const std::vector<std::string>& outputs) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& f : outputs) out[f] = digest(dir(stage) / f);
  manifest_["stages"][stage_name(stage)] = {
      {"config_hash", config_.hash()}, {"seed", config_.seed}, {"inputs", inputs}, {"outputs", out}};
  save_manifest();
}

Corpus Workspace::load_corpus() const {
  Corpus corpus;
  corpus.vocabulary = load_vocabulary(dir(Stage::kIngest) / "vocabulary.tsv");
  // The ingest-time tokenizer settings are stored next to the vocabulary.
  const auto tok = load_config(dir(Stage::kIngest) / "config.txt").tokenizer();
  for (auto& r : read_records(dir(Stage::kIngest) / "corpus.jsonl"))
    corpus.documents.push_back({r.id, r.text, encode_text(r.text, corpus.vocabulary, tok), r.label});
  return corpus;
}

Taxonomy Workspace::load_taxonomy_snapshot() const { return load_taxonomy(dir(Stage::kFitMovMF) / "taxonomy.json"); }

EmbeddingTable Workspace::load_table() const {
  auto table = load_embeddings(dir(Stage::kEmbed) / "embeddings.txt");
  table.normalized = true;
  return table;
}

StageOutcome Workspace::ingest(const fs::path& corpus, const fs::path& taxonomy) {
  const nlohmann::json inputs{{"corpus", digest(corpus)}, {"taxonomy", digest(taxonomy)}};
  if (!begin(Stage::kIngest, inputs)) return StageOutcome::kSkipped;
  const auto records = read_records(corpus);
  const auto built = build_corpus(records, config_.tokenizer());
  const auto tax = load_taxonomy(taxonomy);
  for (const auto& n : tax.nodes())
    if (n.supervision.mode == SupervisionMode::kDocuments)
      for (const auto& id : n.supervision.items)
        if (!built.index_of(id)) throw ValidationError("class '" + n.id + "' names unknown document '" + id + "'");
  const auto d = dir(Stage::kIngest);
  write_records(d / "corpus.jsonl", records);
  save_vocabulary(d / "vocabulary.tsv", built.vocabulary);
  save_taxonomy(d / "taxonomy.json", tax);
  save_config(d / "config.txt", config_);
  spdlog::info("ingest: {} documents, {} vocabulary entries, {} classes", built.size(), built.vocabulary.size(),
               tax.size());
  finish(Stage::kIngest, inputs, {"corpus.jsonl", "vocabulary.tsv", "taxonomy.json", "config.txt"});
  return StageOutcome::kRan;
}

StageOutcome Workspace::embed() {
  const nlohmann::json inputs = nlohmann::json::object();
  if (!begin(Stage::kEmbed, inputs)) return StageOutcome::kSkipped;
  const auto table = build_embeddings(load_corpus(), config_);
  save_embeddings(dir(Stage::kEmbed) / "embeddings.txt", table);
  finish(Stage::kEmbed, inputs, {"embeddings.txt"});
  return StageOutcome::kRan;
}

StageOutcome Workspace::fit_movmf() {
  const nlohmann::json inputs = nlohmann::json::object();
  if (!begin(Stage::kFitMovMF, inputs)) return StageOutcome::kSkipped;
  const auto corpus = load_corpus();
  const auto table = load_table();
  const auto tax = propagate_supervision(load_taxonomy(dir(Stage::kIngest) / "taxonomy.json"));
  const auto keywords = retrieve_class_keywords(tax, table, corpus, config_.keywords());
  const auto mixtures = fit_class_mixtures(tax, keywords, config_.em());
  const auto d = dir(Stage::kFitMovMF);
  {
    std::ofstream out(d / "taxonomy.json");
    out << taxonomy_to_json(tax, true) << '\n';
  }
  write_json(d / "keywords.json", keywords_to_json(tax, keywords));
  write_json(d / "mixtures.json", mixtures_to_json(tax, mixtures));
  finish(Stage::kFitMovMF, inputs, {"taxonomy.json", "keywords.json", "mixtures.json"});
  return StageOutcome::kRan;
}

StageOutcome Workspace::generate() {
  const nlohmann::json inputs = nlohmann::json::object();
  if (!begin(Stage::kGenerate, inputs)) return StageOutcome::kSkipped;
  const auto corpus = load_corpus();
  const auto table = load_table();
  const auto tax = load_taxonomy_snapshot();
  const auto keywords = keywords_from_json(tax, read_json(dir(Stage::kFitMovMF) / "keywords.json"), table);
  const auto mixtures = mixtures_from_json(tax, read_json(dir(Stage::kFitMovMF) / "mixtures.json"));
  const auto lm = NgramModel::train(corpus, config_.lm_order, config_.lm_discount);
  const auto options = config_.train(mean_document_length(corpus));
  const auto d = dir(Stage::kGenerate) / "pseudo";
  fs::create_directories(d);
  for (NodeIndex node : tax.classifier_nodes()) {
    auto pseudo = options.pseudo;
    pseudo.seed = node_seed(options.pseudo.seed, node);
    const auto set = generate_training_set(tax, node, mixtures, keywords, lm, table, pseudo);
    save_pseudo_documents(d / pseudo_file(node), tax, set.documents, corpus.vocabulary);
    spdlog::info("generate: {} pseudo documents for '{}'", set.documents.size(), tax.node(node).id);
  }
  finish(Stage::kGenerate, inputs, {"pseudo"});
  return StageOutcome::kRan;
}

StageOutcome Workspace::pretrain() {
  const nlohmann::json inputs = nlohmann::json::object();
  if (!begin(Stage::kPretrain, inputs)) return StageOutcome::kSkipped;
  const auto corpus = load_corpus();
  auto table = load_table();
  const auto tax = load_taxonomy_snapshot();
  const auto options = config_.train(mean_document_length(corpus));
  auto model = make_model(tax, table.dim(), options.hidden, options.seed);
  for (NodeIndex node : tax.classifier_nodes()) {
    PseudoTrainingSet set;
    set.documents =
        load_pseudo_documents(dir(Stage::kGenerate) / "pseudo" / pseudo_file(node), tax, corpus.vocabulary);
    const auto& children = tax.node(node).children;
    for (const auto& doc : set.documents) {
      const auto at = std::find(children.begin(), children.end(), doc.source);
      if (at == children.end()) throw ParseError("pseudo document for '" + tax.node(doc.source).id + "' is misfiled");
      set.child_index.push_back(std::size_t(at - children.begin()));
      set.labels.push_back(make_pseudo_label(set.child_index.back(), children.size(), config_.alpha));
    }
    auto pre = options.pretrain;
    pre.seed = node_seed(options.pretrain.seed, node);
    pretrain_node(model, node, set, table, pre);
  }
  ModelCheckpoint ckpt{std::move(model), mixtures_from_json(tax, read_json(dir(Stage::kFitMovMF) / "mixtures.json")),
                       corpus.vocabulary, std::move(table), config_};
  save_checkpoint(dir(Stage::kPretrain) / "model", ckpt);
  finish(Stage::kPretrain, inputs, {"model"});
  return StageOutcome::kRan;
}

StageOutcome Workspace::selftrain() {
  const nlohmann::json inputs = nlohmann::json::object();
  if (!begin(Stage::kSelfTrain, inputs)) return StageOutcome::kSkipped;
  const auto corpus = load_corpus();
  auto ckpt = load_checkpoint(dir(Stage::kPretrain) / "model");
  ckpt.config = config_;
  const auto options = config_.train(mean_document_length(corpus));
  const auto enc = encode_corpus(corpus, ckpt.table, config_.threads > 1);
  // Gold labels reach only the curve recorder.
  std::vector<std::optional<NodeIndex>> gold(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (const auto& g = corpus.documents[i].gold_label) gold[i] = ckpt.model.taxonomy.find(*g);
  CurveRecorder recorder(ckpt.model.taxonomy, std::move(gold));
  const auto result = self_train_levels(ckpt.model, enc, options, recorder.observer());

  const auto d = dir(Stage::kSelfTrain);
  save_checkpoint(d / "model", ckpt);
  std::vector<std::string> ids;
  for (const auto& doc : corpus.documents) ids.push_back(doc.id);
  write_assignments(d / "assignments.jsonl", to_records(ckpt.model.taxonomy, ids, result.assignments));
  emit_curves(recorder.series(), d / "curves");
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : result.levels)
    levels.push_back({{"level", l.level}, {"active", l.active}, {"blocked", l.blocked}, {"rounds", l.rounds}});
  write_json(d / "summary.json", {{"total_rounds", result.total_rounds}, {"levels", levels}});
  for (const auto& l : result.levels)
    spdlog::info("selftrain: level {} active {} blocked {} rounds {}", l.level + 1, l.active, l.blocked, l.rounds);
  finish(Stage::kSelfTrain, inputs, {"model", "assignments.jsonl", "curves", "summary.json"});
  return StageOutcome::kRan;
}

StageOutcome Workspace::predict() {
  const nlohmann::json inputs = nlohmann::json::object();
  if (!begin(Stage::kPredict, inputs)) return StageOutcome::kSkipped;
  // Corpus documents keep the assignment made during self-training, where
  // each blocking decision used the classifier as it stood at that level.
  fs::copy_file(dir(Stage::kSelfTrain) / "assignments.jsonl", dir(Stage::kPredict) / "assignments.jsonl");
  finish(Stage::kPredict, inputs, {"assignments.jsonl"});
  return StageOutcome::kRan;
}

StageOutcome Workspace::eval(bool leaves_only) {
  const nlohmann::json inputs{{"leaves_only", leaves_only}};
  if (!begin(Stage::kEval, inputs)) return StageOutcome::kSkipped;
  const auto corpus = load_corpus();
  const auto gold = gold_labels(corpus);
  if (gold.empty()) throw ValidationError("eval: the ingested corpus has no gold labels");
  const auto tax = load_taxonomy_snapshot();
  std::vector<PredictedLabel> predicted;
  for (const auto& r : read_assignments(dir(Stage::kPredict) / "assignments.jsonl"))
    if (gold.contains(r.id)) predicted.push_back({r.id, r.label, r.blocked});
  auto report = score(tax, predicted, gold, {leaves_only});
  report.mode = ablation_label(config_);
  report.seed = config_.seed;
  report.config_hash = config_.hash();
  report.self_train_rounds =
      read_json(dir(Stage::kSelfTrain) / "summary.json").at("total_rounds").get<std::size_t>();
  write_json(dir(Stage::kEval) / "report.json", report.to_json());
  spdlog::info("eval: micro-F1 {:.4f} macro-F1 {:.4f} over {} documents ({} blocked)", report.micro_f1,
               report.macro_f1, report.documents, report.blocked);
  finish(Stage::kEval, inputs, {"report.json"});
  return StageOutcome::kRan;
}

StageOutcome Workspace::ablate(const std::vector<AblationMode>& modes) {
  nlohmann::json names = nlohmann::json::array();
  for (auto m : modes) names.push_back(to_string(m));
  const nlohmann::json inputs{{"modes", names}};
  if (!begin(Stage::kAblate, inputs)) return StageOutcome::kSkipped;
  const auto corpus = load_corpus();
  const auto table = load_table();
  const auto tax = load_taxonomy_snapshot();
  const auto keywords = keywords_from_json(tax, read_json(dir(Stage::kFitMovMF) / "keywords.json"), table);
  const auto mixtures = mixtures_from_json(tax, read_json(dir(Stage::kFitMovMF) / "mixtures.json"));
  const auto lm = NgramModel::train(corpus, config_.lm_order, config_.lm_discount);
  const auto enc = encode_corpus(corpus, table, config_.threads > 1);
  if (gold_labels(corpus).empty()) throw ValidationError("ablate: the ingested corpus has no gold labels");
  const TrainingInputs in{tax, table, lm, mixtures, keywords};
  std::vector<std::string> outputs;
  nlohmann::json summary = nlohmann::json::object();
  for (auto m : modes) {
    auto run = run_ablation(m, in, corpus, enc, config_.train(mean_document_length(corpus)));
    run.report.config_hash = config_.hash();
    const auto sub = dir(Stage::kAblate) / to_string(m);
    fs::create_directories(sub);
    write_json(sub / "report.json", run.report.to_json());
    emit_curves(run.curves, sub / "curves");
    summary[to_string(m)] = {{"micro_f1", run.report.micro_f1}, {"macro_f1", run.report.macro_f1}};
    spdlog::info("ablate {}: micro-F1 {:.4f} macro-F1 {:.4f}", to_string(m), run.report.micro_f1,
                 run.report.macro_f1);
    outputs.push_back(to_string(m));
  }
  write_json(dir(Stage::kAblate) / "summary.json", summary);
  outputs.push_back("summary.json");
  finish(Stage::kAblate, inputs, outputs);
  return StageOutcome::kRan;
}

void Workspace::pipeline(const fs::path& corpus, const fs::path& taxonomy) {
  ingest(corpus, taxonomy);
  embed();
  fit_movmf();
  generate();
  pretrain();
  selftrain();
  predict();
  eval();
}

}  // namespace weakhier
