// Command-line front end over the staged workspace.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <omp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "weakhier/error.hpp"
#include "weakhier/pipeline.hpp"
#include "weakhier/synthetic.hpp"

namespace fs = std::filesystem;
using namespace weakhier;

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Registers a flag that overrides one config key.
void config_flag(CLI::App& app, Overrides& overrides, const std::string& flag, const std::string& key,
                 const std::string& help) {
  app.add_option_function<std::string>(
      flag, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); }, help);
}

fs::path default_workspace() {
  if (const char* env = std::getenv("WEAKHIER_WORKSPACE")) return env;
  return "workspace";
}

void report_summary(const EvalReport& r) {
  std::cout << "micro_f1 " << r.micro_f1 << "\nmacro_f1 " << r.macro_f1 << "\n";
  for (std::size_t l = 0; l < r.level_accuracy.size(); ++l)
    std::cout << "level" << l + 1 << "_accuracy " << r.level_accuracy[l] << "\n";
  std::cout << "documents " << r.documents << "\nblocked " << r.blocked << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly-supervised hierarchical text classification"};
  app.require_subcommand(1);
  app.fallthrough();

  fs::path workspace = default_workspace();
  std::string config_path;
  std::string log_level = "info";
  bool force = false;
  Overrides overrides;

  app.add_option("--workspace", workspace, "Workspace root (env WEAKHIER_WORKSPACE)");
  app.add_option("--config", config_path, "Flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");
  app.add_flag("--force", force, "Rerun a stage even if the workspace was built with another config");
  config_flag(app, overrides, "--seed", "seed", "Random seed");
  config_flag(app, overrides, "--threads", "threads", "OpenMP threads (1 is bitwise reproducible)");
  config_flag(app, overrides, "--min-count", "min_count", "Vocabulary count threshold");
  config_flag(app, overrides, "--dim", "dim", "Embedding dimension");
  config_flag(app, overrides, "--window", "window", "Skip-gram window");
  config_flag(app, overrides, "--negatives", "negatives", "Negative samples per pair");
  config_flag(app, overrides, "--embeddings", "pretrained_embeddings", "Use this embedding file instead of training");
  config_flag(app, overrides, "--max-keywords", "max_keywords", "Keyword set size cap");
  config_flag(app, overrides, "--keyword-scope", "keyword_scope", "siblings or level");
  config_flag(app, overrides, "--alpha", "alpha", "Pseudo label smoothing");
  config_flag(app, overrides, "--beta", "beta", "Pseudo documents per class");
  config_flag(app, overrides, "--length", "pseudo_length", "Pseudo document length (0: corpus mean)");
  config_flag(app, overrides, "--begin-words", "begin_words", "movmf or keywords");
  config_flag(app, overrides, "--hidden", "hidden", "Classifier hidden width");
  config_flag(app, overrides, "--batch", "batch_size", "Mini-batch size");
  config_flag(app, overrides, "--delta", "delta", "Self-training stop threshold, percent of documents");
  config_flag(app, overrides, "--gamma", "gamma", "Blocking threshold on normalized entropy");
  config_flag(app, overrides, "--max-rounds", "max_rounds", "Self-training passes per level");
  config_flag(app, overrides, "--mode", "mode", "global or greedy");
  app.add_option_function<std::vector<std::string>>(
      "--set",
      [&overrides](const std::vector<std::string>& kvs) {
        for (const auto& kv : kvs) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
          overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        }
      },
      "Override any config key (key=value)");

  fs::path corpus, taxonomy, out, model, in, gold, pred, report_path, tax_path;
  bool leaves_only = false;
  std::vector<std::string> modes{"full", "no_global", "no_vmf", "no_selftrain"};

  auto* ingest = app.add_subcommand("ingest", "Tokenize the corpus and snapshot the taxonomy");
  ingest->add_option("--corpus", corpus, "Line-delimited {id, text, label?} records")->required()->check(CLI::ExistingFile);
  ingest->add_option("--taxonomy", taxonomy, "Taxonomy tree")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", workspace, "Workspace root");

  auto* embed = app.add_subcommand("embed", "Train skip-gram embeddings");
  config_flag(*embed, overrides, "--epochs", "embed_epochs", "Skip-gram epochs");
  config_flag(*embed, overrides, "--lr", "embed_learning_rate", "Skip-gram learning rate");
  embed->add_option("--out", out, "Also copy the embedding file here");

  auto* fit = app.add_subcommand("fit-movmf", "Retrieve class keywords and fit class mixtures");
  config_flag(*fit, overrides, "--em-iters", "em_max_iters", "EM iteration cap");

  auto* generate = app.add_subcommand("generate", "Generate pseudo documents");
  generate->add_option("--out", out, "Also copy the pseudo document directory here");

  auto* pretrain = app.add_subcommand("pretrain", "Pre-train local classifiers on pseudo documents");
  config_flag(*pretrain, overrides, "--epochs", "pretrain_epochs", "Pre-training epochs");
  config_flag(*pretrain, overrides, "--lr", "learning_rate", "Pre-training learning rate");

  auto* selftrain = app.add_subcommand("selftrain", "Level-wise self-training with blocking");
  config_flag(*selftrain, overrides, "--lr", "selftrain_learning_rate", "Self-training learning rate");

  auto* predict = app.add_subcommand("predict", "Assign classes to documents");
  predict->add_option("--model", model, "Model directory (default: the workspace's trained model)");
  predict->add_option("--in", in, "Documents to classify (default: the ingested corpus)")->check(CLI::ExistingFile);
  predict->add_option("--out", out, "Assignment records output");

  auto* eval = app.add_subcommand("eval", "Score assignments against gold labels");
  eval->add_option("--gold", gold, "Labeled records (default: the ingested corpus)")->check(CLI::ExistingFile);
  eval->add_option("--pred", pred, "Assignment records (default: the predict stage)")->check(CLI::ExistingFile);
  eval->add_option("--taxonomy", tax_path, "Taxonomy for --gold/--pred scoring")->check(CLI::ExistingFile);
  eval->add_option("--report", report_path, "Write the report here as well");
  eval->add_flag("--leaves-only", leaves_only, "Score leaf-labeled documents over leaf classes only");

  auto* ablate = app.add_subcommand("ablate", "Run the method with one component switched off");
  ablate->add_option("--modes", modes, "full, no_global, no_vmf, no_selftrain")->delimiter(',');

  auto* pipeline = app.add_subcommand("pipeline", "ingest through eval");
  pipeline->add_option("--corpus", corpus, "Line-delimited records")->required()->check(CLI::ExistingFile);
  pipeline->add_option("--taxonomy", taxonomy, "Taxonomy tree")->required()->check(CLI::ExistingFile);

  std::size_t general_docs = 0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic two-level corpus and taxonomy");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--general", general_docs, "Parent-level documents to add");

  CLI11_PARSE(app, argc, argv);

  auto logger = spdlog::stderr_color_mt("weakhier");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    Config config;
    if (!config_path.empty()) config = load_config(config_path);
    else if (auto stored = Workspace::stored_config(workspace)) config = *stored;
    for (const auto& [k, v] : overrides) config.set(k, v);
    config.validate();
    omp_set_num_threads(config.threads);

    // Standalone commands that need no workspace.
    if (synth->parsed()) {
      SyntheticOptions so;
      so.seed = config.seed;
      so.general_documents = general_docs;
      const auto syn = make_synthetic_corpus(so);
      fs::create_directories(out);
      write_records(out / "corpus.jsonl", syn.records);
      std::ofstream(out / "taxonomy.json") << syn.taxonomy_json << '\n';
      std::cout << out / "corpus.jsonl" << "\n" << out / "taxonomy.json" << "\n";
      return 0;
    }
    if (predict->parsed() && !model.empty()) {
      if (in.empty()) throw ValidationError("predict --model needs --in");
      auto ckpt = load_checkpoint(model);
      auto run = ckpt.config;
      for (const auto& [k, v] : overrides) run.set(k, v);
      const auto records = predict_records(ckpt, read_records(in), run);
      write_assignments(out.empty() ? fs::path("assignments.jsonl") : out, records);
      spdlog::info("predict: {} documents classified", records.size());
      return 0;
    }
    if (eval->parsed() && !pred.empty()) {
      if (gold.empty() || tax_path.empty()) throw ValidationError("eval --pred needs --gold and --taxonomy");
      const auto tax = load_taxonomy(tax_path);
      std::unordered_map<std::string, std::string> labels;
      for (const auto& r : read_records(gold))
        if (r.label) labels.emplace(r.id, *r.label);
      std::vector<PredictedLabel> predicted;
      for (const auto& r : read_assignments(pred))
        if (labels.contains(r.id)) predicted.push_back({r.id, r.label, r.blocked});
      auto report = score(tax, predicted, labels, {leaves_only});
      report.seed = config.seed;
      report.config_hash = config.hash();
      write_json(report_path.empty() ? fs::path("report.json") : report_path, report.to_json());
      report_summary(report);
      return 0;
    }

    Workspace ws(workspace, config, force);
    if (ingest->parsed()) {
      ws.ingest(corpus, taxonomy);
    } else if (embed->parsed()) {
      ws.embed();
      if (!out.empty()) fs::copy_file(ws.dir(Stage::kEmbed) / "embeddings.txt", out, fs::copy_options::overwrite_existing);
    } else if (fit->parsed()) {
      ws.fit_movmf();
    } else if (generate->parsed()) {
      ws.generate();
      if (!out.empty())
        fs::copy(ws.dir(Stage::kGenerate) / "pseudo", out,
                 fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    } else if (pretrain->parsed()) {
      ws.pretrain();
    } else if (selftrain->parsed()) {
      ws.selftrain();
    } else if (predict->parsed()) {
      if (!in.empty()) {
        const auto model_dir = ws.dir(Stage::kSelfTrain) / "model";
        if (!fs::exists(model_dir))
          throw WorkspaceError("no trained model in the workspace; run `weakhier selftrain` first");
        const auto records = predict_records(load_checkpoint(model_dir), read_records(in), config);
        write_assignments(out.empty() ? fs::path("assignments.jsonl") : out, records);
      } else {
        ws.predict();
        if (!out.empty())
          fs::copy_file(ws.dir(Stage::kPredict) / "assignments.jsonl", out, fs::copy_options::overwrite_existing);
      }
    } else if (eval->parsed()) {
      ws.eval(leaves_only);
      const auto report = EvalReport::from_json(read_json(ws.dir(Stage::kEval) / "report.json"));
      if (!report_path.empty()) write_json(report_path, report.to_json());
      report_summary(report);
    } else if (ablate->parsed()) {
      std::vector<AblationMode> parsed_modes;
      for (const auto& m : modes) parsed_modes.push_back(parse_ablation_mode(m));
      ws.ablate(parsed_modes);
      std::cout << read_json(ws.dir(Stage::kAblate) / "summary.json").dump(2) << "\n";
    } else if (pipeline->parsed()) {
      ws.pipeline(corpus, taxonomy);
      report_summary(EvalReport::from_json(read_json(ws.dir(Stage::kEval) / "report.json")));
    }
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const WorkspaceError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
