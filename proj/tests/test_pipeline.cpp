#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "weakhier/checkpoint.hpp"
#include "weakhier/error.hpp"
#include "weakhier/pipeline.hpp"
#include "weakhier/synthetic.hpp"

using namespace weakhier;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("weakhier_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

SyntheticCorpus small_corpus(std::uint64_t seed) {
  SyntheticOptions o;
  o.docs_per_leaf = 40;
  o.seed = seed;
  return make_synthetic_corpus(o);
}

Config small_config(std::uint64_t seed) {
  Config c;
  c.seed = seed;
  c.dim = 20;
  c.embed_epochs = 2;
  c.min_count = 2;
  c.max_keywords = 20;
  c.beta = 40;
  c.pretrain_epochs = 10;
  c.learning_rate = 1.0;
  c.max_rounds = 5;
  c.gamma = 1.0;
  return c;
}

void write_inputs(const fs::path& dir, const SyntheticCorpus& s) {
  write_records(dir / "corpus.jsonl", s.records);
  std::ofstream(dir / "taxonomy.json") << s.taxonomy_json;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config parsing, overrides and validation") {
  Config c;
  CHECK_NOTHROW(c.validate());
  c.set("gamma", "1.2");
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.set("gamma", "1");
  c.set("alpha", "-0.1");
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.set("alpha", "0.2");
  c.set("delta", "0");
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.set("delta", "0.1");
  c.set("beta", "0");
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.set("beta", "500");
  CHECK_NOTHROW(c.validate());
  CHECK_THROWS_AS(c.set("no_such_key", "1"), ValidationError);
  CHECK_THROWS_AS(c.set("beta", "many"), ValidationError);
  CHECK_THROWS_AS(c.set("self_train", "maybe"), ValidationError);

  TempDir tmp;
  {
    std::ofstream out(tmp.path / "run.conf");
    out << "# comment\n\n  gamma = 0.5  # inline\nmode=greedy\nseed = 42\n";
  }
  const auto loaded = load_config(tmp.path / "run.conf");
  CHECK(loaded.gamma == 0.5);
  CHECK(loaded.mode == "greedy");
  CHECK(loaded.seed == 42);
  CHECK(loaded.alpha == 0.2);

  save_config(tmp.path / "saved.conf", loaded);
  const auto again = load_config(tmp.path / "saved.conf");
  CHECK(again.to_text() == loaded.to_text());
  CHECK(again.hash() == loaded.hash());
  CHECK(Config{}.hash() != loaded.hash());

  std::ofstream(tmp.path / "bad.conf") << "gamma 0.5\n";
  CHECK_THROWS_AS(load_config(tmp.path / "bad.conf"), ParseError);
}

TEST_CASE("config maps onto training options") {
  Config c;
  c.alpha = 0.3;
  c.mode = "greedy";
  c.begin_words = "keywords";
  const auto t = c.train(350.0);
  CHECK(t.pseudo.alpha == 0.3);
  CHECK(t.pseudo.generation.length == 200);  // capped
  CHECK(t.pseudo.begin_mode == BeginWordMode::kKeywords);
  CHECK_FALSE(t.global);
  CHECK(c.train(42.4).pseudo.generation.length == 42);
  c.pseudo_length = 17;
  CHECK(c.train(350.0).pseudo.generation.length == 17);
}

TEST_CASE("in-memory training on the synthetic corpus") {
  const auto syn = small_corpus(5);
  const auto config = small_config(5);
  const auto data = prepare(syn.records, parse_taxonomy(syn.taxonomy_json), config);
  REQUIRE(data.corpus.size() == syn.records.size());
  const auto trained = train_all(data.inputs(), data.encodings, config.train(mean_document_length(data.corpus)));
  const auto& a = trained.result.assignments;
  REQUIRE(a.size() == data.corpus.size());
  std::set<std::size_t> docs;
  for (const auto& x : a) {
    docs.insert(x.document);
    CHECK_FALSE(x.blocked);  // gamma = 1
    CHECK(data.taxonomy.node(x.node).is_leaf());
  }
  CHECK(docs.size() == a.size());
  const auto report = score(data.taxonomy, to_labels(data.taxonomy, data.corpus, a), gold_labels(data.corpus));
  CHECK(report.level_accuracy.at(0) > 0.8);
}

TEST_CASE("checkpoint round trip") {
  const auto syn = small_corpus(6);
  const auto config = small_config(6);
  const auto data = prepare(syn.records, parse_taxonomy(syn.taxonomy_json), config);
  auto trained = train_all(data.inputs(), data.encodings, config.train(mean_document_length(data.corpus)));
  ModelCheckpoint ckpt{std::move(trained.model), data.mixtures, data.corpus.vocabulary, data.table, config};

  TempDir tmp;
  save_checkpoint(tmp.path / "model", ckpt);
  const auto back = load_checkpoint(tmp.path / "model");
  CHECK(back.model.taxonomy == ckpt.model.taxonomy);
  REQUIRE(back.model.classifiers.size() == ckpt.model.classifiers.size());
  for (std::size_t i = 0; i < back.model.classifiers.size(); ++i) CHECK(back.model.classifiers[i] == ckpt.model.classifiers[i]);
  for (std::size_t i = 0; i < back.mixtures.size(); ++i) {
    REQUIRE(back.mixtures[i].has_value() == ckpt.mixtures[i].has_value());
    if (!back.mixtures[i]) continue;
    CHECK(back.mixtures[i]->weights == ckpt.mixtures[i]->weights);
    for (std::size_t h = 0; h < back.mixtures[i]->size(); ++h) {
      CHECK(back.mixtures[i]->components[h].mean == ckpt.mixtures[i]->components[h].mean);
      CHECK(back.mixtures[i]->components[h].kappa == ckpt.mixtures[i]->components[h].kappa);
    }
  }
  CHECK(back.table.vectors.data == ckpt.table.vectors.data);
  CHECK(back.vocabulary.words() == ckpt.vocabulary.words());
  CHECK(back.config.to_text() == config.to_text());

  // Classifying the corpus text through the saved model matches direct inference.
  const auto direct = predict(ckpt.model, data.encodings, config.gamma);
  const auto records = predict_records(back, syn.records, config);
  REQUIRE(records.size() == direct.size());
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(records[i].label == ckpt.model.taxonomy.node(direct[i].node).id);

  write_assignments(tmp.path / "a.jsonl", records);
  CHECK(read_assignments(tmp.path / "a.jsonl") == records);

  fs::remove(tmp.path / "model" / "mixtures.json");
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "model"), ParseError);
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "missing"), ParseError);
}

TEST_CASE("staged workspace") {
  TempDir tmp;
  const auto syn = small_corpus(7);
  write_inputs(tmp.path, syn);
  const auto config = small_config(7);
  const auto corpus = tmp.path / "corpus.jsonl";
  const auto taxonomy = tmp.path / "taxonomy.json";

  SUBCASE("a missing prior stage names the command to run") {
    Workspace ws(tmp.path / "ws", config);
    try {
      ws.embed();
      FAIL("expected an error");
    } catch (const WorkspaceError& e) {
      CHECK(std::string(e.what()).find("weakhier ingest") != std::string::npos);
    }
  }

  SUBCASE("one run per workspace") {
    Workspace ws(tmp.path / "ws", config);
    CHECK_THROWS_AS(Workspace(tmp.path / "ws", config), WorkspaceError);
  }

  SUBCASE("invalid config is refused before any work") {
    auto bad = config;
    bad.gamma = 1.2;
    CHECK_THROWS_AS(Workspace(tmp.path / "ws", bad), ValidationError);
    CHECK_FALSE(fs::exists(tmp.path / "ws" / "manifest.json"));
  }

  SUBCASE("pipeline, reruns and forced changes") {
    {
      Workspace ws(tmp.path / "ws", config);
      ws.pipeline(corpus, taxonomy);
      for (auto s : {Stage::kIngest, Stage::kEmbed, Stage::kFitMovMF, Stage::kGenerate, Stage::kPretrain,
                     Stage::kSelfTrain, Stage::kPredict, Stage::kEval})
        CHECK(ws.manifest()["stages"].contains(stage_name(s)));
      CHECK(fs::exists(ws.dir(Stage::kEval) / "report.json"));
      CHECK(fs::exists(ws.dir(Stage::kSelfTrain) / "curves" / "entropy_level1.tsv"));
      CHECK(fs::exists(ws.dir(Stage::kPretrain) / "model" / "mixtures.json"));
      CHECK(ws.manifest()["config_hash"] == config.hash());
    }
    const auto manifest = slurp(tmp.path / "ws" / "manifest.json");
    const auto report = EvalReport::from_json(read_json(tmp.path / "ws" / "eval" / "report.json"));
    CHECK(report.config_hash == config.hash());
    CHECK(report.seed == 7);
    CHECK(report.mode == "full");

    {
      Workspace ws(tmp.path / "ws", config);
      CHECK(ws.ingest(corpus, taxonomy) == StageOutcome::kSkipped);
      CHECK(ws.selftrain() == StageOutcome::kSkipped);
      CHECK(ws.eval() == StageOutcome::kSkipped);
    }
    CHECK(slurp(tmp.path / "ws" / "manifest.json") == manifest);

    auto changed = config;
    changed.gamma = 0.9;
    {
      Workspace ws(tmp.path / "ws", changed);
      CHECK_THROWS_AS(ws.selftrain(), WorkspaceError);
    }
    {
      Workspace ws(tmp.path / "ws", changed, true);
      CHECK(ws.selftrain() == StageOutcome::kRan);
      CHECK_FALSE(ws.manifest()["stages"].contains("predict"));
      CHECK_FALSE(ws.manifest()["stages"].contains("eval"));
      CHECK(ws.manifest()["stages"].contains("pretrain"));
      CHECK(ws.manifest()["config_hash"] == changed.hash());
      CHECK(ws.predict() == StageOutcome::kRan);
    }
    CHECK(Workspace::stored_config(tmp.path / "ws")->gamma == 0.9);

    // Tampered outputs are rebuilt rather than trusted.
    {
      std::ofstream(tmp.path / "ws" / "predict" / "assignments.jsonl") << "\n";
      Workspace ws(tmp.path / "ws", changed);
      CHECK_THROWS_AS(ws.predict(), WorkspaceError);
    }
  }

  SUBCASE("identical runs give identical manifests and the in-memory result") {
    for (const char* name : {"a", "b"}) {
      Workspace ws(tmp.path / name, config);
      ws.pipeline(corpus, taxonomy);
    }
    CHECK(slurp(tmp.path / "a" / "manifest.json") == slurp(tmp.path / "b" / "manifest.json"));
    const auto staged = read_assignments(tmp.path / "a" / "predict" / "assignments.jsonl");
    CHECK(staged == read_assignments(tmp.path / "b" / "predict" / "assignments.jsonl"));

    const auto data = prepare(read_records(corpus), load_taxonomy(taxonomy), config);
    const auto trained = train_all(data.inputs(), data.encodings, config.train(mean_document_length(data.corpus)));
    std::vector<std::string> ids;
    for (const auto& d : data.corpus.documents) ids.push_back(d.id);
    CHECK(to_records(data.taxonomy, ids, trained.result.assignments) == staged);
  }

  SUBCASE("ablation stage") {
    Workspace ws(tmp.path / "ws", config);
    CHECK_THROWS_AS(ws.ablate({AblationMode::kFull}), WorkspaceError);
    ws.ingest(corpus, taxonomy);
    ws.embed();
    ws.fit_movmf();
    CHECK(ws.ablate({AblationMode::kFull, AblationMode::kNoSelfTrain}) == StageOutcome::kRan);
    const auto r = EvalReport::from_json(read_json(ws.dir(Stage::kAblate) / "no_selftrain" / "report.json"));
    CHECK(r.mode == "no_selftrain");
    CHECK(r.self_train_rounds == 0);
    CHECK(fs::exists(ws.dir(Stage::kAblate) / "full" / "curves"));
  }
}
