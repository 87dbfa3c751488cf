#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "weakhier/error.hpp"
#include "weakhier/eval.hpp"

using namespace weakhier;

namespace {

const Taxonomy& tree() {
  static const Taxonomy t = parse_taxonomy(R"({"name":"root","children":[
      {"name":"P","children":[{"name":"A","keywords":["a"]},{"name":"B","keywords":["b"]}]},
      {"name":"Q","children":[{"name":"C","keywords":["c"]},{"name":"D","keywords":["d"]}]}]})");
  return t;
}

std::vector<PredictedLabel> preds(const std::vector<std::string>& labels) {
  std::vector<PredictedLabel> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({"d" + std::to_string(i), labels[i], false});
  return out;
}

std::unordered_map<std::string, std::string> golds(const std::vector<std::string>& labels) {
  std::unordered_map<std::string, std::string> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out["d" + std::to_string(i)] = labels[i];
  return out;
}

}  // namespace

TEST_CASE("hand-counted F1") {
  const auto r = score(tree(), preds({"A", "B", "B", "B"}), golds({"A", "A", "B", "B"}));
  CHECK(r.micro_f1 == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(r.macro_f1 == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-12));
  REQUIRE(r.classes.size() == 2);
  CHECK(r.classes[0].id == "A");
  CHECK(r.classes[0].recall == 0.5);
  CHECK(r.classes[1].precision == doctest::Approx(2.0 / 3.0));
  CHECK(r.level_accuracy == std::vector<double>{1.0, 0.75});

  const auto perfect = score(tree(), preds({"A", "C"}), golds({"A", "C"}));
  CHECK(perfect.micro_f1 == 1.0);
  CHECK(perfect.macro_f1 == 1.0);
  const auto wrong = score(tree(), preds({"D", "D", "D"}), golds({"A", "B", "C"}));
  CHECK(wrong.micro_f1 == 0.0);
}

TEST_CASE("blocked predictions count only for an exact internal gold class") {
  auto p = preds({"P", "P", "A"});
  p[0].blocked = p[1].blocked = true;
  const auto r = score(tree(), p, golds({"P", "A", "A"}));
  CHECK(r.micro_f1 == doctest::Approx(2.0 / 3.0));
  CHECK(r.blocked == 2);
  // Level-1 accuracy credits P for gold A; level 2 does not.
  CHECK(r.level_accuracy[0] == 1.0);
  CHECK(r.level_accuracy[1] == 0.5);

  const auto leaves = score(tree(), p, golds({"P", "A", "A"}), {.leaves_only = true});
  CHECK(leaves.documents == 2);
  CHECK(leaves.classes.size() == 1);
  CHECK(leaves.classes[0].recall == 0.5);
}

TEST_CASE("score errors") {
  CHECK_THROWS_AS(score(tree(), {{"zz", "A", false}}, golds({"A"})), ValidationError);
  CHECK_THROWS_AS(score(tree(), preds({"A"}), golds({"A", "B"})), ValidationError);
  CHECK_THROWS_AS(score(tree(), preds({"nope"}), golds({"A"})), ValidationError);
}

TEST_CASE("micro-F1 equals accuracy; macro-F1 is permutation invariant") {
  std::mt19937_64 rng(12);
  const std::vector<std::string> leaves{"A", "B", "C", "D"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> g, p;
    std::size_t correct = 0;
    for (int i = 0; i < 30; ++i) {
      g.push_back(leaves[rng() % 4]);
      p.push_back(rng() % 3 ? g.back() : leaves[rng() % 4]);
      correct += g.back() == p.back();
    }
    const auto r = score(tree(), preds(p), golds(g));
    CHECK(r.micro_f1 == doctest::Approx(double(correct) / 30.0).epsilon(1e-12));

    // Relabel A<->C and B<->D in both gold and predictions.
    const auto swap = [](std::string s) { return s == "A" ? "C" : s == "C" ? "A" : s == "B" ? "D" : "B"; };
    std::vector<std::string> g2, p2;
    for (const auto& s : g) g2.push_back(swap(s));
    for (const auto& s : p) p2.push_back(swap(s));
    CHECK(score(tree(), preds(p2), golds(g2)).macro_f1 == doctest::Approx(r.macro_f1).epsilon(1e-12));
  }
}

TEST_CASE("report JSON round trip") {
  auto r = score(tree(), preds({"A", "B", "P"}), golds({"A", "A", "P"}));
  r.mode = "no_vmf";
  r.seed = 42;
  r.config_hash = "abc123";
  r.self_train_rounds = 7;
  CHECK(EvalReport::from_json(nlohmann::json::parse(r.to_json().dump())) == r);
  CHECK_THROWS_AS(EvalReport::from_json(nlohmann::json::object()), ParseError);
}

TEST_CASE("ablation mode names") {
  for (auto m : {AblationMode::kFull, AblationMode::kNoGlobal, AblationMode::kNoVmf, AblationMode::kNoSelfTrain})
    CHECK(parse_ablation_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_ablation_mode("no_lm"), ValidationError);
}

TEST_CASE("curve recorder and files") {
  const auto& t = tree();
  const NodeIndex a = t.index_of("A"), b = t.index_of("B");
  CurveRecorder rec(t, {a, b, std::nullopt});
  const std::vector<std::size_t> docs{0, 1, 2};
  RoundStats s;
  s.level = 2;
  s.documents = docs;
  s.assignment = {a, a, b};
  s.mean_entropy = 0.5;
  s.would_block = 1;
  rec.observer()(s);
  s.round = 1;
  s.changed_fraction = 0.0;
  s.mean_entropy = 0.25;
  rec.observer()(s);
  const auto& series = rec.series();
  CHECK(series.at("accuracy_level2") == std::vector<double>{0.5, 0.5});
  CHECK(series.at("entropy_level2") == std::vector<double>{0.5, 0.25});
  CHECK(series.at("changed_level2") == std::vector<double>{0.0});

  const auto dir = std::filesystem::temp_directory_path() / "weakhier_curves";
  std::filesystem::remove_all(dir);
  emit_curves(series, dir / "curves");
  std::ifstream in(dir / "curves" / "entropy_level2.tsv");
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  CHECK(header == "iteration\tvalue");
  CHECK(row0 == "0\t0.5");
  CHECK(row1 == "1\t0.25");
  std::filesystem::remove_all(dir);
}
