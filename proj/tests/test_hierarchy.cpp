#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "weakhier/error.hpp"
#include "weakhier/hierarchy.hpp"

using namespace weakhier;

namespace {

RowMatrix rows_of(std::initializer_list<std::initializer_list<double>> v) {
  RowMatrix m(v.size(), v.begin()->size());
  std::size_t i = 0;
  for (const auto& r : v) std::copy(r.begin(), r.end(), m.row(i++).begin());
  return m;
}

// Random tree of depth 2 with 2-4 children per internal node; some level-1
// classes are leaves and some have a single child.
Taxonomy random_tree(std::mt19937_64& rng) {
  std::string json = R"({"name":"root","children":[)";
  const int supers = 2 + int(rng() % 3);
  for (int s = 0; s < supers; ++s) {
    json += s ? "," : "";
    const int kids = int(rng() % 4);  // 0: leaf, 1: single child
    json += R"({"name":"s)" + std::to_string(s) + '"';
    if (kids == 0) {
      json += R"(,"keywords":["k)" + std::to_string(s) + R"("]})";
      continue;
    }
    json += R"(,"children":[)";
    for (int c = 0; c < kids; ++c)
      json += std::string(c ? "," : "") + R"({"name":"s)" + std::to_string(s) + "c" + std::to_string(c) +
              R"(","keywords":["w)" + std::to_string(s) + std::to_string(c) + R"("]})";
    json += "]}";
  }
  return parse_taxonomy(json + "]}");
}

HierarchicalModel random_model(const Taxonomy& t, std::size_t d, std::uint64_t seed, double spread = 1.0) {
  auto model = make_model(t, d, 6, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, spread);
  for (auto& c : model.classifiers)
    if (c) {
      for (double& p : c->parameters()) p = g(rng);
      c->mark_trained();
    }
  return model;
}

RowMatrix random_unit_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  RowMatrix x(n, d);
  std::normal_distribution<double> g;
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : x.row(i)) v = g(rng);
    normalize_in_place(x.row(i));
  }
  return x;
}

// Walks every root-to-class path and multiplies conditionals directly.
std::map<NodeIndex, double> brute_force(const HierarchicalModel& m, std::span<const double> x, int level) {
  std::map<NodeIndex, double> out;
  std::function<void(NodeIndex, double)> walk = [&](NodeIndex i, double p) {
    const auto& n = m.taxonomy.node(i);
    if (n.level == level || n.is_leaf()) {
      out[i] = p;
      return;
    }
    if (n.children.size() == 1) return walk(n.children[0], p);
    const auto q = m.classifiers[i]->predict(x);
    for (std::size_t c = 0; c < n.children.size(); ++c) walk(n.children[c], p * q[c]);
  };
  walk(0, 1.0);
  return out;
}

// Two well-separated leaves under each of two parents; encodings cluster by leaf.
struct Clusters {
  Taxonomy taxonomy;
  RowMatrix x;
  std::vector<NodeIndex> truth;
};

Clusters clusters(std::uint64_t seed, std::size_t per_leaf = 60, double noise = 0.25) {
  Clusters c{parse_taxonomy(R"({"name":"r","children":[
      {"name":"A","children":[{"name":"a1","keywords":["x"]},{"name":"a2","keywords":["y"]}]},
      {"name":"B","children":[{"name":"b1","keywords":["z"]},{"name":"b2","keywords":["w"]}]}]})"),
             {}, {}};
  const auto leaves = c.taxonomy.leaves();
  const std::size_t d = 8;
  c.x = RowMatrix(leaves.size() * per_leaf, d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, noise);
  for (std::size_t l = 0; l < leaves.size(); ++l)
    for (std::size_t i = 0; i < per_leaf; ++i) {
      auto row = c.x.row(l * per_leaf + i);
      for (double& v : row) v = g(rng);
      row[l] += 1.0;
      row[4 + l / 2] += 1.0;  // shared parent direction
      normalize_in_place(row);
      c.truth.push_back(leaves[l]);
    }
  return c;
}

// Pretrain each local classifier directly on the encodings with true labels,
// flipping `flip` of them.
HierarchicalModel supervised_model(const Clusters& c, double flip, std::uint64_t seed, std::size_t epochs = 30) {
  auto model = make_model(c.taxonomy, c.x.cols, 8, seed);
  std::mt19937_64 rng(seed);
  for (NodeIndex p : c.taxonomy.classifier_nodes()) {
    const auto& kids = c.taxonomy.node(p).children;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < c.truth.size(); ++i)
      if (c.taxonomy.is_ancestor(p, c.truth[i])) rows.push_back(i);
    RowMatrix x(rows.size(), c.x.cols), y(rows.size(), kids.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::copy_n(c.x.row(rows[r]).begin(), c.x.cols, x.row(r).begin());
      std::size_t child = 0;
      while (!(kids[child] == c.truth[rows[r]] || c.taxonomy.is_ancestor(kids[child], c.truth[rows[r]]))) ++child;
      if (std::uniform_real_distribution<double>()(rng) < flip) child = (child + 1) % kids.size();
      for (std::size_t j = 0; j < kids.size(); ++j) y(r, j) = j == child ? 0.9 : 0.1 / double(kids.size() - 1);
    }
    pretrain(*model.classifiers[p], x, y, {.epochs = epochs, .batch_size = 16, .learning_rate = 0.5, .seed = seed});
  }
  return model;
}

double accuracy_at(const Taxonomy& t, const std::vector<NodeIndex>& assigned, const std::vector<NodeIndex>& truth,
                   int level) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    ok += t.node(assigned[i]).level >= level &&
          t.ancestor_at_level(assigned[i], level) == t.ancestor_at_level(truth[i], level);
  return double(ok) / double(truth.size());
}

}  // namespace

TEST_CASE("ensemble equals the brute-force product of conditionals") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const auto t = random_tree(rng);
    const auto model = random_model(t, 5, 100 + trial);
    const auto x = random_unit_rows(10, 5, rng);
    for (int level = 1; level <= t.max_level(); ++level) {
      const auto pm = ensemble(model, make_global(t, level), x);
      for (std::size_t i = 0; i < x.rows; ++i) {
        const auto oracle = brute_force(model, x.row(i), level);
        REQUIRE(oracle.size() == pm.classes.size());
        double sum = 0.0;
        for (std::size_t j = 0; j < pm.classes.size(); ++j) {
          CHECK(std::abs(pm.y(i, j) - oracle.at(pm.classes[j])) <= 1e-9);
          sum += pm.y(i, j);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-6);
      }
    }
    // The level-1 ensemble is the root's own output.
    if (model.classifiers[0]) {
      const auto pm = ensemble(model, make_global(t, 1), x);
      const auto q = model.classifiers[0]->predict(x.row(0));
      for (std::size_t j = 0; j < q.size(); ++j) CHECK(pm.y(0, j) == q[j]);
    }
  }
}

TEST_CASE("ensemble product rule and untrained members") {
  auto t = parse_taxonomy(R"({"name":"r","children":[{"name":"p","children":[{"name":"c","keywords":["a"]},
      {"name":"e","keywords":["b"]}]},{"name":"q","keywords":["z"]}]})");
  auto model = make_model(t, 2, 3, 1);
  // Zero hidden weights; output biases alone set the conditionals.
  for (auto& c : model.classifiers)
    if (c) std::fill(c->parameters().begin(), c->parameters().end(), 0.0);
  auto& root = *model.classifiers[0];
  auto& p = *model.classifiers[t.index_of("p")];
  const auto bias = [](LocalClassifier& clf, double a, double b) {
    auto& w = clf.parameters();
    w[w.size() - 2] = std::log(a);
    w[w.size() - 1] = std::log(b);
  };
  bias(root, 0.7, 0.3);
  bias(p, 0.6, 0.4);
  const RowMatrix x = rows_of({{1.0, 0.0}});
  CHECK_THROWS_AS(ensemble(model, make_global(t, 2), x), ValidationError);
  root.mark_trained();
  p.mark_trained();
  const auto pm = ensemble(model, make_global(t, 2), x);
  REQUIRE(pm.classes == std::vector<NodeIndex>{t.index_of("c"), t.index_of("e"), t.index_of("q")});
  CHECK(pm.y(0, 0) == doctest::Approx(0.42).epsilon(1e-12));
  CHECK(pm.y(0, 1) == doctest::Approx(0.28).epsilon(1e-12));
  CHECK(pm.y(0, 2) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("self-training targets") {
  const auto t = compute_targets(rows_of({{0.8, 0.2}, {0.6, 0.4}}));
  CHECK(t.frequencies[0] == doctest::Approx(1.4));
  CHECK(t.frequencies[1] == doctest::Approx(0.6));
  // Independent evaluation: (0.64/1.4, 0.04/0.6) and (0.36/1.4, 0.16/0.6), normalised.
  CHECK(t.targets(0, 0) == doctest::Approx(0.87272727).epsilon(1e-6));
  CHECK(t.targets(0, 1) == doctest::Approx(0.12727273).epsilon(1e-6));
  CHECK(t.targets(1, 0) == doctest::Approx(0.49090909).epsilon(1e-6));
  CHECK(t.targets(1, 1) == doctest::Approx(0.50909091).epsilon(1e-6));

  const auto hot = compute_targets(rows_of({{0.0, 1.0, 0.0}, {0.3, 0.3, 0.4}}));
  CHECK(hot.targets(0, 1) == 1.0);
  CHECK(hot.targets(0, 0) == 0.0);
  const auto uni = compute_targets(rows_of({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}));
  for (double v : uni.targets.data) CHECK(v == doctest::Approx(0.5));
  const auto dropped = compute_targets(rows_of({{1.0, 0.0}, {1.0, 0.0}}));
  CHECK(dropped.targets(0, 0) == 1.0);

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    RowMatrix y(7, 4);
    for (std::size_t i = 0; i < 7; ++i) {
      double s = 0.0;
      for (double& v : y.row(i)) s += (v = std::uniform_real_distribution<double>(0.01, 1.0)(rng));
      for (double& v : y.row(i)) v /= s;
    }
    const auto l = compute_targets(y).targets;
    for (std::size_t i = 0; i < 7; ++i) {
      double s = 0.0;
      for (double v : l.row(i)) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-8);
    }
  }
}

TEST_CASE("blocking by normalized entropy") {
  CHECK(should_block(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 0.9));
  const std::vector<double> peaked{0.97, 0.01, 0.01, 0.01};
  CHECK(normalized_entropy(peaked) == doctest::Approx(0.12095).epsilon(1e-4));
  CHECK_FALSE(should_block(peaked, 0.9));
  CHECK_FALSE(should_block(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 1.0));
  CHECK(normalized_entropy(std::vector<double>{1.0, 0.0}) == 0.0);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> q(2 + rng() % 5);
    double s = 0.0;
    for (double& v : q) s += (v = std::exp(std::normal_distribution<double>(0.0, 2.0)(rng)));
    for (double& v : q) v /= s;
    CHECK_FALSE(should_block(q, 1.0));
    const double g1 = std::uniform_real_distribution<double>()(rng), g2 = std::uniform_real_distribution<double>()(rng);
    if (should_block(q, std::max(g1, g2))) CHECK(should_block(q, std::min(g1, g2)));
  }
}

TEST_CASE("joint self-training gradient matches finite differences") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const auto t = random_tree(rng);
    auto model = random_model(t, 4, 300 + trial, 0.7);
    const auto g = make_global(t, t.max_level());
    const auto x = random_unit_rows(5, 4, rng);
    const auto targets = compute_targets(ensemble(model, g, x).y).targets;
    const std::vector<std::size_t> rows{0, 1, 2, 3, 4};
    std::vector<std::vector<double>> grads;
    joint_loss_and_gradient(model, g, x, targets, rows, grads);
    const auto loss = [&] {
      std::vector<std::vector<double>> scratch;
      return joint_loss_and_gradient(model, g, x, targets, rows, scratch);
    };
    for (std::size_t m = 0; m < g.members.size(); ++m) {
      auto& params = model.classifiers[g.members[m]]->parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i], h = 1e-6;
        params[i] = keep + h;
        const double up = loss();
        params[i] = keep - h;
        const double down = loss();
        params[i] = keep;
        const double numeric = (up - down) / (2 * h);
        CHECK(std::abs(numeric - grads[m][i]) <= 1e-4 * std::max(1.0, std::abs(numeric)));
      }
    }
  }
}

TEST_CASE("self-training stopping rule") {
  const auto c = clusters(1);
  auto model = supervised_model(c, 0.0, 1);
  const auto g = make_global(c.taxonomy, 2);

  auto once = model;
  const auto r100 = self_train(once, g, c.x, {.delta = 100.0, .max_rounds = 20});
  CHECK(r100.rounds == 1);
  CHECK(r100.converged);

  const auto first = self_train(model, g, c.x, {.delta = 0.1, .max_rounds = 50, .batch_size = 32});
  REQUIRE(first.converged);
  CHECK(first.changed_fraction.back() * 100.0 < 0.1);
  // A converged model stops after one pass with no changes.
  const auto again = self_train(model, g, c.x, {.delta = 0.1, .max_rounds = 50, .batch_size = 32});
  CHECK(again.rounds == 1);
  REQUIRE(again.changed_fraction.size() == 1);
  CHECK(again.changed_fraction[0] == 0.0);

  auto capped = supervised_model(c, 0.3, 2, 2);
  const auto r = self_train(capped, g, c.x, {.delta = 1e-9, .max_rounds = 3});
  CHECK(r.rounds <= 3);
}

TEST_CASE("self-training aborts on a non-finite loss") {
  const auto c = clusters(4);
  auto model = supervised_model(c, 0.0, 4);
  const auto g = make_global(c.taxonomy, 2);
  model.classifiers[0]->parameters().back() = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(self_train(model, g, c.x, {.delta = 1e-9, .max_rounds = 20}), std::runtime_error);
}

TEST_CASE("self-training observer reports the change statistic") {
  const auto c = clusters(3);
  auto model = supervised_model(c, 0.2, 3, 3);
  const auto g = make_global(c.taxonomy, 1);
  std::vector<std::size_t> docs(c.x.rows);
  std::iota(docs.begin(), docs.end(), 0);
  std::vector<NodeIndex> previous;
  std::size_t calls = 0;
  self_train(model, g, c.x, {.max_rounds = 10, .gamma = 0.9}, docs, [&](const RoundStats& s) {
    CHECK(s.round == calls++);
    CHECK(s.documents.size() == c.x.rows);
    CHECK(s.mean_entropy >= 0.0);
    CHECK(s.mean_entropy <= 1.0);
    if (!previous.empty()) {
      std::size_t flips = 0;
      for (std::size_t i = 0; i < previous.size(); ++i) flips += previous[i] != s.assignment[i];
      REQUIRE(s.changed_fraction);
      CHECK(*s.changed_fraction == double(flips) / double(previous.size()));
    } else {
      CHECK_FALSE(s.changed_fraction);
    }
    previous = s.assignment;
  });
  CHECK(calls >= 2);
}

TEST_CASE("self-training does not hurt a noisy pre-trained model (5-seed median)") {
  std::vector<double> before, after;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto c = clusters(10 + seed, 80, 0.35);
    auto model = supervised_model(c, 0.35, seed, 3);
    const auto g = make_global(c.taxonomy, 1);
    const auto level1 = [&] {
      const auto pm = ensemble(model, g, c.x);
      std::vector<NodeIndex> a;
      for (std::size_t i = 0; i < c.x.rows; ++i)
        a.push_back(pm.classes[std::size_t(std::max_element(pm.y.row(i).begin(), pm.y.row(i).end()) - pm.y.row(i).begin())]);
      return accuracy_at(c.taxonomy, a, c.truth, 1);
    };
    before.push_back(level1());
    self_train(model, g, c.x, {.batch_size = 32});
    after.push_back(level1());
  }
  std::sort(before.begin(), before.end());
  std::sort(after.begin(), after.end());
  CHECK(after[2] >= before[2]);
}

TEST_CASE("level loop partitions documents") {
  const auto c = clusters(4);
  for (bool global : {true, false})
    for (double gamma : {0.3, 0.9, 1.0}) {
      auto model = supervised_model(c, 0.0, 4, 5);
      std::set<std::size_t> blocked_at_1;
      bool leaked = false;
      TrainOptions opts;
      opts.gamma = gamma;
      opts.global = global;
      opts.self.batch_size = 32;
      const auto result = self_train_levels(model, c.x, opts, [&](const RoundStats& s) {
        if (s.level == 2 && s.top == 0)
          for (std::size_t d : s.documents) leaked = leaked || blocked_at_1.contains(d);
      });
      REQUIRE(result.assignments.size() == c.x.rows);
      std::size_t blocked = 0;
      for (std::size_t i = 0; i < result.assignments.size(); ++i) {
        const auto& a = result.assignments[i];
        CHECK(a.document == i);
        CHECK(a.level == c.taxonomy.node(a.node).level);
        if (a.blocked) {
          ++blocked;
          CHECK_FALSE(c.taxonomy.node(a.node).is_leaf());
        } else {
          CHECK(c.taxonomy.node(a.node).is_leaf());
        }
      }
      std::size_t logged = 0;
      for (const auto& l : result.levels) logged += l.blocked;
      CHECK(logged == blocked);
      CHECK_FALSE(leaked);
      if (gamma == 1.0) CHECK(blocked == 0);
    }
}

TEST_CASE("blocked documents leave the active set") {
  const auto c = clusters(6);
  auto model = supervised_model(c, 0.0, 6, 5);
  // Make half of the documents ambiguous at the root by zeroing their encodings.
  auto x = c.x;
  for (std::size_t i = 0; i < x.rows; i += 2) std::fill(x.row(i).begin(), x.row(i).end(), 0.0);
  // Zero both biases of the root: a zero input then gives a uniform root output.
  auto& root = *model.classifiers[0];
  auto& w = root.parameters();
  const std::size_t b1 = root.hidden_dim() * root.input_dim();
  std::fill(w.begin() + std::ptrdiff_t(b1), w.begin() + std::ptrdiff_t(b1 + root.hidden_dim()), 0.0);
  std::fill(w.end() - 2, w.end(), 0.0);
  TrainOptions opts;
  opts.gamma = 0.9;
  opts.self_train = false;
  const auto result = self_train_levels(model, x, opts);
  for (std::size_t i = 0; i < x.rows; i += 2) {
    CHECK(result.assignments[i].blocked);
    CHECK(result.assignments[i].node == 0);
  }
  CHECK(result.levels[0].blocked >= x.rows / 2);
  CHECK(result.levels[1].active == x.rows - result.levels[0].blocked);
}

TEST_CASE("one-level taxonomy runs a single classifier") {
  const auto t = parse_taxonomy(R"({"name":"r","children":[{"name":"a","keywords":["x"]},{"name":"b","keywords":["y"]}]})");
  auto model = random_model(t, 3, 9);
  std::mt19937_64 rng(1);
  const auto x = random_unit_rows(40, 3, rng);
  TrainOptions opts;
  opts.gamma = 1.0;
  const auto r = self_train_levels(model, x, opts);
  CHECK(r.levels.size() == 1);
  for (const auto& a : r.assignments) CHECK(a.level == 1);
}

TEST_CASE("predict") {
  const auto c = clusters(7);
  auto model = supervised_model(c, 0.0, 7, 5);
  TrainOptions opts;
  opts.gamma = 1.0;
  opts.self.batch_size = 32;
  const auto trained = self_train_levels(model, c.x, opts);
  const auto frozen = model.classifiers;
  const auto p = predict(model, c.x, 1.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p[i].node == trained.assignments[i].node);
    CHECK_FALSE(p[i].blocked);
  }
  CHECK(predict(model, c.x, 1.0, true, true)[5].node == p[5].node);
  for (std::size_t n = 0; n < frozen.size(); ++n)
    if (frozen[n]) CHECK(frozen[n]->parameters() == model.classifiers[n]->parameters());

  // Uniform root output blocks at the root.
  RowMatrix zero(1, c.x.cols);
  auto& root = *model.classifiers[0];
  auto& w = root.parameters();
  const std::size_t b1 = root.hidden_dim() * root.input_dim();
  std::fill(w.begin() + std::ptrdiff_t(b1), w.begin() + std::ptrdiff_t(b1 + root.hidden_dim()), 0.0);
  std::fill(w.end() - 2, w.end(), 0.0);
  const auto blocked = predict(model, zero, 0.9);
  CHECK(blocked[0].blocked);
  CHECK(blocked[0].node == 0);
  const auto greedy = predict(model, zero, 0.9, false);
  CHECK(greedy[0].node == 0);
  CHECK_THROWS_AS(predict(model, zero, 1.2), ValidationError);
}
