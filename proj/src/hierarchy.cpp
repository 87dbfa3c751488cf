#include "weakhier/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "weakhier/error.hpp"
#include "weakhier/kernels.hpp"

namespace weakhier {

HierarchicalModel make_model(const Taxonomy& taxonomy, std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
  HierarchicalModel model{taxonomy, std::vector<std::optional<LocalClassifier>>(taxonomy.size())};
  for (NodeIndex i : taxonomy.classifier_nodes())
    model.classifiers[i].emplace(i, taxonomy.node(i).children.size(), input_dim, hidden, seed + 7919 * i);
  return model;
}

GlobalClassifier make_global(const Taxonomy& taxonomy, int level, NodeIndex top) {
  const auto& t = taxonomy.node(top);
  if (t.level >= level) throw ValidationError("global classifier level must be below its top class");
  GlobalClassifier g{top, level, {}, {}};
  for (NodeIndex i = 0; i < taxonomy.size(); ++i) {
    if (i != top && !taxonomy.is_ancestor(top, i)) continue;
    const auto& n = taxonomy.node(i);
    if (i != top && (n.level == level || (n.is_leaf() && n.level < level))) g.classes.push_back(i);
    if (n.level < level && n.children.size() >= 2) g.members.push_back(i);
  }
  return g;
}

namespace {

struct Edge {
  std::size_t member;
  std::size_t child;
};

// For each class, the (member, child position) factors on its path below `top`.
std::vector<std::vector<Edge>> plan_paths(const Taxonomy& taxonomy, const GlobalClassifier& g) {
  std::unordered_map<NodeIndex, std::size_t> pos;
  for (std::size_t m = 0; m < g.members.size(); ++m) pos[g.members[m]] = m;
  std::vector<std::vector<Edge>> paths(g.classes.size());
  const int top_level = taxonomy.node(g.top).level;
  for (std::size_t j = 0; j < g.classes.size(); ++j) {
    const auto path = taxonomy.path_from_root(g.classes[j]);
    for (std::size_t s = std::size_t(top_level); s + 1 < path.size(); ++s) {
      const auto it = pos.find(path[s]);
      if (it == pos.end()) continue;  // single child: factor 1
      const auto& kids = taxonomy.node(path[s]).children;
      const auto c = std::size_t(std::find(kids.begin(), kids.end(), path[s + 1]) - kids.begin());
      paths[j].push_back({it->second, c});
    }
  }
  return paths;
}

struct Forward {
  std::vector<std::vector<double>> hidden;
  std::vector<std::vector<double>> out;  // softmax per member
};

void forward(const HierarchicalModel& model, const GlobalClassifier& g, std::span<const double> x, Forward& f) {
  f.hidden.resize(g.members.size());
  f.out.resize(g.members.size());
  for (std::size_t m = 0; m < g.members.size(); ++m) {
    const auto& clf = *model.classifiers[g.members[m]];
    f.hidden[m].resize(clf.hidden_dim());
    f.out[m].resize(clf.num_children());
    clf.logits(x, f.hidden[m], f.out[m]);
    softmax(f.out[m]);
  }
}

void combine(const std::vector<std::vector<Edge>>& paths, const Forward& f, std::span<double> y) {
  for (std::size_t j = 0; j < paths.size(); ++j) {
    double p = 1.0;
    for (const auto& e : paths[j]) p *= f.out[e.member][e.child];
    y[j] = p;
  }
}

std::size_t argmax(std::span<const double> v) {
  return std::size_t(std::max_element(v.begin(), v.end()) - v.begin());
}

void check_members(const HierarchicalModel& model, const GlobalClassifier& g) {
  for (NodeIndex p : g.members) {
    const auto& clf = model.classifiers.at(p);
    if (!clf) throw ValidationError("no local classifier for class '" + model.taxonomy.node(p).id + "'");
    if (!clf->trained())
      throw ValidationError("local classifier for class '" + model.taxonomy.node(p).id + "' is untrained");
  }
}

RowMatrix gather(const RowMatrix& x, std::span<const std::size_t> rows) {
  RowMatrix out(rows.size(), x.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(x.row(rows[r]).begin(), x.cols, out.row(r).begin());
  return out;
}

}  // namespace

// A nearly uniform start has a tiny first-round loss that grows as predictions
// sharpen; ten times this floor (0.5 nats) is the smallest loss read as divergence.
constexpr double kDivergenceFloor = 0.05;

std::uint64_t node_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

PredictionMatrix ensemble(const HierarchicalModel& model, const GlobalClassifier& global, const RowMatrix& encodings,
                          bool parallel) {
  check_members(model, global);
  const auto paths = plan_paths(model.taxonomy, global);
  PredictionMatrix pm{global.classes, RowMatrix(encodings.rows, global.classes.size())};
  kernels::map_rows(parallel, encodings.rows, [&](std::size_t i) {
    Forward f;
    forward(model, global, encodings.row(i), f);
    combine(paths, f, pm.y.row(i));
  });
  return pm;
}

TargetDistribution compute_targets(const RowMatrix& y) {
  TargetDistribution t{RowMatrix(y.rows, y.cols), std::vector<double>(y.cols, 0.0)};
  for (std::size_t i = 0; i < y.rows; ++i)
    for (std::size_t j = 0; j < y.cols; ++j) t.frequencies[j] += y(i, j);
  for (std::size_t j = 0; j < y.cols; ++j)
    if (t.frequencies[j] <= 0.0) spdlog::warn("compute_targets: class column {} has zero soft frequency; dropped", j);
  for (std::size_t i = 0; i < y.rows; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < y.cols; ++j) {
      const double v = t.frequencies[j] > 0.0 ? y(i, j) * y(i, j) / t.frequencies[j] : 0.0;
      t.targets(i, j) = v;
      z += v;
    }
    if (z <= 0.0) throw ValidationError("compute_targets: row " + std::to_string(i) + " has no mass");
    for (std::size_t j = 0; j < y.cols; ++j) t.targets(i, j) /= z;
  }
  return t;
}

double normalized_entropy(std::span<const double> q) {
  if (q.size() < 2) throw ValidationError("normalized entropy needs m >= 2");
  double h = 0.0;
  for (double p : q)
    if (p > 0.0) h -= p * std::log(p);
  return h / std::log(double(q.size()));
}

bool should_block(std::span<const double> q, double gamma) { return normalized_entropy(q) > gamma; }

double joint_loss_and_gradient(const HierarchicalModel& model, const GlobalClassifier& global,
                               const RowMatrix& encodings, const RowMatrix& targets,
                               std::span<const std::size_t> rows, std::vector<std::vector<double>>& grads) {
  const auto paths = plan_paths(model.taxonomy, global);
  const std::size_t members = global.members.size();
  grads.resize(members);
  for (std::size_t m = 0; m < members; ++m)
    grads[m].assign(model.classifiers[global.members[m]]->parameters().size(), 0.0);
  const double scale = 1.0 / double(rows.size());
  Forward f;
  std::vector<double> y(global.classes.size()), mass(members);
  std::vector<std::vector<double>> by_child(members);
  double loss = 0.0;
  for (std::size_t i : rows) {
    forward(model, global, encodings.row(i), f);
    combine(paths, f, y);
    loss += kl_divergence(targets.row(i), y);
    std::fill(mass.begin(), mass.end(), 0.0);
    for (std::size_t m = 0; m < members; ++m) by_child[m].assign(f.out[m].size(), 0.0);
    for (std::size_t j = 0; j < paths.size(); ++j) {
      const double l = targets(i, j);
      if (l == 0.0) continue;
      for (const auto& e : paths[j]) {
        mass[e.member] += l;
        by_child[e.member][e.child] += l;
      }
    }
    // d/dz_p of -sum_j l_j log y_j = L_p s_p - L_{p,c}
    for (std::size_t m = 0; m < members; ++m) {
      if (mass[m] == 0.0) continue;
      auto& d = by_child[m];
      for (std::size_t c = 0; c < d.size(); ++c) d[c] = (mass[m] * f.out[m][c] - d[c]) * scale;
      model.classifiers[global.members[m]]->backward(encodings.row(i), f.hidden[m], d, grads[m]);
    }
  }
  return loss * scale;
}

SelfTrainReport self_train(HierarchicalModel& model, const GlobalClassifier& global, const RowMatrix& encodings,
                           const SelfTrainOptions& options, std::span<const std::size_t> documents,
                           const RoundObserver& observer) {
  SelfTrainReport report;
  if (global.members.empty() || encodings.rows == 0) return report;
  check_members(model, global);
  if (!(options.delta > 0.0)) throw ValidationError("self_train: delta must be > 0");
  if (options.batch_size == 0) throw ValidationError("self_train: batch size must be >= 1");

  const std::size_t n = encodings.rows, k = global.classes.size();
  const auto paths = plan_paths(model.taxonomy, global);
  std::vector<std::size_t> deciding(k, SIZE_MAX);  // member whose output picks the class
  for (std::size_t j = 0; j < k; ++j)
    if (!paths[j].empty()) deciding[j] = paths[j].back().member;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options.seed);
  std::vector<NodeIndex> previous;
  double initial_loss = 0.0;
  bool warned_collapse = false;
  RowMatrix y(n, k);
  std::vector<double> entropy(n, 0.0);
  std::vector<char> blocks(n, 0), has_entropy(n, 0);

  std::vector<std::vector<double>> grads;

  for (std::size_t round = 0;; ++round) {
    kernels::map_rows(options.parallel, n, [&](std::size_t i) {
      Forward f;
      forward(model, global, encodings.row(i), f);
      combine(paths, f, y.row(i));
      const std::size_t dm = deciding[argmax(y.row(i))];
      has_entropy[i] = dm != SIZE_MAX;
      if (has_entropy[i]) {
        entropy[i] = normalized_entropy(f.out[dm]);
        blocks[i] = entropy[i] > options.gamma;
      }
    });

    RoundStats stats;
    stats.level = global.level;
    stats.top = global.top;
    stats.round = round;
    stats.documents = documents;
    stats.assignment.resize(n);
    for (std::size_t i = 0; i < n; ++i) stats.assignment[i] = global.classes[argmax(y.row(i))];
    std::size_t with_entropy = 0;
    double entropy_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (has_entropy[i]) {
        ++with_entropy;
        entropy_sum += entropy[i];
        stats.would_block += blocks[i];
      }
    stats.mean_entropy = with_entropy ? entropy_sum / double(with_entropy) : 0.0;

    if (!std::all_of(y.data.begin(), y.data.end(), [](double v) { return std::isfinite(v); }))
      throw std::runtime_error("self_train diverged at level " + std::to_string(global.level) + ", round " +
                               std::to_string(round) + ": non-finite predictions; lower the self-training learning rate");
    const auto targets = compute_targets(y).targets;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) loss += kl_divergence(targets.row(i), y.row(i));
    stats.loss = loss / double(n);
    if (round == 0) initial_loss = stats.loss;
    if (!std::isfinite(stats.loss) || stats.loss > 10.0 * std::max(initial_loss, kDivergenceFloor))
      throw std::runtime_error("self_train diverged at level " + std::to_string(global.level) + ", round " +
                               std::to_string(round) + ": loss " + std::to_string(stats.loss) + " vs initial " +
                               std::to_string(initial_loss) + "; lower the self-training learning rate");

    if (!previous.empty()) {
      std::size_t changed = 0;
      for (std::size_t i = 0; i < n; ++i) changed += previous[i] != stats.assignment[i];
      stats.changed_fraction = double(changed) / double(n);
      report.changed_fraction.push_back(*stats.changed_fraction);
    }
    report.loss.push_back(stats.loss);
    report.mean_entropy.push_back(stats.mean_entropy);
    if (!warned_collapse && round > 0 && n > 1 && global.classes.size() > 1 &&
        std::all_of(stats.assignment.begin(), stats.assignment.end(),
                    [&](NodeIndex a) { return a == stats.assignment[0]; })) {
      spdlog::warn("self_train level {} round {}: every document sits in one class; the learning rate may be too high",
                   global.level, round);
      warned_collapse = true;
    }
    if (observer) observer(stats);

    if (stats.changed_fraction && (*stats.changed_fraction * 100.0 < options.delta || options.delta >= 100.0)) {
      report.converged = true;
      break;
    }
    if (round == options.max_rounds) break;

    // One pass of joint SGD against the frozen targets.
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t len = std::min(options.batch_size, n - start);
      joint_loss_and_gradient(model, global, encodings, targets, std::span(order).subspan(start, len), grads);
      for (std::size_t m = 0; m < global.members.size(); ++m) {
        auto& p = model.classifiers[global.members[m]]->parameters();
        for (std::size_t q = 0; q < p.size(); ++q) p[q] -= options.learning_rate * grads[m][q];
      }
    }
    ++report.rounds;
    previous = stats.assignment;
  }
  return report;
}

void pretrain_node(HierarchicalModel& model, NodeIndex node, const PseudoTrainingSet& set,
                   const EmbeddingTable& table, const PretrainOptions& options) {
  auto& clf = model.classifiers.at(node);
  if (!clf) throw ValidationError("class '" + model.taxonomy.node(node).id + "' has no local classifier");
  std::vector<std::span<const TokenId>> docs;
  docs.reserve(set.documents.size());
  for (const auto& d : set.documents) docs.emplace_back(d.tokens);
  const auto inputs = encode_documents(docs, table);
  RowMatrix labels(set.labels.size(), clf->num_children());
  for (std::size_t r = 0; r < set.labels.size(); ++r) {
    if (set.labels[r].size() != labels.cols) throw ValidationError("pseudo label width does not match children");
    std::copy(set.labels[r].begin(), set.labels[r].end(), labels.row(r).begin());
  }
  const auto report = pretrain(*clf, inputs, labels, options);
  spdlog::debug("pretrain '{}': KL {:.4f} -> {:.4f}", model.taxonomy.node(node).id, report.initial_loss,
                report.epoch_loss.empty() ? report.initial_loss : report.epoch_loss.back());
}

HierarchicalModel pretrain_all(const TrainingInputs& inputs, const TrainOptions& options) {
  auto model = make_model(inputs.taxonomy, inputs.table.dim(), options.hidden, options.seed);
  for (NodeIndex node : inputs.taxonomy.classifier_nodes()) {
    auto pseudo = options.pseudo;
    pseudo.seed = node_seed(options.pseudo.seed, node);
    const auto set = generate_training_set(inputs.taxonomy, node, inputs.mixtures, inputs.keywords, inputs.lm,
                                           inputs.table, pseudo);
    auto pre = options.pretrain;
    pre.seed = node_seed(options.pretrain.seed, node);
    pretrain_node(model, node, set, inputs.table, pre);
  }
  return model;
}

namespace {

SelfTrainingResult levels_global(HierarchicalModel& model, const RowMatrix& encodings, const TrainOptions& options,
                                 const RoundObserver& observer) {
  const auto& tax = model.taxonomy;
  SelfTrainingResult result;
  std::vector<std::optional<ClassAssignment>> assigned(encodings.rows);
  std::vector<std::size_t> active(encodings.rows);
  std::iota(active.begin(), active.end(), 0);

  for (int k = 0; k < tax.max_level(); ++k) {
    LevelLog log{k, active.size(), 0, 0};
    if (active.empty()) {
      result.levels.push_back(log);
      continue;
    }
    const auto g = make_global(tax, k + 1);
    const auto x = gather(encodings, active);
    if (options.self_train) {
      auto self = options.self;
      self.gamma = options.gamma;
      self.seed = node_seed(options.self.seed, std::uint64_t(k));
      log.rounds = self_train(model, g, x, self, active, observer).rounds;
      result.total_rounds += log.rounds;
    }
    const auto pm = ensemble(model, g, x, options.self.parallel);
    std::vector<std::size_t> next;
    for (std::size_t r = 0; r < active.size(); ++r) {
      const std::size_t doc = active[r];
      const NodeIndex j = pm.classes[argmax(pm.y.row(r))];
      const auto& cj = tax.node(j);
      if (cj.level <= k) {  // a leaf above this level
        assigned[doc] = ClassAssignment{doc, j, cj.level, false};
        continue;
      }
      const NodeIndex p = tax.ancestor_at_level(j, k);
      const auto& clf = model.classifiers[p];
      if (clf && should_block(clf->predict(x.row(r)), options.gamma)) {
        assigned[doc] = ClassAssignment{doc, p, k, true};
        ++log.blocked;
        continue;
      }
      if (k + 1 == tax.max_level() || cj.is_leaf()) assigned[doc] = ClassAssignment{doc, j, cj.level, false};
      else next.push_back(doc);
    }
    active = std::move(next);
    result.levels.push_back(log);
  }
  for (auto& a : assigned) result.assignments.push_back(*a);
  return result;
}

SelfTrainingResult levels_greedy(HierarchicalModel& model, const RowMatrix& encodings, const TrainOptions& options,
                                 const RoundObserver& observer) {
  const auto& tax = model.taxonomy;
  SelfTrainingResult result;
  std::vector<std::optional<ClassAssignment>> assigned(encodings.rows);
  std::vector<NodeIndex> at(encodings.rows, tax.root());

  for (int k = 0; k < tax.max_level(); ++k) {
    LevelLog log{k, 0, 0, 0};
    for (NodeIndex p : tax.nodes_at_level(k)) {
      const auto& node = tax.node(p);
      if (node.is_leaf()) continue;
      std::vector<std::size_t> docs;
      for (std::size_t i = 0; i < at.size(); ++i)
        if (!assigned[i] && at[i] == p) docs.push_back(i);
      log.active += docs.size();
      if (docs.empty()) continue;
      if (node.children.size() == 1) {
        for (std::size_t i : docs) at[i] = node.children[0];
      } else {
        const auto x = gather(encodings, docs);
        if (options.self_train) {
          auto self = options.self;
          self.gamma = options.gamma;
          self.seed = node_seed(options.self.seed, p);
          log.rounds += self_train(model, make_global(tax, k + 1, p), x, self, docs, observer).rounds;
        }
        const auto& clf = *model.classifiers[p];
        for (std::size_t r = 0; r < docs.size(); ++r) {
          const auto q = clf.predict(x.row(r));
          if (should_block(q, options.gamma)) {
            assigned[docs[r]] = ClassAssignment{docs[r], p, k, true};
            ++log.blocked;
          } else {
            at[docs[r]] = node.children[argmax(q)];
          }
        }
      }
      for (std::size_t i : docs)
        if (!assigned[i] && tax.node(at[i]).is_leaf())
          assigned[i] = ClassAssignment{i, at[i], tax.node(at[i]).level, false};
    }
    result.total_rounds += log.rounds;
    result.levels.push_back(log);
  }
  for (auto& a : assigned) result.assignments.push_back(*a);
  return result;
}

}  // namespace

SelfTrainingResult self_train_levels(HierarchicalModel& model, const RowMatrix& encodings,
                                     const TrainOptions& options, const RoundObserver& observer) {
  if (!(options.gamma >= 0.0 && options.gamma <= 1.0)) throw ValidationError("gamma must be in [0, 1]");
  return options.global ? levels_global(model, encodings, options, observer)
                        : levels_greedy(model, encodings, options, observer);
}

TrainResult train_all(const TrainingInputs& inputs, const RowMatrix& encodings, const TrainOptions& options,
                      const RoundObserver& observer) {
  // Pre-training a node depends only on its own pseudo documents, and level-k
  // self-training touches classifiers above level k + 1 only, so pre-training
  // every node up front is the same as interleaving it with the level loop.
  TrainResult out{pretrain_all(inputs, options), {}};
  out.result = self_train_levels(out.model, encodings, options, observer);
  return out;
}

std::vector<ClassAssignment> predict(const HierarchicalModel& model, const RowMatrix& encodings, double gamma,
                                     bool global, bool parallel) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must be in [0, 1]");
  const auto& tax = model.taxonomy;
  std::vector<ClassAssignment> out(encodings.rows);
  if (!global) {
    kernels::map_rows(parallel, encodings.rows, [&](std::size_t i) {
      NodeIndex at = tax.root();
      bool blocked = false;
      while (!tax.node(at).is_leaf() && !blocked) {
        const auto& node = tax.node(at);
        if (node.children.size() == 1) {
          at = node.children[0];
          continue;
        }
        const auto q = model.classifiers[at]->predict(encodings.row(i));
        if (should_block(q, gamma)) blocked = true;
        else at = node.children[argmax(q)];
      }
      out[i] = {i, at, tax.node(at).level, blocked};
    });
    return out;
  }

  std::vector<char> done(encodings.rows, 0);
  for (int k = 0; k < tax.max_level(); ++k) {
    const auto g = make_global(tax, k + 1);
    const auto pm = ensemble(model, g, encodings, parallel);
    kernels::map_rows(parallel, encodings.rows, [&](std::size_t i) {
      if (done[i]) return;
      const NodeIndex j = pm.classes[argmax(pm.y.row(i))];
      const auto& cj = tax.node(j);
      if (cj.level <= k) {
        out[i] = {i, j, cj.level, false};
        done[i] = 1;
        return;
      }
      const NodeIndex p = tax.ancestor_at_level(j, k);
      const auto& clf = model.classifiers[p];
      if (clf && should_block(clf->predict(encodings.row(i)), gamma)) {
        out[i] = {i, p, k, true};
        done[i] = 1;
      } else if (k + 1 == tax.max_level() || cj.is_leaf()) {
        out[i] = {i, j, cj.level, false};
        done[i] = 1;
      }
    });
  }
  return out;
}

}  // namespace weakhier
