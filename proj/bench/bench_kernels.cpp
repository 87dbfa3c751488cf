// Serial reference vs OpenMP variant for each data-parallel kernel. Prints
// one line per kernel with both timings, the speedup and whether the outputs
// agree bitwise.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

#include <omp.h>

#include "weakhier/hierarchy.hpp"
#include "weakhier/kernels.hpp"
#include "weakhier/vmf.hpp"

using namespace weakhier;

namespace {

RowMatrix random_unit_rows(std::size_t n, std::size_t d, Rng& rng) {
  std::normal_distribution<double> g;
  RowMatrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (auto& v : m.row(i)) {
      v = g(rng);
      s += v * v;
    }
    for (auto& v : m.row(i)) v /= std::sqrt(s);
  }
  return m;
}

// Best of `reps` wall-clock runs, in milliseconds.
double time_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, double serial, double parallel, bool same) {
  std::printf("%-14s %10.2f %10.2f %8.2fx   %s\n", name, serial, parallel, serial / parallel,
              same ? "identical" : "DIFFERENT");
}

}  // namespace

int main() {
  Rng rng(7);
  const int reps = 5;
  std::printf("threads %d\n", omp_get_max_threads());
  std::printf("%-14s %10s %10s %9s   %s\n", "kernel", "serial ms", "omp ms", "speedup", "outputs");

  {
    const std::size_t n = 200000, d = 100, m = 8;
    const auto points = random_unit_rows(n, d, rng);
    kernels::MixtureTerms terms{std::vector<double>(m, -1.0), std::vector<double>(m, 30.0), random_unit_rows(m, d, rng)};
    RowMatrix a, b;
    std::vector<double> la, lb;
    const double ts = time_ms(reps, [&] { la = kernels::estep_serial(points, terms, a); });
    const double tp = time_ms(reps, [&] { lb = kernels::estep_parallel(points, terms, b); });
    row("estep", ts, tp, la == lb && a.data == b.data);
  }
  {
    const std::size_t n = 500000, d = 100;
    const auto table = random_unit_rows(n, d, rng);
    const auto query = random_unit_rows(1, d, rng);
    std::vector<double> a(n), b(n);
    const double ts = time_ms(reps, [&] { kernels::cosine_scores_serial(table, query.row(0), a); });
    const double tp = time_ms(reps, [&] { kernels::cosine_scores_parallel(table, query.row(0), b); });
    row("cosine_scores", ts, tp, a == b);
  }
  {
    // Three-level tree, 3 x 3 x 2 classes, over 20000 documents.
    std::vector<ClassNode> nodes{{"root", std::nullopt, {}, {}, 0}};
    const auto add = [&](const std::string& id, NodeIndex parent, int level) {
      nodes.push_back({id, parent, {}, {}, level});
      nodes[parent].children.push_back(nodes.size() - 1);
      return nodes.size() - 1;
    };
    for (int a = 0; a < 3; ++a) {
      const auto pa = add("a" + std::to_string(a), 0, 1);
      for (int b = 0; b < 3; ++b) {
        const auto pb = add("a" + std::to_string(a) + "b" + std::to_string(b), pa, 2);
        for (int c = 0; c < 2; ++c) {
          const auto leaf = add(nodes[pb].id + "c" + std::to_string(c), pb, 3);
          nodes[leaf].supervision = {SupervisionMode::kKeywords, {nodes[leaf].id}};
        }
      }
    }
    const Taxonomy tax(std::move(nodes));
    auto model = make_model(tax, 100, 64, 3);
    for (auto& c : model.classifiers)
      if (c) {
        for (auto& p : c->parameters()) p += 0.01;
        c->mark_trained();
      }
    const auto x = random_unit_rows(20000, 100, rng);
    const auto g = make_global(tax, 3);
    PredictionMatrix a, b;
    const double ts = time_ms(reps, [&] { a = ensemble(model, g, x, false); });
    const double tp = time_ms(reps, [&] { b = ensemble(model, g, x, true); });
    row("ensemble", ts, tp, a.y.data == b.y.data);
  }
  return 0;
}
