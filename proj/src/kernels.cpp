#include "weakhier/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace weakhier::kernels {

namespace {

double estep_row(std::span<const double> x, const MixtureTerms& terms, std::span<double> out) {
  const std::size_t m = terms.kappa.size();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h < m; ++h) {
    out[h] = terms.log_prefactor[h] + terms.kappa[h] * dot(terms.means.row(h), x);
    best = std::max(best, out[h]);
  }
  double total = 0.0;
  for (std::size_t h = 0; h < m; ++h) {
    out[h] = std::exp(out[h] - best);
    total += out[h];
  }
  for (std::size_t h = 0; h < m; ++h) out[h] /= total;
  return best + std::log(total);
}

}  // namespace

std::vector<double> estep_serial(const RowMatrix& points, const MixtureTerms& terms, RowMatrix& resp) {
  resp = RowMatrix(points.rows, terms.kappa.size());
  std::vector<double> ll(points.rows);
  for (std::size_t i = 0; i < points.rows; ++i) ll[i] = estep_row(points.row(i), terms, resp.row(i));
  return ll;
}

std::vector<double> estep_parallel(const RowMatrix& points, const MixtureTerms& terms, RowMatrix& resp) {
  resp = RowMatrix(points.rows, terms.kappa.size());
  std::vector<double> ll(points.rows);
  const auto n = static_cast<std::ptrdiff_t>(points.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    ll[r] = estep_row(points.row(r), terms, resp.row(r));
  }
  return ll;
}

void cosine_scores_serial(const RowMatrix& table, std::span<const double> query, std::span<double> scores) {
  for (std::size_t i = 0; i < table.rows; ++i) scores[i] = dot(table.row(i), query);
}

void cosine_scores_parallel(const RowMatrix& table, std::span<const double> query, std::span<double> scores) {
  const auto n = static_cast<std::ptrdiff_t>(table.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    scores[r] = dot(table.row(r), query);
  }
}

}  // namespace weakhier::kernels
