#pragma once

// Data-parallel inner loops. Each kernel has a serial reference and an OpenMP
// variant; the OpenMP variant partitions rows only, so both produce bitwise
// identical outputs. Reductions across rows are always done serially in row
// order by the callers.

#include <cstddef>
#include <span>
#include <vector>

#include "weakhier/matrix.hpp"

namespace weakhier::kernels {

/// Per-component constants of a movMF: log(alpha_h) + log c_d(kappa_h), kappa_h, mu_h.
struct MixtureTerms {
  std::vector<double> log_prefactor;
  std::vector<double> kappa;
  RowMatrix means;  // m x d
};

/// E-step. Fills `resp` (n x m) with posterior responsibilities and returns the
/// per-point log-likelihood.
std::vector<double> estep_serial(const RowMatrix& points, const MixtureTerms& terms, RowMatrix& resp);
std::vector<double> estep_parallel(const RowMatrix& points, const MixtureTerms& terms, RowMatrix& resp);

/// scores[i] = <table.row(i), query>.
void cosine_scores_serial(const RowMatrix& table, std::span<const double> query, std::span<double> scores);
void cosine_scores_parallel(const RowMatrix& table, std::span<const double> query, std::span<double> scores);

/// out.row(i) = row_fn(i) for every row; used for prediction matrices.
template <class RowFn>
void map_rows_serial(std::size_t n, RowFn&& row_fn) {
  for (std::size_t i = 0; i < n; ++i) row_fn(i);
}

template <class RowFn>
void map_rows_parallel(std::size_t n, RowFn&& row_fn) {
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) row_fn(static_cast<std::size_t>(i));
}

template <class RowFn>
void map_rows(bool parallel, std::size_t n, RowFn&& row_fn) {
  if (parallel) map_rows_parallel(n, row_fn);
  else map_rows_serial(n, row_fn);
}

}  // namespace weakhier::kernels
