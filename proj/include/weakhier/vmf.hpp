#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "weakhier/matrix.hpp"

namespace weakhier {

using Rng = std::mt19937_64;

inline constexpr double kMaxKappa = 1e4;

struct VonMisesFisher {
  std::vector<double> mean;  // unit norm
  double kappa = 0.0;

  std::size_t dim() const { return mean.size(); }
};

struct MovMFMixture {
  std::vector<double> weights;
  std::vector<VonMisesFisher> components;

  std::size_t size() const { return components.size(); }
  std::size_t dim() const { return components.empty() ? 0 : components.front().dim(); }
  /// Throws ValidationError if weights/means/kappas break the invariants.
  void validate() const;
};

double vmf_log_density(const VonMisesFisher& component, std::span<const double> x);
double mixture_log_density(const MovMFMixture& mixture, std::span<const double> x);

/// Solves A_d(kappa) = mean_resultant for kappa by safeguarded Newton steps
/// from kappa0 = r(d - r^2)/(1 - r^2). Result is capped at kMaxKappa.
double kappa_from_ratio(double mean_resultant, std::size_t d);

struct EmOptions {
  std::size_t max_iters = 100;
  double tol = 1e-6;  // relative log-likelihood change
  std::uint64_t seed = 0;
  bool parallel = false;
};

struct EmResult {
  MovMFMixture mixture;
  RowMatrix responsibilities;  // n x m, rows sum to 1
  std::vector<double> log_likelihood;  // one entry per E-step
  std::size_t iterations = 0;
  std::size_t collapses = 0;
};

/// EM for a mixture of m vMFs on unit vectors (rows of `points`).
EmResult fit_em(const RowMatrix& points, std::size_t m, const EmOptions& options = {});

/// Draws from a single vMF (Wood's rejection scheme).
std::vector<double> sample_vmf(const VonMisesFisher& component, Rng& rng);
std::vector<double> sample(const MovMFMixture& mixture, Rng& rng);

nlohmann::json mixture_to_json(const MovMFMixture& mixture);
MovMFMixture mixture_from_json(const nlohmann::json& j);

}  // namespace weakhier
