#include "weakhier/vmf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "weakhier/bessel.hpp"
#include "weakhier/error.hpp"
#include "weakhier/kernels.hpp"

namespace weakhier {

void MovMFMixture::validate() const {
  if (components.empty() || weights.size() != components.size())
    throw ValidationError("mixture needs one weight per component");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ValidationError("mixture weight must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-8) throw ValidationError("mixture weights must sum to 1");
  const std::size_t d = dim();
  if (d < 2) throw ValidationError("vMF dimension must be >= 2");
  for (const auto& c : components) {
    if (c.dim() != d) throw ValidationError("mixture components disagree on dimension");
    if (std::abs(norm(c.mean) - 1.0) > 1e-6) throw ValidationError("vMF mean direction must be unit norm");
    if (!(c.kappa >= 0.0) || !std::isfinite(c.kappa)) throw ValidationError("vMF kappa must be finite and >= 0");
  }
}

double vmf_log_density(const VonMisesFisher& component, std::span<const double> x) {
  if (x.size() != component.dim()) throw ValidationError("vmf_log_density: dimension mismatch");
  if (std::abs(norm(x) - 1.0) > 1e-6) throw ValidationError("vmf_log_density: x must be unit norm");
  const auto d = static_cast<double>(component.dim());
  return bessel::log_vmf_normalizer(d, component.kappa) + component.kappa * dot(component.mean, x);
}

double mixture_log_density(const MovMFMixture& mixture, std::span<const double> x) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(mixture.size());
  for (std::size_t h = 0; h < mixture.size(); ++h) {
    terms[h] = std::log(mixture.weights[h]) + vmf_log_density(mixture.components[h], x);
    best = std::max(best, terms[h]);
  }
  double total = 0.0;
  for (double t : terms) total += std::exp(t - best);
  return best + std::log(total);
}

double kappa_from_ratio(double mean_resultant, std::size_t d) {
  if (!(mean_resultant >= 0.0)) throw ValidationError("kappa_from_ratio: ratio must be in [0, 1)");
  if (d < 2) throw ValidationError("kappa_from_ratio: d must be >= 2");
  if (mean_resultant == 0.0) return 0.0;
  constexpr double kMaxRatio = 1.0 - 1e-9;
  double r = mean_resultant;
  if (r >= kMaxRatio) {
    spdlog::warn("kappa_from_ratio: mean resultant {} clamped to 1 - 1e-9 (degenerate point set)", r);
    r = kMaxRatio;
  }
  const auto dd = static_cast<double>(d);
  if (bessel::ratio(dd, kMaxKappa) <= r) return kMaxKappa;

  double lo = 0.0, hi = kMaxKappa;
  double kappa = std::clamp(r * (dd - r * r) / (1.0 - r * r), 1e-12, kMaxKappa);
  for (int it = 0; it < 200; ++it) {
    const double a = bessel::ratio(dd, kappa);
    const double f = a - r;
    if (f == 0.0) return kappa;
    (f > 0.0 ? hi : lo) = kappa;
    const double slope = 1.0 - a * a - (dd - 1.0) / kappa * a;
    double next = kappa - f / slope;
    if (!(slope > 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - kappa) <= 1e-14 * kappa || hi - lo <= 1e-14 * hi) return next;
    kappa = next;
  }
  return kappa;
}

namespace {

kernels::MixtureTerms make_terms(const MovMFMixture& mixture) {
  const std::size_t m = mixture.size(), d = mixture.dim();
  kernels::MixtureTerms terms{std::vector<double>(m), std::vector<double>(m), RowMatrix(m, d)};
  for (std::size_t h = 0; h < m; ++h) {
    const auto& c = mixture.components[h];
    terms.log_prefactor[h] = std::log(mixture.weights[h]) + bessel::log_vmf_normalizer(double(d), c.kappa);
    terms.kappa[h] = c.kappa;
    std::copy(c.mean.begin(), c.mean.end(), terms.means.row(h).begin());
  }
  return terms;
}

std::vector<double> row_copy(const RowMatrix& x, std::size_t i) {
  auto r = x.row(i);
  return {r.begin(), r.end()};
}

// Spherical k-means++ seeding: later seeds drawn with probability proportional
// to cosine distance from the nearest chosen seed.
std::vector<std::size_t> seed_means(const RowMatrix& points, std::size_t m, Rng& rng) {
  const std::size_t n = points.rows;
  std::vector<std::size_t> chosen{std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)};
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (chosen.size() < m) {
    const auto& last = points.row(chosen.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], std::max(0.0, 1.0 - dot(points.row(i), last)));
      total += dist[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    } else {
      double u = unif(rng) * total;
      for (pick = 0; pick + 1 < n; ++pick) {
        u -= dist[pick];
        if (u <= 0.0 && dist[pick] > 0.0) break;
      }
    }
    chosen.push_back(pick);
  }
  return chosen;
}

}  // namespace

EmResult fit_em(const RowMatrix& points, std::size_t m, const EmOptions& options) {
  const std::size_t n = points.rows, d = points.cols;
  if (m < 1 || n < m) throw ValidationError("fit_em requires n >= m >= 1");
  if (d < 2) throw ValidationError("fit_em requires d >= 2");
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(norm(points.row(i)) - 1.0) > 1e-6) throw ValidationError("fit_em: points must be unit norm");

  Rng rng(options.seed);
  EmResult result;
  auto& mix = result.mixture;
  mix.weights.assign(m, 1.0 / double(m));
  for (std::size_t idx : seed_means(points, m, rng)) mix.components.push_back({row_copy(points, idx), 1.0});

  for (std::size_t it = 0; it < options.max_iters; ++it) {
    const auto terms = make_terms(mix);
    const auto ll_rows = options.parallel ? kernels::estep_parallel(points, terms, result.responsibilities)
                                          : kernels::estep_serial(points, terms, result.responsibilities);
    const double ll = std::accumulate(ll_rows.begin(), ll_rows.end(), 0.0);
    result.log_likelihood.push_back(ll);
    result.iterations = it + 1;
    if (it > 0) {
      const double prev = result.log_likelihood[it - 1];
      if (ll - prev <= options.tol * std::abs(prev)) break;
    }

    // M-step.
    const auto& resp = result.responsibilities;
    for (std::size_t h = 0; h < m; ++h) {
      double mass = 0.0;
      std::vector<double> r(d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double p = resp(i, h);
        mass += p;
        const auto x = points.row(i);
        for (std::size_t k = 0; k < d; ++k) r[k] += p * x[k];
      }
      auto& comp = mix.components[h];
      const double rnorm = norm(r);
      if (mass < 1e-12 || rnorm <= 0.0) {
        ++result.collapses;
        spdlog::warn("fit_em: component {} collapsed at iteration {}; reinitialising", h, it);
        comp.mean = row_copy(points, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
        comp.kappa = 1.0;
        mix.weights[h] = 1.0 / double(n);
        continue;
      }
      mix.weights[h] = mass / double(n);
      for (std::size_t k = 0; k < d; ++k) r[k] /= rnorm;
      comp.mean = std::move(r);
      comp.kappa = kappa_from_ratio(std::min(rnorm / mass, 1.0), d);
    }
    const double wsum = std::accumulate(mix.weights.begin(), mix.weights.end(), 0.0);
    for (double& w : mix.weights) w /= wsum;
  }
  return result;
}

std::vector<double> sample_vmf(const VonMisesFisher& component, Rng& rng) {
  const std::size_t d = component.dim();
  const double kappa = component.kappa;
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> v(d);
  if (kappa == 0.0) {
    do {
      for (double& x : v) x = gauss(rng);
    } while (normalize_in_place(v) == 0.0);
    return v;
  }

  const double d1 = double(d) - 1.0;
  const double b = d1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + d1 * d1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + d1 * std::log(1.0 - x0 * x0);
  std::gamma_distribution<double> gamma(0.5 * d1, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double w = 0.0;
  for (;;) {
    const double g1 = gamma(rng), g2 = gamma(rng);
    const double z = g1 / (g1 + g2);
    w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    const double u = unif(rng);
    if (kappa * w + d1 * std::log(1.0 - x0 * w) - c >= std::log(u)) break;
  }

  // Uniform direction in the tangent space at the mean.
  const auto& mu = component.mean;
  double vn = 0.0;
  do {
    for (double& x : v) x = gauss(rng);
    const double proj = dot(v, mu);
    for (std::size_t k = 0; k < d; ++k) v[k] -= proj * mu[k];
    vn = normalize_in_place(v);
  } while (vn == 0.0);

  const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
  for (std::size_t k = 0; k < d; ++k) v[k] = w * mu[k] + s * v[k];
  normalize_in_place(v);
  return v;
}

std::vector<double> sample(const MovMFMixture& mixture, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  std::size_t h = 0;
  for (; h + 1 < mixture.size(); ++h) {
    u -= mixture.weights[h];
    if (u < 0.0) break;
  }
  // Skip zero-weight tail components reached through rounding.
  while (mixture.weights[h] == 0.0 && h > 0) --h;
  return sample_vmf(mixture.components[h], rng);
}

nlohmann::json mixture_to_json(const MovMFMixture& mixture) {
  nlohmann::json comps = nlohmann::json::array();
  for (std::size_t h = 0; h < mixture.size(); ++h)
    comps.push_back({{"alpha", mixture.weights[h]},
                     {"kappa", mixture.components[h].kappa},
                     {"mu", mixture.components[h].mean}});
  return {{"m", mixture.size()}, {"components", comps}};
}

MovMFMixture mixture_from_json(const nlohmann::json& j) {
  MovMFMixture mix;
  try {
    for (const auto& c : j.at("components")) {
      mix.weights.push_back(c.at("alpha").get<double>());
      mix.components.push_back({c.at("mu").get<std::vector<double>>(), c.at("kappa").get<double>()});
    }
    if (j.at("m").get<std::size_t>() != mix.size()) throw ParseError("mixture component count mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("mixture: ") + e.what());
  }
  mix.validate();
  return mix;
}

}  // namespace weakhier
