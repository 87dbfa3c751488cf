#include "weakhier/bessel.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "weakhier/error.hpp"

namespace weakhier::bessel {

namespace {

constexpr double kRescale = 1e250;
const double kLogRescale = std::log(kRescale);

// I_nu(x) = (x/2)^nu / Gamma(nu+1) * S; returns log S. All terms are positive.
double log_series_sum(double nu, double x) {
  const double q = 0.25 * x * x;
  double term = 1.0, sum = 1.0, log_scale = 0.0;
  const double peak = 0.5 * x;
  for (int k = 0; k < 1'000'000; ++k) {
    term *= q / ((k + 1.0) * (nu + k + 1.0));
    sum += term;
    if (sum > kRescale) {
      sum /= kRescale;
      term /= kRescale;
      log_scale += kLogRescale;
    }
    if (k > peak && term < sum * 1e-18) break;
  }
  return std::log(sum) + log_scale;
}

// Hankel expansion of e^{-x} sqrt(2 pi x) I_nu(x). Empty if it does not reach
// double precision before diverging.
std::optional<double> hankel_sum(double nu, double x) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0, sum = 1.0, largest = 1.0, prev = 1.0;
  for (int k = 1; k < 400; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (8.0 * k * x);
    sum += term;
    const double mag = std::abs(term);
    if (mag == 0.0 || mag < 1e-17 * std::abs(sum)) {
      if (largest > 1e3 || sum <= 0.0) return std::nullopt;
      return sum;
    }
    if (mag > prev && 2.0 * k > std::sqrt(mu) + 2.0) return std::nullopt;  // past the smallest term
    largest = std::max(largest, mag);
    prev = mag;
  }
  return std::nullopt;
}

}  // namespace

double log_i(double nu, double x) {
  if (!(nu >= 0.0) || !(x > 0.0) || !std::isfinite(x))
    throw ValidationError("bessel::log_i requires nu >= 0 and finite x > 0");
  if (x > 30.0) {
    if (auto s = hankel_sum(nu, x)) return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(*s);
  }
  return nu * std::log(0.5 * x) - std::lgamma(nu + 1.0) + log_series_sum(nu, x);
}

double ratio(double d, double kappa) {
  if (kappa == 0.0) return 0.0;
  const double nu = 0.5 * d - 1.0;
  return std::exp(log_i(nu + 1.0, kappa) - log_i(nu, kappa));
}

double log_vmf_normalizer(double d, double kappa) {
  if (!(d >= 2.0)) throw ValidationError("vMF dimension must be >= 2");
  if (!(kappa >= 0.0)) throw ValidationError("vMF concentration must be >= 0");
  const double nu = 0.5 * d - 1.0;
  const double half_d_log_2pi = 0.5 * d * std::log(2.0 * std::numbers::pi);
  if (kappa == 0.0) {
    // log Gamma(d/2) - log(2 pi^{d/2})
    return std::lgamma(0.5 * d) - std::log(2.0) - 0.5 * d * std::log(std::numbers::pi);
  }
  if (kappa > 30.0) {
    if (hankel_sum(nu, kappa)) return nu * std::log(kappa) - half_d_log_2pi - log_i(nu, kappa);
  }
  // Series form with the kappa^nu factors cancelled analytically.
  return nu * std::log(2.0) + std::lgamma(nu + 1.0) - half_d_log_2pi - log_series_sum(nu, kappa);
}

}  // namespace weakhier::bessel
