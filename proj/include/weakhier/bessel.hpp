#pragma once

namespace weakhier::bessel {

/// log I_nu(x) for nu >= 0, x > 0, without overflow for large x.
/// Uses the ascending power series with running rescaling, or the Hankel
/// large-argument expansion once it converges to full precision.
double log_i(double nu, double x);

/// A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa). A_d(0) = 0.
double ratio(double d, double kappa);

/// log c_d(kappa), the log normaliser of a vMF density on S^{d-1}.
/// kappa = 0 gives the log reciprocal of the sphere's surface area.
double log_vmf_normalizer(double d, double kappa);

}  // namespace weakhier::bessel
