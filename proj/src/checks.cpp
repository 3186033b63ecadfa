#include "gridcox/checks.hpp"

#include <cmath>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "gridcox/mesh.hpp"

namespace gridcox {

double spectral_variance(Domain d, double kappa, double phi, double sigma) {
  if (d == Domain::circle) {
    // Terms decay like k^-4; the omitted tail is below 1e-16.
    const long k_max = 200000;
    double sum = 0.0;
    for (long k = k_max; k >= 1; --k) sum += spectral_density(d, static_cast<double>(k), kappa, phi, sigma);
    return spectral_density(d, 0.0, kappa, phi, sigma) + 2.0 * sum;
  }
  boost::math::quadrature::exp_sinh<double> integrator;
  if (d == Domain::plane)
    return kTwoPi * integrator.integrate([&](double w) { return w * spectral_density(d, w, kappa, phi, sigma); });
  return 2.0 * integrator.integrate([&](double w) { return spectral_density(d, w, kappa, phi, sigma); });
}

std::vector<VarianceCheckRow> check_variance_grid(double tolerance, const VarianceFormula& closed_form) {
  std::vector<VarianceCheckRow> rows;
  for (Domain d : {Domain::plane, Domain::circle, Domain::line})
    for (double phi : {-0.9, -0.5, 0.0, 0.5, 1.0, 2.0})
      for (double kappa : {0.2, 1.0, kTwoPi}) {
        VarianceCheckRow r;
        r.domain = d;
        r.kappa = kappa;
        r.phi = phi;
        r.closed_form = closed_form(d, kappa, phi, 1.0);
        r.numeric = spectral_variance(d, kappa, phi, 1.0);
        r.relative_error = std::abs(r.closed_form - r.numeric) / std::abs(r.numeric);
        r.pass = r.relative_error <= tolerance;
        rows.push_back(r);
      }
  return rows;
}

}  // namespace gridcox
