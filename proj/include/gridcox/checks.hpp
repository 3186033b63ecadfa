#pragma once

#include <functional>
#include <vector>

#include "gridcox/spde.hpp"

namespace gridcox {

/// Marginal variance from the spectral density: radial quadrature on the plane,
/// quadrature over the real line, and a direct sum over the integers on the circle.
double spectral_variance(Domain d, double kappa, double phi, double sigma);

struct VarianceCheckRow {
  Domain domain = Domain::plane;
  double kappa = 1.0;
  double phi = 1.0;
  double closed_form = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
  bool pass = false;
};

using VarianceFormula = std::function<double(Domain, double, double, double)>;

/// Every domain over phi in {-0.9, -0.5, 0, 0.5, 1, 2} and kappa in {0.2, 1, 2 pi}, sigma = 1.
std::vector<VarianceCheckRow> check_variance_grid(double tolerance = 1e-6,
                                                  const VarianceFormula& closed_form = marginal_variance);

}  // namespace gridcox
