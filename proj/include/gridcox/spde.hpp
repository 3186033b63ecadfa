#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "gridcox/mesh.hpp"

namespace gridcox {

enum class Domain { plane, circle, line };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

/// Oscillatory Matern hyperparameters for one latent block (shape fixed at 2).
struct SpdeParams {
  Domain domain = Domain::plane;
  double range = 1.0;  // rho
  double sd = 1.0;     // s
  double damping = 1.0;
  double kappa = 1.0;  // derived from range
  double tau = 1.0;    // derived by normalize_tau
};

/// kappa = sqrt(8)/rho on the plane, sqrt(12)/rho on the circle and the line.
double kappa_from_range(Domain d, double range);
double range_from_kappa(Domain d, double kappa);

/// Fill kappa and tau from (range, sd, damping).
SpdeParams normalize_tau(SpdeParams p);
SpdeParams make_params(Domain d, double range, double sd, double damping);

/// tau^2 (kappa^4 C + 2 phi kappa^2 G + G C^-1 G) with lumped C.
SparseMatrix assemble_precision(const MassStiffness& ms, double kappa, double tau, double phi);
SparseMatrix assemble_precision(const MassStiffness& ms, const SpdeParams& p);

/// Standard Kronecker product qa (x) qb: entry (i*pb + k, j*pb + l) = qa(i,j) qb(k,l).
SparseMatrix kron_precision(const SparseMatrix& qa, const SparseMatrix& qb);

/// Spectral density at frequency |omega| (integer for the circle).
double spectral_density(Domain d, double omega, double kappa, double phi, double sigma);
double marginal_variance(Domain d, double kappa, double phi, double sigma);
/// Covariance at a lag: Euclidean distance (plane), angle (circle), time (line).
/// Plane and line need phi <= 1; the circle needs phi == 1. Otherwise NoClosedFormError.
double covariance(Domain d, double lag, double kappa, double phi, double sigma);

/// Sparse LL^T with fill-reducing ordering. Supernodal CHOLMOD when the build found it,
/// Eigen's simplicial factorization otherwise.
class SparseCholesky {
 public:
  SparseCholesky();
  explicit SparseCholesky(const SparseMatrix& q);
  ~SparseCholesky();
  SparseCholesky(SparseCholesky&&) noexcept;
  SparseCholesky& operator=(SparseCholesky&&) noexcept;

  /// Throws FactorizationError when q is not numerically SPD.
  void compute(const SparseMatrix& q);
  /// Reuses the symbolic analysis when q has the previous sparsity pattern size.
  void factorize(const SparseMatrix& q);
  bool ok() const { return ok_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  double logdet() const;
  /// x with x ~ N(0, q^-1) given z ~ N(0, I).
  Eigen::VectorXd sample_from_normals(const Eigen::VectorXd& z) const;
  Eigen::Index size() const { return n_; }

  static const char* backend();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  bool analyzed_ = false;
  Eigen::Index nnz_ = -1;
  bool ok_ = false;
  Eigen::Index n_ = 0;
};

Eigen::VectorXd standard_normals(Eigen::Index n, std::mt19937_64& rng);
/// One draw of N(0, q^-1), deterministic given seed.
Eigen::VectorXd sample_gmrf(const SparseMatrix& q, std::uint64_t seed);

/// Write (row,col,value) triplets of the lower triangle.
void export_matrix_csv(const SparseMatrix& q, const std::filesystem::path& path);

}  // namespace gridcox
