#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "gridcox/spde.hpp"
#include "gridcox/trajectory.hpp"

namespace gridcox {

/// Hyperprior settings. Range priors: log-normal (space), exponential (direction,
/// time). SD priors: exponential. Spatial damping: -1 + 2 Beta(a, b).
struct PriorConfig {
  double range_space_median = 20.0;  // cm
  double range_space_log_sd = 0.4;
  double damping_space_a = 2.0;
  double damping_space_b = 20.0;
  double sd_space_rate = 0.5;
  double sd_direction_rate = 1.0;
  double sd_time_rate = 1.0 / 3.0;
  double range_direction_rate = 1.0 / kTwoPi;  // per rad
  double range_time_rate = 1.0 / 100.0;        // per s
  double intercept_mean = 0.0;
  double intercept_sd = 10.0;

  void validate() const;
};

/// Hyperparameters of the active blocks. Direction and time blocks are critically
/// damped (damping fixed at 1).
struct Hyper {
  SpdeParams space = make_params(Domain::plane, 20.0, 1.0, 0.0);
  SpdeParams dir = make_params(Domain::circle, 1.0, 1.0, 1.0);
  SpdeParams time = make_params(Domain::line, 60.0, 1.0, 1.0);
};

struct PriorValue {
  double log_density = 0.0;
  bool out_of_support = false;
};

PriorValue log_prior_density(const Hyper& h, const PriorConfig& cfg, ModelKind kind);
/// Vector of prior medians, as a Hyper.
Hyper prior_medians(const PriorConfig& cfg);

/// Unconstrained optimizer coordinates: log rho, log s, logit((phi+1)/2) for space;
/// log rho, log s for direction and time when present.
Eigen::VectorXd to_unconstrained(const Hyper& h, ModelKind kind);
Hyper from_unconstrained(const Eigen::VectorXd& eta, ModelKind kind);
/// log |d hyper / d eta| for the transform above.
double log_jacobian(const Hyper& h, ModelKind kind);
int hyper_dimension(ModelKind kind);

/// Latent vector layout: [beta, w_main (p_main), w_time (p_time)].
struct LatentLayout {
  int p_main = 0;
  int p_time = 0;
  int size() const { return 1 + p_main + p_time; }
  int main_offset() const { return 1; }
  int time_offset() const { return 1 + p_main; }
};

/// Interface for the data term of a latent Gaussian model.
class LikelihoodTerm {
 public:
  virtual ~LikelihoodTerm() = default;
  virtual double value(const Eigen::VectorXd& x) const = 0;
  /// Gradient and the negated Hessian (PSD) of value() at x.
  virtual void derivatives(const Eigen::VectorXd& x, Eigen::VectorXd& grad, SparseMatrix& neg_hess) const = 0;
};

/// Approximate Poisson log-likelihood on a path for one of the four model kinds.
class PathLikelihood final : public LikelihoodTerm {
 public:
  explicit PathLikelihood(Design d);

  double value(const Eigen::VectorXd& x) const override;
  void derivatives(const Eigen::VectorXd& x, Eigen::VectorXd& grad, SparseMatrix& neg_hess) const override;

  /// Expected count (quadrature of the intensity) under latent state x.
  double expected_count(const Eigen::VectorXd& x) const;
  const Design& design() const { return d_; }
  LatentLayout layout() const { return {d_.p_main, d_.p_time}; }

 private:
  Design d_;
  Eigen::VectorXd a_;    // A_obs^T 1
  Eigen::VectorXd a_t_;  // A_time^T 1
};

/// Gaussian prior N(mean, Q^-1) on the latent vector.
struct GaussianPrior {
  Eigen::VectorXd mean;
  SparseMatrix precision;
  std::optional<double> log_det;  // computed by factorization when absent
};

struct NewtonOptions {
  double tolerance = 1e-6;  // gradient max-norm relative to max(1, |loglik|)
  int max_iterations = 100;
};

/// MAP state and the Laplace approximation at fixed hyperparameters.
struct LaplaceResult {
  Eigen::VectorXd mode;
  std::shared_ptr<SparseCholesky> posterior;  // factorization of Q + negated likelihood Hessian
  double log_likelihood = 0.0;
  double log_evidence = 0.0;  // Laplace approximation of log p(data | hyper)
  int iterations = 0;
  double gradient_norm = 0.0;
};

/// Newton iteration with Armijo backtracking and Levenberg fallback.
/// Throws ConvergenceError when the cap is reached.
LaplaceResult laplace(const LikelihoodTerm& lik, const GaussianPrior& prior, const Eigen::VectorXd& x0,
                      const NewtonOptions& opt = {});

/// Gradient and negated Hessian of the log posterior (likelihood plus Gaussian prior).
void log_posterior_derivatives(const LikelihoodTerm& lik, const GaussianPrior& prior, const Eigen::VectorXd& x,
                               Eigen::VectorXd& grad, SparseMatrix& neg_hess);
double log_posterior(const LikelihoodTerm& lik, const GaussianPrior& prior, const Eigen::VectorXd& x);

/// Data, meshes and matrices needed to fit one model kind.
class LgcpModel {
 public:
  LgcpModel(ModelKind kind, MeshSet meshes, Design design, PriorConfig prior);

  ModelKind kind() const { return kind_; }
  const MeshSet& meshes() const { return meshes_; }
  const PathLikelihood& likelihood() const { return lik_; }
  const PriorConfig& prior_config() const { return prior_; }
  LatentLayout layout() const { return lik_.layout(); }

  GaussianPrior latent_prior(const Hyper& h) const;
  /// beta = log(n / L), fields zero.
  Eigen::VectorXd initial_state() const;

 private:
  ModelKind kind_;
  MeshSet meshes_;
  PathLikelihood lik_;
  PriorConfig prior_;
  MassStiffness ms_space_, ms_dir_, ms_time_;
};

struct PosteriorFit {
  ModelKind kind = ModelKind::space;
  Hyper hyper;
  LaplaceResult laplace;
  double log_hyper_prior = 0.0;  // includes the Jacobian of the unconstrained transform
  double objective = 0.0;        // log_evidence + log_hyper_prior
  // Hyperparameter search report
  int evaluations = 0;
  bool hit_evaluation_cap = false;
  double start_objective = 0.0;

  double beta() const { return laplace.mode[0]; }
  Eigen::VectorXd w_main() const;
  Eigen::VectorXd w_time() const;
  int p_main = 0;
  int p_time = 0;
};

/// MAP state and Laplace marginal at fixed hyperparameters.
PosteriorFit fit_map(const LgcpModel& model, const Hyper& h, const NewtonOptions& opt = {},
                     const Eigen::VectorXd* warm_start = nullptr);
/// Objective maximized over hyperparameters (-inf when outside the prior support).
double laplace_log_marginal(const LgcpModel& model, const Hyper& h, const NewtonOptions& opt = {});

struct SearchOptions {
  int max_evaluations = 200;  // per Nelder-Mead run
  int restarts = 3;
  double initial_step = 0.5;
  double tolerance = 1e-4;  // spread of simplex objective values
  std::uint64_t seed = 1;
  NewtonOptions newton;
};

/// Nelder-Mead over unconstrained coordinates from the prior medians.
PosteriorFit optimize_hyper(const LgcpModel& model, const SearchOptions& opt = {});

/// Gaussian draws around the mode with the posterior precision. One column per draw;
/// draw k uses derive_seed(seed, first + k), so chunks concatenate to one stream.
Eigen::MatrixXd sample_posterior(const PosteriorFit& fit, int draws, std::uint64_t seed, int first = 0);

/// Nelder-Mead maximizer, exposed for testing. Returns the best point.
struct NelderMeadResult {
  Eigen::VectorXd best;
  double value = -std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool hit_cap = false;
};
NelderMeadResult nelder_mead_maximize(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                                      const Eigen::VectorXd& step, int max_evaluations, double tolerance);

/// Seed for stream k derived from a root seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t k);

}  // namespace gridcox
