#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "gridcox/error.hpp"
#include "gridcox/model.hpp"
#include "support.hpp"

using namespace gridcox;
using namespace gridcox::testing;

namespace {

// Likelihood of a Gaussian observation y ~ N(x, R^-1) with diagonal R.
class GaussianTerm final : public LikelihoodTerm {
 public:
  GaussianTerm(Eigen::VectorXd y, Eigen::VectorXd r) : y_(std::move(y)), r_(std::move(r)) {}
  double value(const Eigen::VectorXd& x) const override {
    const Eigen::ArrayXd d = (y_ - x).array();
    return -0.5 * (d * d * r_.array()).sum() + 0.5 * r_.array().log().sum() -
           0.5 * static_cast<double>(y_.size()) * std::log(kTwoPi);
  }
  void derivatives(const Eigen::VectorXd& x, Eigen::VectorXd& grad, SparseMatrix& neg_hess) const override {
    grad = (r_.array() * (y_ - x).array()).matrix();
    neg_hess.resize(x.size(), x.size());
    std::vector<Triplet> t;
    for (Eigen::Index i = 0; i < x.size(); ++i) t.emplace_back(i, i, r_[i]);
    neg_hess.setFromTriplets(t.begin(), t.end());
  }

 private:
  Eigen::VectorXd y_, r_;
};

class ShiftedTerm final : public LikelihoodTerm {
 public:
  ShiftedTerm(const LikelihoodTerm& base, double c) : base_(base), c_(c) {}
  double value(const Eigen::VectorXd& x) const override { return base_.value(x) + c_; }
  void derivatives(const Eigen::VectorXd& x, Eigen::VectorXd& g, SparseMatrix& h) const override {
    base_.derivatives(x, g, h);
  }

 private:
  const LikelihoodTerm& base_;
  double c_;
};

}  // namespace

TEST_CASE("likelihood special values") {
  const auto pr = make_problem(ModelKind::space, walk_session(1, 60.0, 0.05));
  const PathLikelihood lik(pr.design);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(lik.layout().size());
  CHECK(lik.value(zero) == doctest::Approx(-pr.design.path_length).epsilon(1e-12));
  CHECK(pr.design.b.sum() == doctest::Approx(pr.design.path_length).epsilon(1e-10));

  Eigen::VectorXd x = zero;
  x[0] = std::log(pr.design.spikes / pr.design.path_length);
  Eigen::VectorXd g;
  SparseMatrix h;
  lik.derivatives(x, g, h);
  CHECK(std::abs(g[0]) < 1e-9 * pr.design.spikes);
  // beta-only profile is maximized there
  for (double d : {-0.1, 0.1}) {
    Eigen::VectorXd y = x;
    y[0] += d;
    CHECK(lik.value(y) < lik.value(x));
  }
}

TEST_CASE("gradient and Hessian agree with finite differences") {
  const auto data = walk_session(2, 40.0, 0.1);
  std::mt19937_64 rng(5);
  for (ModelKind kind : kAllKinds) {
    CAPTURE(to_string(kind));
    const auto pr = make_problem(kind, data);
    REQUIRE(pr.meshes.space->vertex_count() <= 50);
    const LgcpModel model(kind, pr.meshes, pr.design, PriorConfig{});
    const GaussianPrior prior = model.latent_prior(prior_medians(PriorConfig{}));
    const auto& lik = model.likelihood();
    const int n = model.layout().size();
    for (int rep = 0; rep < 3; ++rep) {
      const Eigen::VectorXd x = random_state(n, rng, 0.5);
      Eigen::VectorXd g;
      SparseMatrix h;
      log_posterior_derivatives(lik, prior, x, g, h);
      const double step = 1e-5;
      Eigen::VectorXd fd(n);
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd a = x, b = x;
        a[i] += step;
        b[i] -= step;
        fd[i] = (log_posterior(lik, prior, a) - log_posterior(lik, prior, b)) / (2 * step);
      }
      CHECK(max_rel(g, fd) < 1e-5);

      const Eigen::VectorXd v = random_state(n, rng, 1.0);
      Eigen::VectorXd ga, gb;
      SparseMatrix ha, hb;
      log_posterior_derivatives(lik, prior, x + step * v, ga, ha);
      log_posterior_derivatives(lik, prior, x - step * v, gb, hb);
      const Eigen::VectorXd hv_fd = -(ga - gb) / (2 * step);
      const Eigen::VectorXd hv = h * v;
      CHECK(max_rel(hv, hv_fd) < 1e-4);
    }
  }
}

TEST_CASE("concavity certificate at random states") {
  const auto data = walk_session(3, 40.0, 0.1);
  std::mt19937_64 rng(11);
  for (ModelKind kind : kAllKinds) {
    CAPTURE(to_string(kind));
    const auto pr = make_problem(kind, data);
    const LgcpModel model(kind, pr.meshes, pr.design, PriorConfig{});
    const GaussianPrior prior = model.latent_prior(prior_medians(PriorConfig{}));
    int ok = 0;
    for (int rep = 0; rep < 100; ++rep) {
      Eigen::VectorXd g;
      SparseMatrix h;
      log_posterior_derivatives(model.likelihood(), prior, random_state(model.layout().size(), rng, 1.5), g, h);
      try {
        SparseCholesky chol(h);
        ++ok;
      } catch (const FactorizationError&) {
      }
    }
    CHECK(ok == 100);
  }
}

TEST_CASE("nested collapse: temporal model with zero temporal weights") {
  const auto data = walk_session(4, 60.0, 0.1);
  std::mt19937_64 rng(3);
  for (auto [outer, inner] : {std::pair{ModelKind::space_time, ModelKind::space},
                              std::pair{ModelKind::space_dir_time, ModelKind::space_dir}}) {
    const auto big = make_problem(outer, data);
    MeshSet small_meshes = big.meshes;
    small_meshes.time.reset();
    const Design small = integration_weights(segment_path(data, small_meshes), data, small_meshes, inner);
    const PathLikelihood lb(big.design), ls(small);
    for (int rep = 0; rep < 5; ++rep) {
      const Eigen::VectorXd xs = random_state(ls.layout().size(), rng);
      Eigen::VectorXd xb = Eigen::VectorXd::Zero(lb.layout().size());
      xb.head(xs.size()) = xs;
      const double a = lb.value(xb), b = ls.value(xs);
      CHECK(std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(b)));
    }
  }
}

TEST_CASE("translation equivariance in the intercept") {
  const auto data = walk_session(5, 30.0, 0.1);
  std::mt19937_64 rng(8);
  for (ModelKind kind : kAllKinds) {
    const auto pr = make_problem(kind, data);
    const PathLikelihood lik(pr.design);
    const Eigen::VectorXd x = random_state(lik.layout().size(), rng);
    const double q = lik.expected_count(x);
    for (double c : {-0.7, 0.3, 1.2}) {
      Eigen::VectorXd y = x;
      y[0] += c;
      const double expect = lik.value(x) + pr.design.spikes * c - (std::exp(c) - 1.0) * q;
      CHECK(lik.value(y) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("quadrature matches a 100x refined path") {
  const auto data = walk_session(6, 30.0, 0.1);
  std::mt19937_64 rng(21);
  for (ModelKind kind : kAllKinds) {
    CAPTURE(to_string(kind));
    const auto pr = make_problem(kind, data, 4.0, 8, 6);
    const PathLikelihood lik(pr.design);
    CHECK(pr.design.b.sum() == doctest::Approx(pr.design.path_length).epsilon(1e-10));
    for (int rep = 0; rep < 3; ++rep) {
      const Eigen::VectorXd x = random_state(lik.layout().size(), rng);
      const double approx = lik.expected_count(x);
      const double oracle = refined_quadrature(pr, kind, x, 100);
      CHECK(std::abs(approx - oracle) <= 1e-4 * oracle);
      const double ll_oracle = lik.value(x) + approx - oracle;
      CHECK(std::abs(lik.value(x) - ll_oracle) <= 1e-4 * std::abs(ll_oracle));
    }
  }
}

TEST_CASE("Laplace evidence is exact for a Gaussian toy") {
  const int n = 6;
  std::mt19937_64 rng(9);
  const Eigen::VectorXd y = random_state(n, rng, 2.0);
  Eigen::VectorXd r(n);
  for (int i = 0; i < n; ++i) r[i] = 0.5 + i;
  GaussianTerm lik(y, r);

  Eigen::MatrixXd qd = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    qd(i, i) = 2.0;
    if (i + 1 < n) qd(i, i + 1) = qd(i + 1, i) = -0.8;
  }
  GaussianPrior prior;
  prior.mean = random_state(n, rng, 1.0);
  prior.precision = qd.sparseView();

  const auto res = laplace(lik, prior, Eigen::VectorXd::Zero(n));
  // y ~ N(mean, Q^-1 + R^-1)
  const Eigen::MatrixXd cov = Eigen::MatrixXd(qd.inverse()) + Eigen::MatrixXd(r.cwiseInverse().asDiagonal());
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd d = y - prior.mean;
  const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  const double exact = -0.5 * d.dot(llt.solve(d)) - 0.5 * logdet - 0.5 * n * std::log(kTwoPi);
  CHECK(res.log_evidence == doctest::Approx(exact).epsilon(1e-8));
  CHECK(std::abs(res.log_evidence - exact) < 1e-8);

  ShiftedTerm shifted(lik, 3.25);
  const auto res2 = laplace(shifted, prior, Eigen::VectorXd::Zero(n));
  CHECK(res2.log_evidence - res.log_evidence == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("hyperparameter priors") {
  const PriorConfig cfg;
  Hyper h = prior_medians(cfg);
  CHECK(h.space.range == doctest::Approx(20.0));
  CHECK(h.dir.damping == 1.0);
  CHECK(h.time.damping == 1.0);
  // Beta(2, 20) median via bisection of the regularized incomplete beta (closed form for a = 2).
  {
    auto cdf = [](double x) { return 1.0 - std::pow(1 - x, 20) * (1 + 20 * x); };
    double lo = 0, hi = 1;
    for (int i = 0; i < 200; ++i) (cdf(0.5 * (lo + hi)) < 0.5 ? lo : hi) = 0.5 * (lo + hi);
    CHECK(h.space.damping == doctest::Approx(-1.0 + 2.0 * lo).epsilon(1e-12));
  }

  // exponential s prior at s = 2 with rate 1/2
  Hyper a = h, b = h;
  a.space = make_params(Domain::plane, 20.0, 2.0, 0.0);
  b.space = make_params(Domain::plane, 20.0, 1.0, 0.0);
  const double diff = log_prior_density(a, cfg, ModelKind::space).log_density -
                      log_prior_density(b, cfg, ModelKind::space).log_density;
  CHECK(diff == doctest::Approx((std::log(0.5) - 1.0) - (std::log(0.5) - 0.5)));
  // full density at a known point
  {
    const double x = 0.5;
    const double beta_pdf = 420.0 * x * std::pow(1 - x, 19) / 2.0;  // B(2,20) = 1/420
    const double z = 0.0;
    const double lognormal = -std::log(20.0) - std::log(0.4) - 0.5 * std::log(kTwoPi) - 0.5 * z * z;
    const double expect = lognormal + (std::log(0.5) - 1.0) + std::log(beta_pdf);
    CHECK(log_prior_density(a, cfg, ModelKind::space).log_density == doctest::Approx(expect).epsilon(1e-12));
  }

  Hyper edge = h;
  edge.space.damping = 1.0;
  const auto pe = log_prior_density(edge, cfg, ModelKind::space);
  CHECK(pe.log_density == -std::numeric_limits<double>::infinity());
  CHECK_FALSE(pe.out_of_support);

  Hyper neg = h;
  neg.dir.range = -1.0;
  const auto pn = log_prior_density(neg, cfg, ModelKind::space_dir);
  CHECK(pn.log_density == -std::numeric_limits<double>::infinity());
  CHECK(pn.out_of_support);
  CHECK_FALSE(log_prior_density(neg, cfg, ModelKind::space).out_of_support);

  PriorConfig bad;
  bad.sd_space_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("unconstrained transform") {
  CHECK(hyper_dimension(ModelKind::space) == 3);
  CHECK(hyper_dimension(ModelKind::space_time) == 5);
  CHECK(hyper_dimension(ModelKind::space_dir) == 5);
  CHECK(hyper_dimension(ModelKind::space_dir_time) == 7);
  Hyper h;
  h.space = make_params(Domain::plane, 17.0, 0.8, -0.6);
  h.dir = make_params(Domain::circle, 2.0, 1.3, 1.0);
  h.time = make_params(Domain::line, 90.0, 0.4, 1.0);
  for (ModelKind kind : kAllKinds) {
    const auto eta = to_unconstrained(h, kind);
    const Hyper back = from_unconstrained(eta, kind);
    CHECK(back.space.range == doctest::Approx(17.0));
    CHECK(back.space.damping == doctest::Approx(-0.6));
    if (has_direction(kind)) CHECK(back.dir.sd == doctest::Approx(1.3));
    if (has_time(kind)) CHECK(back.time.range == doctest::Approx(90.0));
    CHECK(back.dir.damping == 1.0);
    CHECK(back.time.damping == 1.0);

    // log Jacobian against a finite-difference determinant
    const int n = static_cast<int>(eta.size());
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    auto flat = [&](const Hyper& x) {
      std::vector<double> v{x.space.range, x.space.sd, x.space.damping};
      if (has_direction(kind)) v.insert(v.end(), {x.dir.range, x.dir.sd});
      if (has_time(kind)) v.insert(v.end(), {x.time.range, x.time.sd});
      return v;
    };
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd a = eta, b = eta;
      a[j] += 1e-6;
      b[j] -= 1e-6;
      const auto fa = flat(from_unconstrained(a, kind)), fb = flat(from_unconstrained(b, kind));
      for (int i = 0; i < n; ++i) jac(i, j) = (fa[i] - fb[i]) / 2e-6;
    }
    CHECK(log_jacobian(h, kind) == doctest::Approx(std::log(std::abs(jac.determinant()))).epsilon(1e-6));
  }
  CHECK_THROWS_AS(from_unconstrained(Eigen::VectorXd::Zero(4), ModelKind::space), ValidationError);
}

TEST_CASE("MAP fit on homogeneous data") {
  const double rate = 0.08;
  const auto pr = make_problem(ModelKind::space, walk_session(12, 300.0, rate));
  const LgcpModel model(ModelKind::space, pr.meshes, pr.design, PriorConfig{});
  const Hyper h = prior_medians(PriorConfig{});
  const PosteriorFit fit = fit_map(model, h);
  CHECK(fit.laplace.iterations < 100);

  // refit from the mode
  const Eigen::VectorXd mode = fit.laplace.mode;
  const PosteriorFit again = fit_map(model, h, {}, &mode);
  CHECK(again.laplace.iterations <= 2);
  CHECK(again.objective == doctest::Approx(fit.objective).epsilon(1e-9));

  // beta within 3 posterior sd of the truth
  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(mode.size());
  e0[0] = 1.0;
  const double sd_beta = std::sqrt(fit.laplace.posterior->solve(e0)[0]);
  const double beta_eff = fit.beta() + std::log(fit.w_main().array().exp().mean());
  CHECK(std::abs(fit.beta() - std::log(rate)) < 3.0 * sd_beta);
  CHECK(std::abs(beta_eff - std::log(rate)) < 0.3);
  CHECK(fit.w_main().cwiseAbs().maxCoeff() < 0.5 * h.space.sd);

  NewtonOptions tight;
  tight.max_iterations = 1;
  Eigen::VectorXd far = Eigen::VectorXd::Constant(mode.size(), 2.0);
  CHECK_THROWS_AS(fit_map(model, h, tight, &far), ConvergenceError);
}

TEST_CASE("posterior contraction with session length") {
  Hyper h = prior_medians(PriorConfig{});
  h.space = make_params(Domain::plane, 20.0, 0.01, h.space.damping);
  auto sd_beta = [&](double duration) {
    const auto pr = make_problem(ModelKind::space, walk_session(31, duration, 0.1));
    const LgcpModel model(ModelKind::space, pr.meshes, pr.design, PriorConfig{});
    const auto fit = fit_map(model, h);
    Eigen::VectorXd e0 = Eigen::VectorXd::Zero(fit.laplace.mode.size());
    e0[0] = 1.0;
    return std::sqrt(fit.laplace.posterior->solve(e0)[0]);
  };
  const double ratio = sd_beta(200.0) / sd_beta(400.0);
  CHECK(ratio >= 1.2);
  CHECK(ratio <= 1.7);
}

TEST_CASE("posterior sampling") {
  const auto pr = make_problem(ModelKind::space, walk_session(13, 60.0, 0.1, 10.0), 10.0);
  const LgcpModel model(ModelKind::space, pr.meshes, pr.design, PriorConfig{});
  const auto fit = fit_map(model, prior_medians(PriorConfig{}));
  const int n = model.layout().size();
  REQUIRE(n <= 12);

  const Eigen::MatrixXd one = sample_posterior(fit, 1, 42);
  CHECK(one.isApprox(sample_posterior(fit, 1, 42), 0.0));
  CHECK_FALSE(one.isApprox(sample_posterior(fit, 1, 43)));

  const int K = 10000;
  const Eigen::MatrixXd draws = sample_posterior(fit, K, 7);
  CHECK(draws.col(5).isApprox(sample_posterior(fit, 6, 7).col(5), 0.0));
  const Eigen::VectorXd mean = draws.rowwise().mean();
  Eigen::VectorXd g;
  SparseMatrix h;
  log_posterior_derivatives(model.likelihood(), model.latent_prior(fit.hyper), fit.laplace.mode, g, h);
  const Eigen::MatrixXd cov = Eigen::MatrixXd(h).inverse();
  const Eigen::MatrixXd centered = draws.colwise() - mean;
  const Eigen::MatrixXd scov = centered * centered.transpose() / (K - 1);
  for (int i = 0; i < n; ++i) {
    CHECK(std::abs(mean[i] - fit.laplace.mode[i]) < 4.0 * std::sqrt(cov(i, i) / K));
    for (int j = 0; j < n; ++j) {
      const double se = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / K);
      CHECK(std::abs(scov(i, j) - cov(i, j)) < 5.0 * se);
    }
  }
  CHECK_THROWS_AS(sample_posterior(fit, 0, 1), ValidationError);
}

TEST_CASE("tighter sd prior never raises the optimal sd") {
  const auto pr = make_problem(ModelKind::space, walk_session(14, 120.0, 0.1), 6.0);
  const Hyper base = prior_medians(PriorConfig{});
  std::vector<double> grid;
  for (int i = 0; i < 12; ++i) grid.push_back(0.05 * std::pow(1.5, i));
  double previous = std::numeric_limits<double>::infinity();
  for (double nu : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    PriorConfig cfg;
    cfg.sd_space_rate = nu;
    const LgcpModel model(ModelKind::space, pr.meshes, pr.design, cfg);
    double best = -std::numeric_limits<double>::infinity(), arg = 0.0;
    for (double s : grid) {
      Hyper h = base;
      h.space = make_params(Domain::plane, h.space.range, s, h.space.damping);
      const double v = laplace_log_marginal(model, h);
      if (v > best) {
        best = v;
        arg = s;
      }
    }
    CHECK(arg <= previous);
    previous = arg;
  }
}

TEST_CASE("Nelder-Mead on a quadratic") {
  auto f = [](const Eigen::VectorXd& x) {
    return -(x[0] - 1) * (x[0] - 1) - 4 * (x[1] + 2) * (x[1] + 2) - (x[0] - 1) * (x[1] + 2);
  };
  const auto r = nelder_mead_maximize(f, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, 0.5), 500, 1e-12);
  CHECK(r.best[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(r.best[1] == doctest::Approx(-2.0).epsilon(1e-3));
  CHECK_FALSE(r.hit_cap);
  const auto capped = nelder_mead_maximize(f, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, 0.5), 10, 1e-12);
  CHECK(capped.hit_cap);
}

TEST_CASE("hyperparameter search improves on the start") {
  const auto pr = make_problem(ModelKind::space_dir, walk_session(15, 60.0, 0.1), 6.0, 4);
  const LgcpModel model(ModelKind::space_dir, pr.meshes, pr.design, PriorConfig{});
  SearchOptions opt;
  opt.max_evaluations = 40;
  opt.restarts = 1;
  const auto fit = optimize_hyper(model, opt);
  CHECK(fit.objective >= fit.start_objective);
  CHECK(fit.evaluations > 0);
  CHECK(fit.hyper.dir.damping == 1.0);
  CHECK(to_unconstrained(fit.hyper, fit.kind).size() == 5);
  const auto again = optimize_hyper(model, opt);
  CHECK(again.objective == fit.objective);
}
