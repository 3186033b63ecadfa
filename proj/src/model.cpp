#include "gridcox/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/distributions/beta.hpp>

#include "gridcox/error.hpp"

namespace gridcox {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(kTwoPi);

double log_exponential(double x, double rate) { return std::log(rate) - rate * x; }

double xlogy(double a, double y) { return a == 0.0 ? 0.0 : a * std::log(y); }

double logit(double p) { return std::log(p / (1.0 - p)); }
double inv_logit(double e) { return 1.0 / (1.0 + std::exp(-e)); }

void append_block(std::vector<Triplet>& t, const SparseMatrix& m, Eigen::Index offset) {
  for (Eigen::Index j = 0; j < m.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(m, j); it; ++it) t.emplace_back(it.row() + offset, it.col() + offset, it.value());
}

}  // namespace

// ---------------------------------------------------------------------------
// Priors

void PriorConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string("priors.") + name + " must be positive");
  };
  positive(range_space_median, "range_space_median");
  positive(range_space_log_sd, "range_space_log_sd");
  positive(damping_space_a, "damping_space_a");
  positive(damping_space_b, "damping_space_b");
  positive(sd_space_rate, "sd_space_rate");
  positive(sd_direction_rate, "sd_direction_rate");
  positive(sd_time_rate, "sd_time_rate");
  positive(range_direction_rate, "range_direction_rate");
  positive(range_time_rate, "range_time_rate");
  positive(intercept_sd, "intercept_sd");
  if (!std::isfinite(intercept_mean)) throw ValidationError("priors.intercept_mean must be finite");
}

PriorValue log_prior_density(const Hyper& h, const PriorConfig& cfg, ModelKind kind) {
  PriorValue out;
  auto support = [&](bool ok) {
    if (!ok) out.out_of_support = true;
    return ok;
  };
  const auto& s = h.space;
  if (!support(s.range > 0.0 && s.sd > 0.0 && s.damping >= -1.0 && s.damping <= 1.0)) {
    out.log_density = kNegInf;
    return out;
  }
  const double z = (std::log(s.range) - std::log(cfg.range_space_median)) / cfg.range_space_log_sd;
  double lp = -std::log(s.range) - std::log(cfg.range_space_log_sd) - kLogSqrt2Pi - 0.5 * z * z;
  lp += log_exponential(s.sd, cfg.sd_space_rate);
  const double x = 0.5 * (s.damping + 1.0);
  lp += xlogy(cfg.damping_space_a - 1.0, x) + xlogy(cfg.damping_space_b - 1.0, 1.0 - x) -
        (std::lgamma(cfg.damping_space_a) + std::lgamma(cfg.damping_space_b) -
         std::lgamma(cfg.damping_space_a + cfg.damping_space_b)) -
        std::log(2.0);
  if (has_direction(kind)) {
    if (!support(h.dir.range > 0.0 && h.dir.sd > 0.0)) {
      out.log_density = kNegInf;
      return out;
    }
    lp += log_exponential(h.dir.range, cfg.range_direction_rate) + log_exponential(h.dir.sd, cfg.sd_direction_rate);
  }
  if (has_time(kind)) {
    if (!support(h.time.range > 0.0 && h.time.sd > 0.0)) {
      out.log_density = kNegInf;
      return out;
    }
    lp += log_exponential(h.time.range, cfg.range_time_rate) + log_exponential(h.time.sd, cfg.sd_time_rate);
  }
  out.log_density = lp;
  return out;
}

Hyper prior_medians(const PriorConfig& cfg) {
  const double ln2 = std::log(2.0);
  const boost::math::beta_distribution<double> beta(cfg.damping_space_a, cfg.damping_space_b);
  Hyper h;
  h.space = make_params(Domain::plane, cfg.range_space_median, ln2 / cfg.sd_space_rate,
                        -1.0 + 2.0 * boost::math::median(beta));
  h.dir = make_params(Domain::circle, ln2 / cfg.range_direction_rate, ln2 / cfg.sd_direction_rate, 1.0);
  h.time = make_params(Domain::line, ln2 / cfg.range_time_rate, ln2 / cfg.sd_time_rate, 1.0);
  return h;
}

int hyper_dimension(ModelKind kind) { return 3 + (has_direction(kind) ? 2 : 0) + (has_time(kind) ? 2 : 0); }

Eigen::VectorXd to_unconstrained(const Hyper& h, ModelKind kind) {
  Eigen::VectorXd eta(hyper_dimension(kind));
  int i = 0;
  eta[i++] = std::log(h.space.range);
  eta[i++] = std::log(h.space.sd);
  eta[i++] = logit(0.5 * (h.space.damping + 1.0));
  if (has_direction(kind)) {
    eta[i++] = std::log(h.dir.range);
    eta[i++] = std::log(h.dir.sd);
  }
  if (has_time(kind)) {
    eta[i++] = std::log(h.time.range);
    eta[i++] = std::log(h.time.sd);
  }
  return eta;
}

Hyper from_unconstrained(const Eigen::VectorXd& eta, ModelKind kind) {
  if (eta.size() != hyper_dimension(kind)) throw ValidationError("hyperparameter vector has wrong dimension");
  Hyper h;
  int i = 0;
  const double range = std::exp(eta[i++]);
  const double sd = std::exp(eta[i++]);
  const double damping = std::clamp(-1.0 + 2.0 * inv_logit(eta[i++]), -1.0 + 1e-15, 1.0);
  h.space = make_params(Domain::plane, range, sd, damping);
  if (has_direction(kind)) {
    const double r = std::exp(eta[i++]);
    h.dir = make_params(Domain::circle, r, std::exp(eta[i++]), 1.0);
  }
  if (has_time(kind)) {
    const double r = std::exp(eta[i++]);
    h.time = make_params(Domain::line, r, std::exp(eta[i++]), 1.0);
  }
  return h;
}

double log_jacobian(const Hyper& h, ModelKind kind) {
  const double x = 0.5 * (h.space.damping + 1.0);
  double j = std::log(h.space.range) + std::log(h.space.sd) + std::log(2.0 * x * (1.0 - x));
  if (has_direction(kind)) j += std::log(h.dir.range) + std::log(h.dir.sd);
  if (has_time(kind)) j += std::log(h.time.range) + std::log(h.time.sd);
  return j;
}

// ---------------------------------------------------------------------------
// Likelihood

PathLikelihood::PathLikelihood(Design d) : d_(std::move(d)) {
  if (d_.b.size() != d_.p_main || d_.A_obs.cols() != d_.p_main) throw ValidationError("design shape mismatch");
  a_ = Eigen::VectorXd(d_.A_obs.transpose() * Eigen::VectorXd::Ones(d_.A_obs.rows()));
  if (d_.p_time > 0) {
    if (d_.B.rows() != d_.p_time || d_.B.cols() != d_.p_main || d_.A_time.cols() != d_.p_time)
      throw ValidationError("temporal design shape mismatch");
    a_t_ = Eigen::VectorXd(d_.A_time.transpose() * Eigen::VectorXd::Ones(d_.A_time.rows()));
  }
}

double PathLikelihood::expected_count(const Eigen::VectorXd& x) const {
  if (x.size() != layout().size()) throw ValidationError("latent state has wrong length");
  const double beta = x[0];
  const auto w = x.segment(1, d_.p_main);
  if (d_.p_time == 0) return (d_.b.array() * (beta + w.array()).exp()).sum();
  const auto v = x.segment(1 + d_.p_main, d_.p_time);
  double total = 0.0;
  for (Eigen::Index c = 0; c < d_.B.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(d_.B, c); it; ++it) total += it.value() * std::exp(beta + v[it.row()] + w[c]);
  return total;
}

double PathLikelihood::value(const Eigen::VectorXd& x) const {
  const double beta = x[0];
  double ll = -expected_count(x) + d_.spikes * beta + a_.dot(x.segment(1, d_.p_main));
  if (d_.p_time > 0) ll += a_t_.dot(x.segment(1 + d_.p_main, d_.p_time));
  return ll;
}

void PathLikelihood::derivatives(const Eigen::VectorXd& x, Eigen::VectorXd& grad, SparseMatrix& neg_hess) const {
  if (x.size() != layout().size()) throw ValidationError("latent state has wrong length");
  const int p = d_.p_main, pt = d_.p_time, n = layout().size();
  const double beta = x[0];
  const auto w = x.segment(1, p);
  grad.setZero(n);
  std::vector<Triplet> t;
  if (pt == 0) {
    const Eigen::VectorXd e = (d_.b.array() * (beta + w.array()).exp()).matrix();
    const double total = e.sum();
    grad[0] = d_.spikes - total;
    grad.segment(1, p) = a_ - e;
    t.reserve(3 * static_cast<std::size_t>(p) + 1);
    t.emplace_back(0, 0, total);
    for (int k = 0; k < p; ++k) {
      t.emplace_back(0, 1 + k, e[k]);
      t.emplace_back(1 + k, 0, e[k]);
      t.emplace_back(1 + k, 1 + k, e[k]);
    }
  } else {
    const auto v = x.segment(1 + p, pt);
    Eigen::VectorXd col = Eigen::VectorXd::Zero(p), row = Eigen::VectorXd::Zero(pt);
    t.reserve(2 * static_cast<std::size_t>(d_.B.nonZeros()) + 4 * static_cast<std::size_t>(p + pt) + 1);
    for (Eigen::Index c = 0; c < d_.B.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(d_.B, c); it; ++it) {
        const double e = it.value() * std::exp(beta + v[it.row()] + w[c]);
        col[c] += e;
        row[it.row()] += e;
        t.emplace_back(1 + p + it.row(), 1 + c, e);
        t.emplace_back(1 + c, 1 + p + it.row(), e);
      }
    const double total = col.sum();
    grad[0] = d_.spikes - total;
    grad.segment(1, p) = a_ - col;
    grad.segment(1 + p, pt) = a_t_ - row;
    t.emplace_back(0, 0, total);
    for (int k = 0; k < p; ++k) {
      t.emplace_back(0, 1 + k, col[k]);
      t.emplace_back(1 + k, 0, col[k]);
      t.emplace_back(1 + k, 1 + k, col[k]);
    }
    for (int r = 0; r < pt; ++r) {
      t.emplace_back(0, 1 + p + r, row[r]);
      t.emplace_back(1 + p + r, 0, row[r]);
      t.emplace_back(1 + p + r, 1 + p + r, row[r]);
    }
  }
  neg_hess.resize(n, n);
  neg_hess.setFromTriplets(t.begin(), t.end());
}

// ---------------------------------------------------------------------------
// Newton / Laplace

double log_posterior(const LikelihoodTerm& lik, const GaussianPrior& prior, const Eigen::VectorXd& x) {
  const Eigen::VectorXd r = x - prior.mean;
  const double ll = lik.value(x);
  if (!std::isfinite(ll)) return kNegInf;
  return ll - 0.5 * r.dot(prior.precision * r);
}

void log_posterior_derivatives(const LikelihoodTerm& lik, const GaussianPrior& prior, const Eigen::VectorXd& x,
                               Eigen::VectorXd& grad, SparseMatrix& neg_hess) {
  lik.derivatives(x, grad, neg_hess);
  grad -= prior.precision * (x - prior.mean);
  neg_hess = neg_hess + prior.precision;
}

LaplaceResult laplace(const LikelihoodTerm& lik, const GaussianPrior& prior, const Eigen::VectorXd& x0,
                      const NewtonOptions& opt) {
  LaplaceResult res;
  res.posterior = std::make_shared<SparseCholesky>();
  SparseCholesky& chol = *res.posterior;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd g;
  SparseMatrix h;
  double f = log_posterior(lik, prior, x);
  if (!std::isfinite(f)) throw ConvergenceError("log posterior not finite at the initial state");

  bool converged = false;
  for (int it = 0; it <= opt.max_iterations; ++it) {
    log_posterior_derivatives(lik, prior, x, g, h);
    const double ll = lik.value(x);
    res.gradient_norm = g.cwiseAbs().maxCoeff();
    res.iterations = it;
    if (res.gradient_norm < opt.tolerance * std::max(1.0, std::abs(ll))) {
      chol.factorize(h);
      converged = true;
      break;
    }
    if (it == opt.max_iterations) break;

    // Levenberg boost only when the curvature is not numerically SPD.
    double lambda = 0.0;
    for (int attempt = 0;; ++attempt) {
      try {
        if (lambda == 0.0) {
          chol.factorize(h);
        } else {
          SparseMatrix boosted = h;
          for (Eigen::Index i = 0; i < boosted.rows(); ++i) boosted.coeffRef(i, i) += lambda;
          chol.factorize(boosted);
        }
        break;
      } catch (const FactorizationError&) {
        if (attempt > 20) throw;
        lambda = lambda == 0.0 ? 1e-8 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff()) : 10.0 * lambda;
      }
    }
    const Eigen::VectorXd d = chol.solve(g);
    const double slope = g.dot(d);
    double step = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      const Eigen::VectorXd xn = x + step * d;
      const double fn = log_posterior(lik, prior, xn);
      if (std::isfinite(fn) && fn >= f + 1e-4 * step * slope) {
        x = xn;
        f = fn;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No ascent possible at working precision; accept a near-stationary point.
      if (res.gradient_norm < 1e3 * opt.tolerance * std::max(1.0, std::abs(ll))) {
        chol.factorize(h);
        converged = true;
        break;
      }
      throw ConvergenceError("line search failed; gradient max-norm " + std::to_string(res.gradient_norm));
    }
  }
  if (!converged)
    throw ConvergenceError("Newton did not converge in " + std::to_string(opt.max_iterations) +
                           " iterations; gradient max-norm " + std::to_string(res.gradient_norm));

  res.mode = x;
  res.log_likelihood = lik.value(x);
  const Eigen::VectorXd r = x - prior.mean;
  const double logdet_q = prior.log_det ? *prior.log_det : SparseCholesky(prior.precision).logdet();
  res.log_evidence = res.log_likelihood - 0.5 * r.dot(prior.precision * r) + 0.5 * logdet_q - 0.5 * chol.logdet();
  return res;
}

// ---------------------------------------------------------------------------
// Model

LgcpModel::LgcpModel(ModelKind kind, MeshSet meshes, Design design, PriorConfig prior)
    : kind_(kind), meshes_(std::move(meshes)), lik_(std::move(design)), prior_(prior) {
  prior_.validate();
  if (lik_.design().kind != kind_) throw ValidationError("design built for a different model kind");
  if (!meshes_.space) throw ValidationError("spatial mesh required");
  ms_space_ = meshes_.space->mass_stiffness();
  if (has_direction(kind_)) {
    if (!meshes_.dir) throw ValidationError("circular mesh required");
    ms_dir_ = meshes_.dir->mass_stiffness();
  }
  if (has_time(kind_)) {
    if (!meshes_.time) throw ValidationError("temporal mesh required");
    ms_time_ = meshes_.time->mass_stiffness();
  }
}

GaussianPrior LgcpModel::latent_prior(const Hyper& h) const {
  const LatentLayout lay = layout();
  GaussianPrior g;
  g.mean = Eigen::VectorXd::Zero(lay.size());
  g.mean[0] = prior_.intercept_mean;

  const SparseMatrix qs = assemble_precision(ms_space_, h.space);
  const double ld_s = SparseCholesky(qs).logdet();
  SparseMatrix q_main;
  double logdet = -2.0 * std::log(prior_.intercept_sd);
  if (has_direction(kind_)) {
    const SparseMatrix qd = assemble_precision(ms_dir_, h.dir);
    const double ld_d = SparseCholesky(qd).logdet();
    q_main = kron_precision(qd, qs);
    logdet += static_cast<double>(qs.rows()) * ld_d + static_cast<double>(qd.rows()) * ld_s;
  } else {
    q_main = qs;
    logdet += ld_s;
  }
  std::vector<Triplet> t;
  t.emplace_back(0, 0, 1.0 / (prior_.intercept_sd * prior_.intercept_sd));
  append_block(t, q_main, lay.main_offset());
  if (has_time(kind_)) {
    const SparseMatrix qt = assemble_precision(ms_time_, h.time);
    logdet += SparseCholesky(qt).logdet();
    append_block(t, qt, lay.time_offset());
  }
  g.precision.resize(lay.size(), lay.size());
  g.precision.setFromTriplets(t.begin(), t.end());
  g.log_det = logdet;
  return g;
}

Eigen::VectorXd LgcpModel::initial_state() const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(layout().size());
  const auto& d = lik_.design();
  x[0] = d.spikes > 0.0 && d.path_length > 0.0 ? std::log(d.spikes / d.path_length) : prior_.intercept_mean;
  return x;
}

Eigen::VectorXd PosteriorFit::w_main() const { return laplace.mode.segment(1, p_main); }
Eigen::VectorXd PosteriorFit::w_time() const { return laplace.mode.segment(1 + p_main, p_time); }

PosteriorFit fit_map(const LgcpModel& model, const Hyper& h, const NewtonOptions& opt,
                     const Eigen::VectorXd* warm_start) {
  const PriorValue pv = log_prior_density(h, model.prior_config(), model.kind());
  if (pv.out_of_support) throw ValidationError("hyperparameters outside the prior support");
  PosteriorFit fit;
  fit.kind = model.kind();
  fit.hyper = h;
  fit.p_main = model.layout().p_main;
  fit.p_time = model.layout().p_time;
  const GaussianPrior prior = model.latent_prior(h);
  const Eigen::VectorXd x0 = warm_start && warm_start->size() == model.layout().size() ? *warm_start
                                                                                      : model.initial_state();
  fit.laplace = laplace(model.likelihood(), prior, x0, opt);
  fit.log_hyper_prior = pv.log_density + log_jacobian(h, model.kind());
  fit.objective = fit.laplace.log_evidence + fit.log_hyper_prior;
  return fit;
}

double laplace_log_marginal(const LgcpModel& model, const Hyper& h, const NewtonOptions& opt) {
  const PriorValue pv = log_prior_density(h, model.prior_config(), model.kind());
  if (pv.out_of_support || !std::isfinite(pv.log_density)) return kNegInf;
  return fit_map(model, h, opt).objective;
}

// ---------------------------------------------------------------------------
// Hyperparameter search

NelderMeadResult nelder_mead_maximize(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                                      const Eigen::VectorXd& step, int max_evaluations, double tolerance) {
  const int n = static_cast<int>(x0.size());
  NelderMeadResult res;
  std::vector<Eigen::VectorXd> pts;
  std::vector<double> val;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isnan(v) ? kNegInf : v;
  };
  pts.push_back(x0);
  val.push_back(eval(x0));
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x = x0;
    x[i] += step[i];
    pts.push_back(x);
    val.push_back(eval(x));
  }
  std::vector<int> order(n + 1);
  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return val[a] > val[b]; });
    const int best = order[0], worst = order[n], second = order[n - 1];
    double size = 0.0;
    for (int i = 1; i <= n; ++i) size = std::max(size, (pts[order[i]] - pts[best]).cwiseAbs().maxCoeff());
    const bool flat = std::isfinite(val[worst]) && val[best] - val[worst] <= tolerance;
    if ((flat && size < 1e-3) || size < 1e-8) break;
    if (res.evaluations >= max_evaluations) {
      res.hit_cap = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += pts[order[i]];
    centroid /= n;
    const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
    const double fr = eval(xr);
    if (fr > val[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(xe);
      if (fe > fr) {
        pts[worst] = xe;
        val[worst] = fe;
      } else {
        pts[worst] = xr;
        val[worst] = fr;
      }
      continue;
    }
    if (fr > val[second]) {
      pts[worst] = xr;
      val[worst] = fr;
      continue;
    }
    const bool outside = fr > val[worst];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(xc);
    if (fc > (outside ? fr : val[worst])) {
      pts[worst] = xc;
      val[worst] = fc;
      continue;
    }
    for (int i = 1; i <= n; ++i) {
      const int k = order[i];
      pts[k] = pts[best] + 0.5 * (pts[k] - pts[best]);
      val[k] = eval(pts[k]);
    }
  }
  const auto it = std::max_element(val.begin(), val.end());
  res.best = pts[static_cast<std::size_t>(it - val.begin())];
  res.value = *it;
  return res;
}

PosteriorFit optimize_hyper(const LgcpModel& model, const SearchOptions& opt) {
  const ModelKind kind = model.kind();
  std::optional<PosteriorFit> best;
  Eigen::VectorXd warm = model.initial_state();
  int evaluations = 0;

  auto objective = [&](const Eigen::VectorXd& eta) -> double {
    if (eta.cwiseAbs().maxCoeff() > 25.0) return kNegInf;
    Hyper h;
    try {
      h = from_unconstrained(eta, kind);
    } catch (const ValidationError&) {
      return kNegInf;
    }
    const PriorValue pv = log_prior_density(h, model.prior_config(), kind);
    if (pv.out_of_support || !std::isfinite(pv.log_density)) return kNegInf;
    PosteriorFit fit;
    try {
      fit = fit_map(model, h, opt.newton, &warm);
    } catch (const Error&) {
      try {
        fit = fit_map(model, h, opt.newton);
      } catch (const Error&) {
        return kNegInf;
      }
    }
    warm = fit.laplace.mode;
    if (!best || fit.objective > best->objective) best = fit;
    return fit.objective;
  };

  const Eigen::VectorXd start = to_unconstrained(prior_medians(model.prior_config()), kind);
  const int dim = static_cast<int>(start.size());
  const double start_value = objective(start);
  ++evaluations;
  if (!std::isfinite(start_value)) throw ConvergenceError("objective not finite at the prior medians");

  bool hit_cap = false;
  auto run = [&](const Eigen::VectorXd& x0, double step_size) {
    const auto r = nelder_mead_maximize(objective, x0, Eigen::VectorXd::Constant(dim, step_size), opt.max_evaluations,
                                        opt.tolerance);
    evaluations += r.evaluations;
    hit_cap = hit_cap || r.hit_cap;
  };
  run(start, opt.initial_step);
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  for (int r = 0; r < opt.restarts; ++r) {
    Eigen::VectorXd x0 = to_unconstrained(best->hyper, kind);
    for (int i = 0; i < dim; ++i) x0[i] += opt.initial_step * jitter(rng);
    run(x0, 0.5 * opt.initial_step);
  }
  PosteriorFit out = *best;
  out.evaluations = evaluations;
  out.hit_evaluation_cap = hit_cap;
  out.start_objective = start_value;
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t k) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Eigen::MatrixXd sample_posterior(const PosteriorFit& fit, int draws, std::uint64_t seed, int first) {
  if (draws < 1) throw ValidationError("need at least one posterior draw");
  if (!fit.laplace.posterior) throw ValidationError("fit has no posterior factorization");
  const Eigen::Index n = fit.laplace.mode.size();
  Eigen::MatrixXd out(n, draws);
  for (int k = 0; k < draws; ++k) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(first + k)));
    out.col(k) = fit.laplace.mode + fit.laplace.posterior->sample_from_normals(standard_normals(n, rng));
  }
  return out;
}

}  // namespace gridcox
