#include "gridcox/spde.hpp"

#include <cmath>
#include <complex>
#include <fstream>

#ifdef GRIDCOX_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#endif

#include "gridcox/csv.hpp"
#include "gridcox/error.hpp"

namespace gridcox {

namespace {

void check_args(double kappa, double phi, double sigma) {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw ValidationError("kappa must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be positive");
  if (!(phi > -1.0) || !std::isfinite(phi)) throw ValidationError("damping must exceed -1");
}

double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

// K0(z) = int_0^inf exp(-z cosh t) dt for Re z > 0, by the trapezoid rule on the
// even, doubly-exponentially decaying integrand.
std::complex<double> bessel_k0(std::complex<double> z) {
  const double re = z.real();
  const double t_max = std::acosh(std::max(60.0 / re, 1.0)) + 0.5;
  const double freq = std::abs(z.imag()) * std::sinh(t_max);
  const double h = std::min(0.02, 0.25 / std::max(freq, 1e-300));
  const auto n = static_cast<long>(std::ceil(t_max / h));
  std::complex<double> sum = 0.5 * std::exp(-z);
  for (long k = 1; k <= n; ++k) sum += std::exp(-z * std::cosh(k * h));
  return sum * h;
}

double circle_variance(double kappa, double phi) {
  const double pk = kTwoPi * kappa;
  if (phi <= 1.0) {
    // Exact for phi = 1 as the limit y -> 0; written without the 1/sqrt(1-phi^2)
    // singularity so the critical case needs no special branch.
    const double alpha = std::acos(phi);
    const double x = std::cos(0.5 * alpha), y = std::sin(0.5 * alpha);
    const double u = pk * x, v = pk * y;
    const double ch = std::cosh(u);
    const double num = u * sinc(v) / ch + std::tanh(u);
    const double den = 1.0 - std::cos(v) / ch;
    return num / den / (4.0 * kappa * kappa * kappa * x);
  }
  const double r = std::sqrt(phi * phi - 1.0);
  const double za = 0.5 * pk * std::sqrt(phi + r);
  const double zb = 0.5 * pk * std::sqrt(phi - r);
  auto cz = [](double z) { return 1.0 / (std::tanh(z) * z); };
  return kPi / (4.0 * kappa * kappa * r) * (cz(zb) - cz(za));
}

double circle_cov_critical(double theta, double kappa) {
  double d = wrap_angle(std::abs(theta));
  if (d > kPi) d = kTwoPi - d;
  const double e = std::exp(-kTwoPi * kappa);
  const double one_m = 1.0 - e;
  // cosh(a kappa) / sinh^2(pi kappa) for 0 <= a <= 2 pi
  auto ch_over_sh2 = [&](double a) {
    return 2.0 * (std::exp((a - kTwoPi) * kappa) + std::exp(-(a + kTwoPi) * kappa)) / (one_m * one_m);
  };
  const double t1 = 0.5 * d * ch_over_sh2(kTwoPi - d);
  const double t2 = (kPi - 0.5 * d) * ch_over_sh2(d);
  const double t3 = (std::exp(-d * kappa) + std::exp((d - kTwoPi) * kappa)) / (one_m * kappa);
  return (t1 + t2 + t3) / (4.0 * kappa * kappa);
}

}  // namespace

std::string to_string(Domain d) {
  switch (d) {
    case Domain::plane: return "plane";
    case Domain::circle: return "circle";
    case Domain::line: return "line";
  }
  return "?";
}

Domain domain_from_string(const std::string& s) {
  if (s == "plane") return Domain::plane;
  if (s == "circle") return Domain::circle;
  if (s == "line") return Domain::line;
  throw ValidationError("unknown domain '" + s + "'");
}

double kappa_from_range(Domain d, double range) {
  if (!(range > 0.0)) throw ValidationError("range must be positive");
  return (d == Domain::plane ? std::sqrt(8.0) : std::sqrt(12.0)) / range;
}

double range_from_kappa(Domain d, double kappa) {
  return (d == Domain::plane ? std::sqrt(8.0) : std::sqrt(12.0)) / kappa;
}

SpdeParams normalize_tau(SpdeParams p) {
  if (!(p.sd > 0.0)) throw ValidationError("marginal sd must be positive");
  p.kappa = kappa_from_range(p.domain, p.range);
  p.tau = std::sqrt(marginal_variance(p.domain, p.kappa, p.damping, 1.0)) / p.sd;
  return p;
}

SpdeParams make_params(Domain d, double range, double sd, double damping) {
  SpdeParams p;
  p.domain = d;
  p.range = range;
  p.sd = sd;
  p.damping = damping;
  return normalize_tau(p);
}

SparseMatrix assemble_precision(const MassStiffness& ms, double kappa, double tau, double phi) {
  if (!(phi > -1.0)) throw ValidationError("damping must exceed -1");
  const auto n = static_cast<Eigen::Index>(ms.size());
  if (ms.stiffness.rows() != n || ms.stiffness.cols() != n) throw ValidationError("mass/stiffness size mismatch");
  const Eigen::VectorXd cinv = ms.mass.cwiseInverse();
  SparseMatrix c(n, n);
  c.reserve(Eigen::VectorXi::Constant(n, 1));
  for (Eigen::Index i = 0; i < n; ++i) c.insert(i, i) = ms.mass[i];
  const SparseMatrix& g = ms.stiffness;
  const SparseMatrix gcg = SparseMatrix(g * cinv.asDiagonal()) * g;
  const double k2 = kappa * kappa;
  SparseMatrix q = (k2 * k2) * c + (2.0 * phi * k2) * g + gcg;
  q *= tau * tau;
  q.prune(0.0);
  q.makeCompressed();
  return q;
}

SparseMatrix assemble_precision(const MassStiffness& ms, const SpdeParams& p) {
  return assemble_precision(ms, p.kappa, p.tau, p.damping);
}

SparseMatrix kron_precision(const SparseMatrix& qa, const SparseMatrix& qb) {
  const Eigen::Index pb = qb.rows();
  SparseMatrix out(qa.rows() * pb, qa.cols() * qb.cols());
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(qa.nonZeros()) * static_cast<std::size_t>(qb.nonZeros()));
  for (Eigen::Index ja = 0; ja < qa.outerSize(); ++ja)
    for (SparseMatrix::InnerIterator a(qa, ja); a; ++a)
      for (Eigen::Index jb = 0; jb < qb.outerSize(); ++jb)
        for (SparseMatrix::InnerIterator b(qb, jb); b; ++b)
          trips.emplace_back(a.row() * pb + b.row(), a.col() * qb.cols() + b.col(), a.value() * b.value());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

double spectral_density(Domain d, double omega, double kappa, double phi, double sigma) {
  check_args(kappa, phi, sigma);
  const double k2 = kappa * kappa, w2 = omega * omega;
  const double denom = k2 * k2 + 2.0 * phi * k2 * w2 + w2 * w2;
  const double norm = d == Domain::plane ? kTwoPi * kTwoPi : kTwoPi;
  return sigma * sigma / (norm * denom);
}

double marginal_variance(Domain d, double kappa, double phi, double sigma) {
  check_args(kappa, phi, sigma);
  const double s2 = sigma * sigma;
  const double k2 = kappa * kappa;
  switch (d) {
    case Domain::plane: {
      if (phi == 1.0) return s2 / (4.0 * kPi * k2);
      if (phi < 1.0) {
        const double r = std::sqrt((1.0 - phi) * (1.0 + phi));
        return s2 * std::atan2(r, phi) / (4.0 * kPi * k2 * r);
      }
      const double r = std::sqrt((phi - 1.0) * (phi + 1.0));
      return s2 * std::atanh(r / phi) / (4.0 * kPi * k2 * r);
    }
    case Domain::circle: return s2 * circle_variance(kappa, phi);
    case Domain::line: return s2 / (4.0 * k2 * kappa) * std::sqrt(2.0 / (1.0 + phi));
  }
  return 0.0;
}

double covariance(Domain d, double lag, double kappa, double phi, double sigma) {
  check_args(kappa, phi, sigma);
  const double s2 = sigma * sigma;
  const double k2 = kappa * kappa;
  switch (d) {
    case Domain::plane: {
      if (phi > 1.0) throw NoClosedFormError("plane covariance has no closed form for damping > 1");
      const double r = std::abs(lag);
      if (r == 0.0) return marginal_variance(d, kappa, phi, sigma);
      const double kr = kappa * r;
      if (phi == 1.0) return s2 * kr * std::cyl_bessel_k(1.0, kr) / (4.0 * kPi * k2);
      const double gamma = std::acos(phi) / kPi;
      const auto z = std::polar(kr, -0.5 * kPi * gamma);
      return s2 * bessel_k0(z).imag() / (kTwoPi * std::sin(kPi * gamma) * k2);
    }
    case Domain::line: {
      if (phi > 1.0) throw NoClosedFormError("line covariance has no closed form for damping > 1");
      const double t = std::abs(lag);
      if (phi == 1.0) return s2 * (1.0 + kappa * t) * std::exp(-kappa * t) / (4.0 * k2 * kappa);
      const double half = 0.5 * std::acos(phi);
      return s2 / (2.0 * std::sin(2.0 * half) * k2 * kappa) * std::exp(-kappa * std::cos(half) * t) *
             std::sin(half + kappa * std::sin(half) * t);
    }
    case Domain::circle: {
      if (phi != 1.0) throw NoClosedFormError("circle covariance is closed-form only for damping = 1");
      return s2 * circle_cov_critical(lag, kappa);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------

#ifdef GRIDCOX_HAVE_CHOLMOD

namespace {

// Exposes the factor for the triangular solves used in sampling.
class CholmodLLT : public Eigen::CholmodSupernodalLLT<SparseMatrix, Eigen::Lower> {
 public:
  CholmodLLT() { cholmod().print = 0; }
  cholmod_factor* factor() const { return m_cholmodFactor; }
};

}  // namespace

struct SparseCholesky::Impl {
  CholmodLLT llt;
};

const char* SparseCholesky::backend() { return "cholmod-supernodal"; }

#else

struct SparseCholesky::Impl {
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt;
};

const char* SparseCholesky::backend() { return "eigen-simplicial"; }

#endif

SparseCholesky::SparseCholesky() : impl_(std::make_unique<Impl>()) {}
SparseCholesky::SparseCholesky(const SparseMatrix& q) : SparseCholesky() { compute(q); }
SparseCholesky::~SparseCholesky() = default;
SparseCholesky::SparseCholesky(SparseCholesky&&) noexcept = default;
SparseCholesky& SparseCholesky::operator=(SparseCholesky&&) noexcept = default;

void SparseCholesky::compute(const SparseMatrix& q) {
  n_ = q.rows();
  nnz_ = q.nonZeros();
  impl_->llt.analyzePattern(q);
  analyzed_ = true;
  impl_->llt.factorize(q);
  ok_ = impl_->llt.info() == Eigen::Success;
  if (!ok_) throw FactorizationError("sparse Cholesky failed: matrix not positive definite");
}

void SparseCholesky::factorize(const SparseMatrix& q) {
  if (!analyzed_ || q.rows() != n_ || q.nonZeros() != nnz_) {
    compute(q);
    return;
  }
  impl_->llt.factorize(q);
  ok_ = impl_->llt.info() == Eigen::Success;
  if (!ok_) throw FactorizationError("sparse Cholesky failed: matrix not positive definite");
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& b) const { return impl_->llt.solve(b); }

#ifdef GRIDCOX_HAVE_CHOLMOD

double SparseCholesky::logdet() const { return impl_->llt.logDeterminant(); }

Eigen::VectorXd SparseCholesky::sample_from_normals(const Eigen::VectorXd& z) const {
  // P Q P^T = L L^T, so x = P^T L^-T z has covariance Q^-1.
  Eigen::VectorXd zz = z;
  cholmod_dense b = Eigen::viewAsCholmod(zz);
  auto& common = const_cast<CholmodLLT&>(impl_->llt).cholmod();
  cholmod_dense* y = cholmod_solve(CHOLMOD_Lt, impl_->llt.factor(), &b, &common);
  cholmod_dense* x = cholmod_solve(CHOLMOD_Pt, impl_->llt.factor(), y, &common);
  Eigen::VectorXd out = Eigen::Map<const Eigen::VectorXd>(static_cast<const double*>(x->x), n_);
  cholmod_free_dense(&y, &common);
  cholmod_free_dense(&x, &common);
  return out;
}

#else

double SparseCholesky::logdet() const {
  double s = 0.0;
  const auto& m = impl_->llt.matrixL().nestedExpression();
  for (Eigen::Index j = 0; j < m.outerSize(); ++j) s += std::log(m.coeff(j, j));
  return 2.0 * s;
}

Eigen::VectorXd SparseCholesky::sample_from_normals(const Eigen::VectorXd& z) const {
  // P Q P^T = L L^T, so x = P^T L^-T z has covariance Q^-1.
  const Eigen::VectorXd y = impl_->llt.matrixU().solve(z);
  return impl_->llt.permutationPinv() * y;
}

#endif

Eigen::VectorXd standard_normals(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = nd(rng);
  return z;
}

Eigen::VectorXd sample_gmrf(const SparseMatrix& q, std::uint64_t seed) {
  SparseCholesky chol(q);
  std::mt19937_64 rng(seed);
  return chol.sample_from_normals(standard_normals(q.rows(), rng));
}

void export_matrix_csv(const SparseMatrix& q, const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << "row,col,value\n";
  for (Eigen::Index j = 0; j < q.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(q, j); it; ++it)
      if (it.row() >= it.col()) out << it.row() << ',' << it.col() << ',' << csv::format_double(it.value()) << '\n';
}

}  // namespace gridcox
