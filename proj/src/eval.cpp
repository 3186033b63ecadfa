#include "gridcox/eval.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "gridcox/csv.hpp"
#include "gridcox/error.hpp"
#include "gridcox/parallel.hpp"

namespace gridcox {

namespace {

constexpr int kDrawChunk = 250;
constexpr long kPermutationChunk = 1L << 16;

std::string fmt(double x) { return csv::format_double(x); }

}  // namespace

// ---------------------------------------------------------------------------
// Folds

int FoldSpec::interval_of(double t) const {
  const int i = static_cast<int>(std::floor(t / tau));
  return std::clamp(i, 0, count() - 1);
}

std::vector<double> FoldSpec::interior_edges() const {
  return std::vector<double>(edges.begin() + 1, edges.end() - 1);
}

TimeFilter FoldSpec::training_filter(int fold) const {
  return [spec = *this, fold](double t) { return spec.trains(fold, spec.interval_of(t)); };
}

FoldSpec make_folds(double duration, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("interval length tau must be positive");
  if (!(duration > 0.0)) throw ValidationError("session has zero duration");
  const int m = static_cast<int>(std::ceil(duration / tau - 1e-9));
  if (m < 2) throw ValidationError("tau leaves fewer than two intervals; one fold would be empty");
  FoldSpec f;
  f.duration = duration;
  f.tau = tau;
  for (int i = 0; i < m; ++i) f.edges.push_back(i * tau);
  f.edges.push_back(duration);
  return f;
}

std::vector<CountQuadrature> interval_quadratures(const PreparedSession& prep, const FoldSpec& folds) {
  std::vector<std::unordered_map<std::uint64_t, double>> acc(folds.count());
  std::vector<CountQuadrature> out(folds.count());
  for (const auto& seg : prep.segments.segments) {
    const int i = folds.interval_of(seg.mid_time());
    out[i].path_length += seg.length;
    auto& m = acc[i];
    segment_quadrature_terms(seg, prep.meshes, prep.kind, [&](int idx, int r, double v) {
      m[(static_cast<std::uint64_t>(idx) << 32) | static_cast<std::uint32_t>(r + 1)] += v;
    });
  }
  for (int i = 0; i < folds.count(); ++i) {
    std::vector<std::pair<std::uint64_t, double>> terms(acc[i].begin(), acc[i].end());
    std::sort(terms.begin(), terms.end());
    for (const auto& [key, v] : terms) {
      out[i].main.push_back(static_cast<int>(key >> 32));
      out[i].time.push_back(static_cast<int>(key & 0xffffffffULL) - 1);
      out[i].weight.push_back(v);
    }
  }
  return out;
}

std::vector<int> interval_counts(const SessionData& data, const FoldSpec& folds) {
  std::vector<int> n(folds.count(), 0);
  for (const auto& s : data.samples)
    if (s.spike) ++n[folds.interval_of(s.time)];
  return n;
}

// ---------------------------------------------------------------------------
// Predictive moments and scores

Eigen::MatrixXd expected_counts(const std::vector<CountQuadrature>& quad, const std::vector<int>& intervals,
                                const Eigen::MatrixXd& draws, const LatentLayout& layout) {
  if (draws.rows() != layout.size()) throw ValidationError("draws do not match the latent layout");
  Eigen::MatrixXd out(intervals.size(), draws.cols());
  for (Eigen::Index k = 0; k < draws.cols(); ++k) {
    const Eigen::VectorXd ex = draws.col(k).array().exp();
    for (std::size_t r = 0; r < intervals.size(); ++r) {
      const auto& q = quad.at(intervals[r]);
      double total = 0.0;
      for (std::size_t j = 0; j < q.weight.size(); ++j) {
        double e = q.weight[j] * ex[1 + q.main[j]];
        if (q.time[j] >= 0) e *= ex[layout.time_offset() + q.time[j]];
        total += e;
      }
      out(static_cast<Eigen::Index>(r), k) = ex[0] * total;
    }
  }
  return out;
}

Moments predictive_moments(const Eigen::Ref<const Eigen::VectorXd>& expected) {
  const Eigen::Index k = expected.size();
  if (k < 2) throw ValidationError("need at least two posterior draws");
  Moments m;
  m.mean = expected.mean();
  m.variance = m.mean + (expected.array() - m.mean).square().sum() / static_cast<double>(k);
  return m;
}

double score_se(const Moments& m, double count) { return (count - m.mean) * (count - m.mean); }

double score_ds(const Moments& m, double count) {
  if (!(m.variance > 0.0)) throw ValidationError("Dawid-Sebastiani score undefined for zero predictive variance");
  const double z = count - m.mean;
  return z * z / m.variance + std::log(m.variance);
}

// ---------------------------------------------------------------------------
// Permutation test

double PermutationResult::two_sided() const { return std::min(1.0, 2.0 * std::min(p, 1.0 - p)); }

PermutationResult permutation_test(const std::vector<double>& d, long permutations, std::uint64_t seed,
                                   int threads) {
  if (d.empty()) throw ValidationError("permutation test needs at least one difference");
  if (permutations < 1) throw ValidationError("permutation test needs J >= 1");
  const std::size_t m = d.size();
  const double inv_m = 1.0 / static_cast<double>(m);
  PermutationResult res;
  res.permutations = permutations;
  double sum = 0.0;
  for (double x : d) sum += x;
  res.observed = sum * inv_m;

  const long chunks = (permutations + kPermutationChunk - 1) / kPermutationChunk;
  std::vector<long> below(chunks, 0), above(chunks, 0), ties(chunks, 0);
  parallel_for(static_cast<std::size_t>(chunks), threads, [&](std::size_t c) {
    std::mt19937_64 rng(derive_seed(seed, c));
    const long begin = static_cast<long>(c) * kPermutationChunk;
    const long end = std::min(permutations, begin + kPermutationChunk);
    for (long j = begin; j < end; ++j) {
      double s = 0.0;
      std::uint64_t bits = 0;
      for (std::size_t i = 0; i < m; ++i) {
        if (i % 64 == 0) bits = rng();
        s += (bits & 1ULL) ? d[i] : -d[i];
        bits >>= 1;
      }
      const double t = s * inv_m;
      if (t <= res.observed) ++below[c];
      if (t >= res.observed) ++above[c];
      if (t == res.observed) ++ties[c];
    }
  });
  long b = 0, a = 0;
  for (long c = 0; c < chunks; ++c) {
    b += below[c];
    a += above[c];
    res.ties += ties[c];
  }
  res.p = static_cast<double>(b) / static_cast<double>(permutations);
  res.p_upper = static_cast<double>(a) / static_cast<double>(permutations);
  return res;
}

// ---------------------------------------------------------------------------
// Cross-validation

CrossvalResult crossval(const SessionData& data, const std::vector<ModelKind>& models, double tau,
                        const RunConfig& cfg, int threads) {
  if (models.empty()) throw ValidationError("no models to compare");
  CrossvalResult res;
  res.folds = make_folds(data.duration(), tau);
  res.models = models;
  const FoldSpec& folds = res.folds;
  const std::vector<double> breaks = folds.interior_edges();
  const std::vector<int> counts = interval_counts(data, folds);
  const std::size_t nm = models.size();

  std::vector<PreparedSession> prep(nm);
  std::vector<std::vector<CountQuadrature>> quad(nm);
  parallel_for(nm, threads, [&](std::size_t m) {
    prep[m] = prepare_session(data, cfg.meshes, models[m], breaks);
    quad[m] = interval_quadratures(prep[m], folds);
  });

  // moments[m][i] for the held-out intervals of each fold
  std::vector<std::vector<Moments>> moments(nm, std::vector<Moments>(folds.count()));
  res.fits.resize(2 * nm);
  const int draws = cfg.inference.posterior_draws;
  parallel_for(2 * nm, threads, [&](std::size_t job) {
    const std::size_t m = job / 2;
    const int fold = static_cast<int>(job % 2);
    const PosteriorFit fit = fit_session(prep[m], data, cfg, folds.training_filter(fold));
    res.fits[job] = {models[m], fold, fit.hyper, fit.objective, fit.evaluations, fit.hit_evaluation_cap};

    std::vector<int> test;
    for (int i = 0; i < folds.count(); ++i)
      if (!folds.trains(fold, i) && quad[0][i].path_length > 0.0) test.push_back(i);
    if (test.empty()) return;
    const LatentLayout layout{fit.p_main, fit.p_time};
    const std::uint64_t seed = derive_seed(cfg.seed, 1000 + job);
    Eigen::MatrixXd e(test.size(), draws);
    for (int first = 0; first < draws; first += kDrawChunk) {
      const int n = std::min(kDrawChunk, draws - first);
      e.middleCols(first, n) = expected_counts(quad[m], test, sample_posterior(fit, n, seed, first), layout);
    }
    for (std::size_t r = 0; r < test.size(); ++r)
      moments[m][test[r]] = predictive_moments(e.row(static_cast<Eigen::Index>(r)).transpose());
  });

  for (int i = 0; i < folds.count(); ++i) {
    if (!(quad[0][i].path_length > 0.0)) {
      ++res.skipped;
      continue;
    }
    IntervalScore s;
    s.interval = i;
    s.fold = folds.trains(0, i) ? 1 : 0;
    s.t0 = folds.start(i);
    s.t1 = folds.end(i);
    s.path_length = quad[0][i].path_length;
    s.count = counts[i];
    for (std::size_t m = 0; m < nm; ++m) {
      s.moments.push_back(moments[m][i]);
      s.se.push_back(score_se(moments[m][i], s.count));
      s.ds.push_back(score_ds(moments[m][i], s.count));
    }
    res.intervals.push_back(std::move(s));
  }
  return res;
}

std::vector<TableRow> score_table(const CrossvalResult& r, long permutations, std::uint64_t seed, int threads) {
  std::vector<TableRow> rows;
  const std::size_t nm = r.models.size();
  // sd per (fold, model) for the pooled row
  std::vector<std::vector<std::pair<double, double>>> fold_sd(2, std::vector<std::pair<double, double>>(nm));
  std::vector<std::vector<bool>> fold_has(2, std::vector<bool>(nm, false));
  for (int part = 0; part < 3; ++part) {
    std::vector<const IntervalScore*> sel;
    for (const auto& s : r.intervals)
      if (part == 2 || s.fold == part) sel.push_back(&s);
    if (sel.empty()) continue;
    const double n = static_cast<double>(sel.size());
    for (std::size_t m = 0; m < nm; ++m) {
      TableRow row;
      row.tau = r.folds.tau;
      row.fold = part == 2 ? "combined" : std::to_string(part + 1);
      row.model = r.models[m];
      row.intervals = static_cast<int>(sel.size());
      for (const auto* s : sel) {
        row.mean_se += s->se[m] / n;
        row.mean_ds += s->ds[m] / n;
      }
      if (m > 0) {
        row.has_difference = true;
        std::vector<double> dse, dds;
        for (const auto* s : sel) {
          dse.push_back(s->se[m] - s->se[0]);
          dds.push_back(s->ds[m] - s->ds[0]);
        }
        double ss_se = 0.0, ss_ds = 0.0;
        int neg_se = 0, neg_ds = 0;
        for (std::size_t i = 0; i < dse.size(); ++i) {
          row.diff_se += dse[i] / n;
          row.diff_ds += dds[i] / n;
          neg_se += dse[i] < 0.0;
          neg_ds += dds[i] < 0.0;
          ss_se += dse[i] * dse[i];
          ss_ds += dds[i] * dds[i];
        }
        row.negative_se = neg_se / n;
        row.negative_ds = neg_ds / n;
        row.sd_se = std::sqrt(ss_se / n);
        row.sd_ds = std::sqrt(ss_ds / n);
        if (part < 2) {
          fold_sd[part][m] = {row.sd_se, row.sd_ds};
          fold_has[part][m] = true;
        } else if (fold_has[0][m] && fold_has[1][m]) {
          row.sd_se = 0.5 * (fold_sd[0][m].first + fold_sd[1][m].first);
          row.sd_ds = 0.5 * (fold_sd[0][m].second + fold_sd[1][m].second);
        }
        const std::uint64_t base = derive_seed(seed, 16 * m + static_cast<std::uint64_t>(part));
        row.test_se = permutation_test(dse, permutations, derive_seed(base, 0), threads);
        row.test_ds = permutation_test(dds, permutations, derive_seed(base, 1), threads);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_interval_csv(const std::vector<std::pair<double, const CrossvalResult*>>& runs,
                        const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << "tau,fold,interval,t0,t1,path_length,count,model,mean,variance,se,ds\n";
  for (const auto& [tau, r] : runs)
    for (const auto& s : r->intervals)
      for (std::size_t m = 0; m < r->models.size(); ++m)
        out << fmt(tau) << ',' << s.fold + 1 << ',' << s.interval << ',' << fmt(s.t0) << ',' << fmt(s.t1) << ','
            << fmt(s.path_length) << ',' << s.count << ',' << to_string(r->models[m]) << ','
            << fmt(s.moments[m].mean) << ',' << fmt(s.moments[m].variance) << ',' << fmt(s.se[m]) << ','
            << fmt(s.ds[m]) << '\n';
}

void write_table_csv(const std::vector<TableRow>& rows, bool with_differences, const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << "tau,fold,model,intervals,mean_se,mean_ds";
  if (with_differences)
    out << ",diff_se,diff_ds,negative_se,negative_ds,sd_se,sd_ds,p_se,p_ds,p_se_two_sided,p_ds_two_sided";
  out << '\n';
  for (const auto& r : rows) {
    out << fmt(r.tau) << ',' << r.fold << ',' << to_string(r.model) << ',' << r.intervals << ',' << fmt(r.mean_se)
        << ',' << fmt(r.mean_ds);
    if (with_differences) {
      if (r.has_difference)
        out << ',' << fmt(r.diff_se) << ',' << fmt(r.diff_ds) << ',' << fmt(r.negative_se) << ','
            << fmt(r.negative_ds) << ',' << fmt(r.sd_se) << ',' << fmt(r.sd_ds) << ',' << fmt(r.test_se.p) << ','
            << fmt(r.test_ds.p) << ',' << fmt(r.test_se.two_sided()) << ',' << fmt(r.test_ds.two_sided());
      else
        out << ",,,,,,,,,,";
    }
    out << '\n';
  }
}

}  // namespace gridcox
