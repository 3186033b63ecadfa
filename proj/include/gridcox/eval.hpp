#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridcox/config.hpp"
#include "gridcox/model.hpp"
#include "gridcox/pipeline.hpp"

namespace gridcox {

/// Consecutive intervals of length tau covering [0, T]; the last may be shorter.
/// Fold f (0 or 1) trains on intervals with index % 2 == f and is scored on the rest,
/// so fold 0 trains on the first, third, ... interval.
struct FoldSpec {
  double duration = 0.0;
  double tau = 0.0;
  std::vector<double> edges;  // count() + 1 boundaries

  int count() const { return static_cast<int>(edges.size()) - 1; }
  double start(int i) const { return edges[i]; }
  double end(int i) const { return edges[i + 1]; }
  bool trains(int fold, int i) const { return i % 2 == fold; }
  /// Interval containing t, intervals half-open except the last.
  int interval_of(double t) const;
  std::vector<double> interior_edges() const;
  TimeFilter training_filter(int fold) const;
};

/// Throws ValidationError unless 0 < tau and there are at least two intervals.
FoldSpec make_folds(double duration, double tau);

/// Sparse trapezoid terms of the expected count over one interval:
/// sum_k weight_k exp(beta + x_main[main_k] + x_time[time_k]), time_k = -1 when absent.
struct CountQuadrature {
  std::vector<int> main;
  std::vector<int> time;
  std::vector<double> weight;
  double path_length = 0.0;
};

/// Segments are assigned to intervals by their midpoint time. The session should be
/// segmented with the fold edges as extra breaks.
std::vector<CountQuadrature> interval_quadratures(const PreparedSession& prep, const FoldSpec& folds);
/// Spikes per interval.
std::vector<int> interval_counts(const SessionData& data, const FoldSpec& folds);

/// Expected count for each listed interval (rows) under each draw (columns).
Eigen::MatrixXd expected_counts(const std::vector<CountQuadrature>& quad, const std::vector<int>& intervals,
                                const Eigen::MatrixXd& draws, const LatentLayout& layout);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Predictive count moments from per-draw expected counts: mean of the draws and
/// mean plus their (1/K) empirical variance. Needs K >= 2.
Moments predictive_moments(const Eigen::Ref<const Eigen::VectorXd>& expected);

double score_se(const Moments& m, double count);
/// Throws ValidationError when the predictive variance is zero.
double score_ds(const Moments& m, double count);

struct PermutationResult {
  double observed = 0.0;
  double p = 1.0;        // fraction of randomized means <= observed
  double p_upper = 1.0;  // fraction >= observed
  long ties = 0;
  long permutations = 0;
  double two_sided() const;
};

/// Random sign-flip test of the mean difference. Deterministic given (seed, J),
/// independent of the thread count.
PermutationResult permutation_test(const std::vector<double>& differences, long permutations, std::uint64_t seed,
                                   int threads = 1);

struct FitSummary {
  ModelKind kind = ModelKind::space;
  int fold = 0;
  Hyper hyper;
  double objective = 0.0;
  int evaluations = 0;
  bool hit_evaluation_cap = false;
};

/// Predictions for one held-out interval.
struct IntervalScore {
  int interval = 0;
  int fold = 0;  // fold whose fit produced the prediction
  double t0 = 0.0, t1 = 0.0;
  double path_length = 0.0;
  int count = 0;
  std::vector<Moments> moments;  // one per model
  std::vector<double> se, ds;
};

struct CrossvalResult {
  FoldSpec folds;
  std::vector<ModelKind> models;
  std::vector<IntervalScore> intervals;  // scored intervals, in time order
  int skipped = 0;                       // intervals without path (zero predictive variance)
  std::vector<FitSummary> fits;
};

/// Fits every model on each fold (latent field and hyperparameters) and scores the
/// held-out intervals with K posterior draws.
CrossvalResult crossval(const SessionData& data, const std::vector<ModelKind>& models, double tau,
                        const RunConfig& cfg, int threads = 1);

/// Difference statistics of a model against the baseline (first model) on a set of intervals.
struct TableRow {
  double tau = 0.0;
  std::string fold;  // "1", "2" or "combined"
  ModelKind model = ModelKind::space;
  int intervals = 0;
  double mean_se = 0.0, mean_ds = 0.0;
  bool has_difference = false;  // false for the baseline row
  double diff_se = 0.0, diff_ds = 0.0;
  double negative_se = 0.0, negative_ds = 0.0;  // ties count as not negative
  double sd_se = 0.0, sd_ds = 0.0;              // root mean square of the differences
  PermutationResult test_se, test_ds;
};

/// Rows per fold and for both folds pooled. The pooled row's sd is the average of the
/// two fold values.
std::vector<TableRow> score_table(const CrossvalResult& r, long permutations, std::uint64_t seed, int threads = 1);

/// Per-interval predictions and scores.
void write_interval_csv(const std::vector<std::pair<double, const CrossvalResult*>>& runs,
                        const std::filesystem::path& path);
/// Difference columns are omitted when only one model was scored.
void write_table_csv(const std::vector<TableRow>& rows, bool with_differences, const std::filesystem::path& path);

}  // namespace gridcox
