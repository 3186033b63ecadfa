#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridcox/config.hpp"
#include "gridcox/model.hpp"
#include "gridcox/trajectory.hpp"

namespace gridcox {

struct WalkOptions {
  double duration = 1800.0;  // s
  double dt = 0.033;         // s between samples
  Rect arena{0.0, 0.0, 100.0, 100.0};
  double persistence = 0.9;  // mean resultant length of the turn angle, in [0, 1)
  double speed = 15.0;       // median speed, cm/s
  double speed_log_sd = 0.5;
  double heading_noise = 0.3;  // sd of theta around the heading, rad
  std::uint64_t seed = 1;
};

/// Reflected correlated random walk sampled every dt; theta is the heading plus noise.
/// No spikes.
SessionData random_walk_trajectory(const WalkOptions& opt);

/// Log-intensity per cm given by weights on meshes: beta + basis . w (+ temporal basis . w_T).
struct LatentField {
  ModelKind kind = ModelKind::space;
  MeshSet meshes;
  double beta = 0.0;
  Eigen::VectorXd w_main;
  Eigen::VectorXd w_time;

  double log_intensity(double t, Point2 pos, double theta) const;
  /// At fraction f in [0, 1] along a segment built on the same meshes.
  double log_intensity_in(const Segment& seg, double f) const;
};

/// Field weights drawn from the GMRF priors of the active blocks.
struct SyntheticTruth {
  LatentField field;
  Hyper hyper;
  std::uint64_t seed = 0;
};

SyntheticTruth draw_truth(ModelKind kind, const MeshSet& meshes, const Hyper& hyper, double beta, std::uint64_t seed);
/// Posterior mode as a field.
LatentField field_from_fit(const PosteriorFit& fit, const MeshSet& meshes);

/// Intensity per cm at both ends of every segment.
std::vector<std::pair<double, double>> intensity_on_path(const LatentField& field, const SegmentedPath& segs);

struct SpikeEvent {
  double time = 0.0;
  Point2 pos;
  double theta = 0.0;
};

/// Log events per cm at fraction f along a segment (-inf for zero intensity).
using SegmentLogIntensity = std::function<double(const Segment&, double)>;

/// Thinning along the path. Each segment is split until neighbouring log-intensities
/// differ by less than 0.05; within a piece the rate is linear between its ends.
std::vector<SpikeEvent> simulate_spikes(const SegmentedPath& segs, const SegmentLogIntensity& log_intensity,
                                        std::uint64_t seed);
std::vector<SpikeEvent> simulate_spikes(const LatentField& field, const SessionData& path, std::uint64_t seed);

/// Copy of the path with existing spikes cleared and one spike row per event.
SessionData with_spikes(const SessionData& path, const std::vector<SpikeEvent>& events);

/// Time-rate raster (spikes per second), bilinear between cell centres.
struct RasterIntensity {
  RasterSpec grid;
  std::vector<double> rate;
  double at(Point2 p) const;
};

/// Spike train on the recorded path under a time-rate raster.
SessionData replay_rate_map(const RasterIntensity& raster, const SessionData& session, std::uint64_t seed);
/// Spike train on the recorded path under a fitted field.
SessionData replay_fit(const LatentField& field, const SessionData& session, std::uint64_t seed);

/// Simulation recipe read from JSON.
struct TruthSpec {
  ModelKind kind = ModelKind::space;
  WalkOptions walk;
  MeshConfig meshes;
  Hyper hyper;
  double beta = -2.0;  // log spikes per cm
};

TruthSpec load_truth_spec(const std::filesystem::path& path);
TruthSpec parse_truth_spec(const std::string& text);
std::string dump_truth_spec(const TruthSpec& spec);

struct Simulation {
  SessionData session;
  SyntheticTruth truth;
};

/// Trajectory, meshes over its arena, field draw and spikes, all from spec.walk.seed.
Simulation simulate(const TruthSpec& spec);

/// block,index,value rows: beta first, then the main block, then the temporal block.
void write_latent_csv(double beta, const Eigen::VectorXd& w_main, const Eigen::VectorXd& w_time,
                      const std::filesystem::path& path);

}  // namespace gridcox
