#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "gridcox/mesh.hpp"

namespace gridcox {

struct Sample {
  double time = 0.0;  // s
  Point2 pos;         // cm
  double theta = 0.0; // rad in [0, 2pi)
  bool spike = false;
};

struct SessionData {
  std::vector<Sample> samples;
  Rect arena;

  double duration() const { return samples.empty() ? 0.0 : samples.back().time; }
  std::size_t spike_count() const;
  std::vector<double> spike_times() const;
  /// Polyline length of the position samples.
  double path_length() const;
  /// max/min inter-sample gap (reported, not enforced).
  double gap_ratio() const;
};

/// Read time,x,y,theta,spike. The arena defaults to the bounding box of the positions.
SessionData load_session(const std::filesystem::path& path);
SessionData parse_session(std::istream& in);
void save_session(const SessionData& data, const std::filesystem::path& path);
/// Throws ParseError-style ValidationErrors for non-monotone time, bad angles, bad flags.
void validate_session(const SessionData& data);
Rect bounding_box(const SessionData& data);

enum class ModelKind { space, space_time, space_dir, space_dir_time };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);  // m0, m0t, mxt, mxtt
inline bool has_direction(ModelKind k) { return k == ModelKind::space_dir || k == ModelKind::space_dir_time; }
inline bool has_time(ModelKind k) { return k == ModelKind::space_time || k == ModelKind::space_dir_time; }

struct MeshSet {
  std::shared_ptr<const TriMesh2D> space;
  std::shared_ptr<const CircularMesh> dir;   // may be null
  std::shared_ptr<const TemporalMesh> time;  // may be null
};

/// Part of the path lying in one (triangle, arc, temporal cell) prism.
struct Segment {
  double t0 = 0.0, t1 = 0.0;
  Point2 p0, p1;
  double th0 = 0.0, th1 = 0.0;  // wrapped angles
  double length = 0.0;          // cm
  int tri = -1;
  int arc = -1;   // -1 without a circular mesh
  int cell = -1;  // -1 without a temporal mesh
  std::size_t sample = 0;  // index of the sample pair it came from
  double mid_time() const { return 0.5 * (t0 + t1); }
};

struct SegmentedPath {
  std::vector<Segment> segments;
  double total_length = 0.0;
  double duration = 0.0;
};

/// Split every inter-sample segment at triangle edges, circular knots (along the
/// shortest arc), temporal knots, and the given extra break times. Zero-length
/// pieces are dropped.
SegmentedPath segment_path(const SessionData& data, const TriMesh2D& tri, const CircularMesh* circ,
                           const TemporalMesh* temporal, const std::vector<double>& extra_breaks = {});
SegmentedPath segment_path(const SessionData& data, const MeshSet& meshes,
                           const std::vector<double>& extra_breaks = {});

/// Signed shortest angular step from a to b; exact antipodes go the positive way.
double angle_step(double a, double b);

/// Quadrature weights and observation bases for one model kind.
/// Main-block index for space x direction is r * p_space + c (r: direction knot, c: vertex).
struct Design {
  ModelKind kind = ModelKind::space;
  int p_main = 0;
  int p_time = 0;
  Eigen::VectorXd b;    // sum over time of the quadrature weights, length p_main
  SparseMatrix B;       // p_time x p_main (temporal kinds only)
  SparseMatrix A_obs;   // spikes x p_main
  SparseMatrix A_time;  // spikes x p_time (temporal kinds only)
  double spikes = 0.0;
  double path_length = 0.0;
};

/// Trapezoid terms of one segment: term(main index, temporal knot or -1, weight).
void segment_quadrature_terms(const Segment& seg, const MeshSet& meshes, ModelKind kind,
                              const std::function<void(int, int, double)>& term);

using TimeFilter = std::function<bool(double)>;

/// Segments are kept when the filter accepts their midpoint time; spikes when it
/// accepts the spike time. An empty filter keeps everything.
Design integration_weights(const SegmentedPath& segs, const SessionData& data, const MeshSet& meshes,
                           ModelKind kind, const TimeFilter& keep = {});

/// Greedy subsequence of segment boundary times with gaps >= spacing; keeps 0 and T.
TemporalMesh thin_temporal_knots(const SegmentedPath& segs, double spacing);

struct RasterSpec {
  Rect box;
  int nx = 50;
  int ny = 50;
  double x(int i) const { return box.xmin + (i + 0.5) * box.width() / nx; }
  double y(int j) const { return box.ymin + (j + 0.5) * box.height() / ny; }
};

/// Kernel rate map and its decomposition; all rasters row-major (y outer, x inner).
struct RateMap {
  RasterSpec grid;
  double bandwidth = 3.0;
  std::vector<double> rate_time;      // spikes per second
  std::vector<double> rate_distance;  // spikes per cm
  std::vector<double> speed;          // cm per second
  std::vector<double> time_density;   // time integral of the kernel
  std::vector<double> path_density;   // line integral of the kernel
};

RateMap rate_map_kernel(const SessionData& data, double bandwidth, const RasterSpec& grid);
void write_raster_csv(const RasterSpec& grid, const std::vector<double>& values, const std::filesystem::path& path);

}  // namespace gridcox
