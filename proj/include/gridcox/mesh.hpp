#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Sparse>

namespace gridcox {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kPi = 3.141592653589793238462643383279;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
double distance(Point2 a, Point2 b);

/// Axis-aligned rectangle in cm.
struct Rect {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  bool contains(Point2 p) const { return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax; }
  Rect inflated(double margin) const { return {xmin - margin, ymin - margin, xmax + margin, ymax + margin}; }
};

/// Sparse evaluation of the piecewise-linear basis at one point.
/// Holds at most three (index, weight) pairs.
struct BasisVector {
  std::array<int, 3> index{};
  std::array<double, 3> weight{};
  int size = 0;

  void push(int i, double w) {
    index[size] = i;
    weight[size] = w;
    ++size;
  }
  double sum() const;
  /// Weight on basis function i (zero if absent).
  double at(int i) const;
};

/// Lumped mass (diagonal) and stiffness matrices of a mesh.
struct MassStiffness {
  Eigen::VectorXd mass;  // diagonal of C
  SparseMatrix stiffness;
  std::size_t size() const { return static_cast<std::size_t>(mass.size()); }
};

/// Conforming planar triangulation with a bucket index for point location.
class TriMesh2D {
 public:
  TriMesh2D(std::vector<Point2> vertices, std::vector<std::array<int, 3>> triangles, double margin = 0.0);

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t triangle_count() const { return triangles_.size(); }
  const std::vector<Point2>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  double boundary_margin() const { return margin_; }
  const Rect& bounding_box() const { return bbox_; }
  double triangle_area(int t) const;
  double total_area() const;

  /// Smallest-index triangle containing p, or nullopt when p is outside the mesh.
  std::optional<int> try_locate(Point2 p) const;
  /// As try_locate but throws OutOfDomainError.
  int locate(Point2 p) const;

  /// Barycentric weights of p with respect to triangle t, clamped to [0,1].
  BasisVector basis_in(int t, Point2 p) const;
  BasisVector basis(Point2 p) const { return basis_in(locate(p), p); }

  /// Parameters u in (0,1) at which the segment a->b crosses a mesh edge.
  /// Appended unsorted, possibly with near-duplicates.
  void edge_crossings(Point2 a, Point2 b, std::vector<double>& out) const;

  MassStiffness mass_stiffness() const;

  /// Raw barycentric coordinates (unclamped).
  std::array<double, 3> barycentric(int t, Point2 p) const;

 private:
  struct Bucket {
    std::vector<int> triangles;
    std::vector<int> edges;
  };
  void build_index();
  std::pair<int, int> cell_of(Point2 p) const;
  const Bucket& bucket(int ix, int iy) const { return buckets_[static_cast<std::size_t>(iy) * nx_ + ix]; }

  std::vector<Point2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<std::array<int, 2>> edges_;
  double margin_ = 0.0;
  Rect bbox_;
  double scale_ = 1.0;  // length scale for tolerances
  int nx_ = 1;
  int ny_ = 1;
  double cell_w_ = 1.0;
  double cell_h_ = 1.0;
  std::vector<Bucket> buckets_;
};

/// Knots on the circle [0, 2pi); the last arc wraps back to the first knot.
class CircularMesh {
 public:
  explicit CircularMesh(std::vector<double> knots);

  std::size_t knot_count() const { return knots_.size(); }
  const std::vector<double>& knots() const { return knots_; }
  /// Length of the arc from knot k to knot k+1 (wrapping).
  double arc_length(std::size_t k) const;
  /// Arc containing angle theta (taken mod 2pi).
  int arc_of(double theta) const;
  BasisVector basis(double theta) const;
  /// Interpolation weights of theta on arc k, for theta on or next to that arc.
  BasisVector basis_in(int k, double theta) const;
  /// Parameters u in (0,1) at which theta0 + u*delta crosses a knot.
  void knot_crossings(double theta0, double delta, std::vector<double>& out) const;
  MassStiffness mass_stiffness() const;

 private:
  std::vector<double> knots_;
};

/// Knots on [0, T] with natural (Neumann) ends.
class TemporalMesh {
 public:
  explicit TemporalMesh(std::vector<double> knots);

  std::size_t knot_count() const { return knots_.size(); }
  const std::vector<double>& knots() const { return knots_; }
  double duration() const { return knots_.back(); }
  int cell_of(double t) const;
  BasisVector basis(double t) const;
  BasisVector basis_in(int cell, double t) const;
  void knot_crossings(double t0, double t1, std::vector<double>& out) const;
  MassStiffness mass_stiffness() const;

 private:
  std::vector<double> knots_;
};

/// Structured triangulation of the arena inflated by `margin`, with every edge
/// no longer than max_edge.
TriMesh2D build_tri_mesh(const Rect& arena, double max_edge, double margin);
CircularMesh build_circular_mesh(int knot_count);
/// Uniform temporal mesh with `knot_count` knots on [0, duration].
TemporalMesh build_uniform_temporal_mesh(double duration, int knot_count);

/// Write vertices.csv (id,x,y) and triangles.csv (id,v0,v1,v2) into dir.
void export_mesh_csv(const TriMesh2D& mesh, const std::filesystem::path& dir);
TriMesh2D import_mesh_csv(const std::filesystem::path& dir, double margin = 0.0);

/// Wrap an angle into [0, 2pi).
double wrap_angle(double theta);

}  // namespace gridcox
