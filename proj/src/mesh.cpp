#include "gridcox/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "gridcox/csv.hpp"
#include "gridcox/error.hpp"

namespace gridcox {

namespace {

constexpr double kBaryTol = 1e-11;

double clamp01(double w) { return w < 0.0 ? 0.0 : (w > 1.0 ? 1.0 : w); }

}  // namespace

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

double wrap_angle(double theta) {
  double r = std::fmod(theta, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

double BasisVector::sum() const {
  double s = 0.0;
  for (int k = 0; k < size; ++k) s += weight[k];
  return s;
}

double BasisVector::at(int i) const {
  double s = 0.0;
  for (int k = 0; k < size; ++k)
    if (index[k] == i) s += weight[k];
  return s;
}

// ---------------------------------------------------------------------------
// TriMesh2D

TriMesh2D::TriMesh2D(std::vector<Point2> vertices, std::vector<std::array<int, 3>> triangles, double margin)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)), margin_(margin) {
  if (vertices_.size() < 3 || triangles_.empty()) throw ValidationError("triangulation needs at least one triangle");
  const int nv = static_cast<int>(vertices_.size());
  for (auto& tri : triangles_) {
    for (int v : tri)
      if (v < 0 || v >= nv) throw ValidationError("triangle references missing vertex " + std::to_string(v));
    const double a2 = cross(vertices_[tri[1]] - vertices_[tri[0]], vertices_[tri[2]] - vertices_[tri[0]]);
    if (a2 == 0.0) throw ValidationError("degenerate triangle");
    if (a2 < 0.0) std::swap(tri[1], tri[2]);
  }

  // Each edge may be shared by at most two triangles.
  std::map<std::pair<int, int>, int> edge_use;
  for (const auto& tri : triangles_) {
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      if (++edge_use[{a, b}] > 2) throw ValidationError("non-conforming triangulation: edge shared by >2 triangles");
    }
  }
  edges_.reserve(edge_use.size());
  for (const auto& [e, count] : edge_use) edges_.push_back({e.first, e.second});

  bbox_ = {vertices_[0].x, vertices_[0].y, vertices_[0].x, vertices_[0].y};
  for (const auto& p : vertices_) {
    bbox_.xmin = std::min(bbox_.xmin, p.x);
    bbox_.ymin = std::min(bbox_.ymin, p.y);
    bbox_.xmax = std::max(bbox_.xmax, p.x);
    bbox_.ymax = std::max(bbox_.ymax, p.y);
  }
  scale_ = std::max(bbox_.width(), bbox_.height());
  build_index();
}

void TriMesh2D::build_index() {
  double mean_edge = 0.0;
  for (const auto& e : edges_) mean_edge += distance(vertices_[e[0]], vertices_[e[1]]);
  mean_edge /= static_cast<double>(edges_.size());
  const double cell = std::max(2.0 * mean_edge, 1e-12 * scale_);
  nx_ = std::clamp(static_cast<int>(std::ceil(bbox_.width() / cell)), 1, 4096);
  ny_ = std::clamp(static_cast<int>(std::ceil(bbox_.height() / cell)), 1, 4096);
  cell_w_ = bbox_.width() > 0 ? bbox_.width() / nx_ : 1.0;
  cell_h_ = bbox_.height() > 0 ? bbox_.height() / ny_ : 1.0;
  buckets_.assign(static_cast<std::size_t>(nx_) * ny_, Bucket{});

  auto register_box = [&](double x0, double y0, double x1, double y1, auto&& add) {
    auto [ix0, iy0] = cell_of({x0, y0});
    auto [ix1, iy1] = cell_of({x1, y1});
    for (int iy = iy0; iy <= iy1; ++iy)
      for (int ix = ix0; ix <= ix1; ++ix) add(buckets_[static_cast<std::size_t>(iy) * nx_ + ix]);
  };
  for (int t = 0; t < static_cast<int>(triangles_.size()); ++t) {
    const auto& tri = triangles_[t];
    double x0 = vertices_[tri[0]].x, x1 = x0, y0 = vertices_[tri[0]].y, y1 = y0;
    for (int v : tri) {
      x0 = std::min(x0, vertices_[v].x);
      x1 = std::max(x1, vertices_[v].x);
      y0 = std::min(y0, vertices_[v].y);
      y1 = std::max(y1, vertices_[v].y);
    }
    const double pad = 1e-9 * scale_;
    register_box(x0 - pad, y0 - pad, x1 + pad, y1 + pad, [t](Bucket& b) { b.triangles.push_back(t); });
  }
  for (int e = 0; e < static_cast<int>(edges_.size()); ++e) {
    const Point2 a = vertices_[edges_[e][0]], b = vertices_[edges_[e][1]];
    const double pad = 1e-9 * scale_;
    register_box(std::min(a.x, b.x) - pad, std::min(a.y, b.y) - pad, std::max(a.x, b.x) + pad,
                 std::max(a.y, b.y) + pad, [e](Bucket& bk) { bk.edges.push_back(e); });
  }
}

std::pair<int, int> TriMesh2D::cell_of(Point2 p) const {
  const int ix = std::clamp(static_cast<int>(std::floor((p.x - bbox_.xmin) / cell_w_)), 0, nx_ - 1);
  const int iy = std::clamp(static_cast<int>(std::floor((p.y - bbox_.ymin) / cell_h_)), 0, ny_ - 1);
  return {ix, iy};
}

double TriMesh2D::triangle_area(int t) const {
  const auto& tri = triangles_[t];
  return 0.5 * cross(vertices_[tri[1]] - vertices_[tri[0]], vertices_[tri[2]] - vertices_[tri[0]]);
}

double TriMesh2D::total_area() const {
  double a = 0.0;
  for (int t = 0; t < static_cast<int>(triangles_.size()); ++t) a += triangle_area(t);
  return a;
}

std::array<double, 3> TriMesh2D::barycentric(int t, Point2 p) const {
  const auto& tri = triangles_[t];
  const Point2 a = vertices_[tri[0]], b = vertices_[tri[1]], c = vertices_[tri[2]];
  const double area2 = cross(b - a, c - a);
  const double l0 = cross(b - p, c - p) / area2;
  const double l1 = cross(c - p, a - p) / area2;
  return {l0, l1, 1.0 - l0 - l1};
}

std::optional<int> TriMesh2D::try_locate(Point2 p) const {
  const double pad = 1e-9 * scale_;
  if (p.x < bbox_.xmin - pad || p.x > bbox_.xmax + pad || p.y < bbox_.ymin - pad || p.y > bbox_.ymax + pad)
    return std::nullopt;
  auto [ix, iy] = cell_of(p);
  int best = -1;
  for (int t : bucket(ix, iy).triangles) {
    if (best >= 0 && t >= best) continue;
    const auto l = barycentric(t, p);
    if (l[0] >= -kBaryTol && l[1] >= -kBaryTol && l[2] >= -kBaryTol) best = t;
  }
  if (best < 0) return std::nullopt;
  return best;
}

int TriMesh2D::locate(Point2 p) const {
  if (auto t = try_locate(p)) return *t;
  throw OutOfDomainError("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside mesh");
}

BasisVector TriMesh2D::basis_in(int t, Point2 p) const {
  auto l = barycentric(t, p);
  double s = 0.0;
  for (double& w : l) {
    w = clamp01(w);
    s += w;
  }
  BasisVector out;
  for (int k = 0; k < 3; ++k)
    if (l[k] > 0.0) out.push(triangles_[t][k], l[k] / s);
  return out;
}

void TriMesh2D::edge_crossings(Point2 a, Point2 b, std::vector<double>& out) const {
  const Point2 d = b - a;
  const double len = std::hypot(d.x, d.y);
  if (len == 0.0) return;
  auto [ix0, iy0] = cell_of({std::min(a.x, b.x), std::min(a.y, b.y)});
  auto [ix1, iy1] = cell_of({std::max(a.x, b.x), std::max(a.y, b.y)});
  thread_local std::vector<int> candidates;
  candidates.clear();
  for (int iy = iy0; iy <= iy1; ++iy)
    for (int ix = ix0; ix <= ix1; ++ix) {
      const auto& e = bucket(ix, iy).edges;
      candidates.insert(candidates.end(), e.begin(), e.end());
    }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  const double utol = 1e-12;
  for (int e : candidates) {
    const Point2 q0 = vertices_[edges_[e][0]], q1 = vertices_[edges_[e][1]];
    const Point2 f = q1 - q0;
    const double denom = cross(d, f);
    const double flen = std::hypot(f.x, f.y);
    if (std::abs(denom) <= 1e-14 * len * flen) continue;  // parallel or collinear
    const Point2 w = q0 - a;
    const double u = cross(w, f) / denom;
    const double v = cross(w, d) / denom;
    if (u > utol && u < 1.0 - utol && v >= -1e-12 && v <= 1.0 + 1e-12) out.push_back(u);
  }
}

MassStiffness TriMesh2D::mass_stiffness() const {
  const auto n = static_cast<Eigen::Index>(vertices_.size());
  MassStiffness ms;
  ms.mass = Eigen::VectorXd::Zero(n);
  std::vector<Triplet> trips;
  trips.reserve(triangles_.size() * 9);
  for (int t = 0; t < static_cast<int>(triangles_.size()); ++t) {
    const auto& tri = triangles_[t];
    const double area = triangle_area(t);
    const Point2 p0 = vertices_[tri[0]], p1 = vertices_[tri[1]], p2 = vertices_[tri[2]];
    const std::array<Point2, 3> e{p2 - p1, p0 - p2, p1 - p0};
    for (int i = 0; i < 3; ++i) {
      ms.mass[tri[i]] += area / 3.0;
      for (int j = 0; j < 3; ++j) trips.emplace_back(tri[i], tri[j], dot(e[i], e[j]) / (4.0 * area));
    }
  }
  ms.stiffness.resize(n, n);
  ms.stiffness.setFromTriplets(trips.begin(), trips.end());
  return ms;
}

TriMesh2D build_tri_mesh(const Rect& arena, double max_edge, double margin) {
  if (!(max_edge > 0.0)) throw ValidationError("max_edge must be positive");
  if (!(margin >= 0.0)) throw ValidationError("margin must be non-negative");
  if (!(arena.width() > 0.0) || !(arena.height() > 0.0)) throw ValidationError("degenerate arena");
  const Rect box = arena.inflated(margin);
  auto cells = [&](double extent) {
    return std::max(1, static_cast<int>(std::ceil(extent * std::sqrt(2.0) / max_edge - 1e-9)));
  };
  const int nx = cells(box.width());
  const int ny = cells(box.height());
  std::vector<Point2> vertices;
  vertices.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      vertices.push_back({i == nx ? box.xmax : box.xmin + box.width() * i / nx,
                          j == ny ? box.ymax : box.ymin + box.height() * j / ny});
  auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };
  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(static_cast<std::size_t>(2) * nx * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int v00 = vid(i, j), v10 = vid(i + 1, j), v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      triangles.push_back({v00, v10, v11});
      triangles.push_back({v00, v11, v01});
    }
  return TriMesh2D(std::move(vertices), std::move(triangles), margin);
}

// ---------------------------------------------------------------------------
// CircularMesh

CircularMesh::CircularMesh(std::vector<double> knots) : knots_(std::move(knots)) {
  if (knots_.size() < 3) throw ValidationError("circular mesh needs at least 3 knots");
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    if (!(knots_[k] >= 0.0 && knots_[k] < kTwoPi)) throw ValidationError("circular knot outside [0, 2pi)");
    if (k > 0 && !(knots_[k] > knots_[k - 1])) throw ValidationError("circular knots must be strictly increasing");
  }
}

double CircularMesh::arc_length(std::size_t k) const {
  if (k + 1 < knots_.size()) return knots_[k + 1] - knots_[k];
  return kTwoPi - knots_.back() + knots_.front();
}

int CircularMesh::arc_of(double theta) const {
  const double t = wrap_angle(theta);
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  if (it == knots_.begin()) return static_cast<int>(knots_.size()) - 1;
  return static_cast<int>(it - knots_.begin()) - 1;
}

BasisVector CircularMesh::basis(double theta) const { return basis_in(arc_of(theta), theta); }

BasisVector CircularMesh::basis_in(int k, double theta) const {
  const int next = (k + 1) % static_cast<int>(knots_.size());
  const double h = arc_length(static_cast<std::size_t>(k));
  double local = wrap_angle(theta - knots_[k]);
  // Angles just below the arc start wrap to nearly 2 pi.
  if (local > 0.5 * (h + kTwoPi)) local = 0.0;
  const double w1 = clamp01(local / h);
  BasisVector out;
  if (w1 < 1.0) out.push(k, 1.0 - w1);
  if (w1 > 0.0) out.push(next, w1);
  return out;
}

void CircularMesh::knot_crossings(double theta0, double delta, std::vector<double>& out) const {
  if (delta == 0.0) return;
  const double mag = std::abs(delta);
  for (double c : knots_) {
    const double d = delta > 0.0 ? wrap_angle(c - theta0) : wrap_angle(theta0 - c);
    const double u = d / mag;
    if (u > 1e-12 && u < 1.0 - 1e-12) out.push_back(u);
  }
}

MassStiffness CircularMesh::mass_stiffness() const {
  const auto n = static_cast<Eigen::Index>(knots_.size());
  MassStiffness ms;
  ms.mass = Eigen::VectorXd::Zero(n);
  std::vector<Triplet> trips;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index next = (k + 1) % n;
    const double h = arc_length(static_cast<std::size_t>(k));
    ms.mass[k] += 0.5 * h;
    ms.mass[next] += 0.5 * h;
    trips.emplace_back(k, k, 1.0 / h);
    trips.emplace_back(next, next, 1.0 / h);
    trips.emplace_back(k, next, -1.0 / h);
    trips.emplace_back(next, k, -1.0 / h);
  }
  ms.stiffness.resize(n, n);
  ms.stiffness.setFromTriplets(trips.begin(), trips.end());
  return ms;
}

CircularMesh build_circular_mesh(int knot_count) {
  if (knot_count < 3) throw ValidationError("circular mesh needs p >= 3");
  std::vector<double> knots(static_cast<std::size_t>(knot_count));
  for (int k = 0; k < knot_count; ++k) knots[k] = kTwoPi * k / knot_count;
  return CircularMesh(std::move(knots));
}

// ---------------------------------------------------------------------------
// TemporalMesh

TemporalMesh::TemporalMesh(std::vector<double> knots) : knots_(std::move(knots)) {
  if (knots_.size() < 2) throw ValidationError("temporal mesh needs at least 2 knots");
  if (knots_.front() != 0.0) throw ValidationError("temporal mesh must start at 0");
  for (std::size_t k = 1; k < knots_.size(); ++k)
    if (!(knots_[k] > knots_[k - 1])) throw ValidationError("temporal knots must be strictly increasing");
}

int TemporalMesh::cell_of(double t) const {
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  const int k = static_cast<int>(it - knots_.begin()) - 1;
  return std::clamp(k, 0, static_cast<int>(knots_.size()) - 2);
}

BasisVector TemporalMesh::basis(double t) const {
  const double tol = 1e-9 * std::max(1.0, duration());
  if (t < -tol || t > duration() + tol) throw OutOfDomainError("time " + std::to_string(t) + " outside temporal mesh");
  return basis_in(cell_of(t), t);
}

BasisVector TemporalMesh::basis_in(int k, double t) const {
  const double w1 = clamp01((t - knots_[k]) / (knots_[k + 1] - knots_[k]));
  BasisVector out;
  if (w1 < 1.0) out.push(k, 1.0 - w1);
  if (w1 > 0.0) out.push(k + 1, w1);
  return out;
}

void TemporalMesh::knot_crossings(double t0, double t1, std::vector<double>& out) const {
  if (!(t1 > t0)) return;
  auto it = std::upper_bound(knots_.begin(), knots_.end(), t0);
  for (; it != knots_.end() && *it < t1; ++it) {
    const double u = (*it - t0) / (t1 - t0);
    if (u > 1e-12 && u < 1.0 - 1e-12) out.push_back(u);
  }
}

MassStiffness TemporalMesh::mass_stiffness() const {
  const auto n = static_cast<Eigen::Index>(knots_.size());
  MassStiffness ms;
  ms.mass = Eigen::VectorXd::Zero(n);
  std::vector<Triplet> trips;
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const double h = knots_[k + 1] - knots_[k];
    ms.mass[k] += 0.5 * h;
    ms.mass[k + 1] += 0.5 * h;
    trips.emplace_back(k, k, 1.0 / h);
    trips.emplace_back(k + 1, k + 1, 1.0 / h);
    trips.emplace_back(k, k + 1, -1.0 / h);
    trips.emplace_back(k + 1, k, -1.0 / h);
  }
  ms.stiffness.resize(n, n);
  ms.stiffness.setFromTriplets(trips.begin(), trips.end());
  return ms;
}

TemporalMesh build_uniform_temporal_mesh(double duration, int knot_count) {
  if (!(duration > 0.0) || knot_count < 2) throw ValidationError("invalid uniform temporal mesh");
  std::vector<double> knots(static_cast<std::size_t>(knot_count));
  for (int k = 0; k < knot_count; ++k) knots[k] = duration * k / (knot_count - 1);
  knots.back() = duration;
  return TemporalMesh(std::move(knots));
}

// ---------------------------------------------------------------------------
// CSV

void export_mesh_csv(const TriMesh2D& mesh, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto v = csv::open_output(dir / "vertices.csv");
  v << "id,x,y\n";
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i)
    v << i << ',' << csv::format_double(mesh.vertices()[i].x) << ',' << csv::format_double(mesh.vertices()[i].y)
      << '\n';
  auto t = csv::open_output(dir / "triangles.csv");
  t << "id,v0,v1,v2\n";
  for (std::size_t i = 0; i < mesh.triangle_count(); ++i) {
    const auto& tri = mesh.triangles()[i];
    t << i << ',' << tri[0] << ',' << tri[1] << ',' << tri[2] << '\n';
  }
}

TriMesh2D import_mesh_csv(const std::filesystem::path& dir, double margin) {
  std::vector<Point2> vertices;
  {
    auto in = csv::open_input(dir / "vertices.csv");
    std::string line;
    std::getline(in, line);
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      const auto f = csv::split(line);
      long long id = 0;
      Point2 p;
      if (f.size() != 3 || !csv::parse_int(f[0], id) || !csv::parse_double(f[1], p.x) || !csv::parse_double(f[2], p.y))
        throw ParseError(row, "expected id,x,y in vertices.csv");
      if (id != static_cast<long long>(vertices.size())) throw ParseError(row, "vertex ids must be 0..n-1 in order");
      vertices.push_back(p);
    }
  }
  std::vector<std::array<int, 3>> triangles;
  {
    auto in = csv::open_input(dir / "triangles.csv");
    std::string line;
    std::getline(in, line);
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      const auto f = csv::split(line);
      long long id = 0, a = 0, b = 0, c = 0;
      if (f.size() != 4 || !csv::parse_int(f[0], id) || !csv::parse_int(f[1], a) || !csv::parse_int(f[2], b) ||
          !csv::parse_int(f[3], c))
        throw ParseError(row, "expected id,v0,v1,v2 in triangles.csv");
      triangles.push_back({static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)});
    }
  }
  return TriMesh2D(std::move(vertices), std::move(triangles), margin);
}

}  // namespace gridcox
