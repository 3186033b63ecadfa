#include "gridcox/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gridcox/csv.hpp"
#include "gridcox/error.hpp"

namespace gridcox {

std::size_t SessionData::spike_count() const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](const Sample& s) { return s.spike; }));
}

std::vector<double> SessionData::spike_times() const {
  std::vector<double> out;
  for (const auto& s : samples)
    if (s.spike) out.push_back(s.time);
  return out;
}

double SessionData::path_length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < samples.size(); ++i) len += distance(samples[i - 1].pos, samples[i].pos);
  return len;
}

double SessionData::gap_ratio() const {
  if (samples.size() < 3) return 1.0;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double g = samples[i].time - samples[i - 1].time;
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  return hi / lo;
}

Rect bounding_box(const SessionData& data) {
  if (data.samples.empty()) throw ValidationError("empty session");
  Rect r{data.samples[0].pos.x, data.samples[0].pos.y, data.samples[0].pos.x, data.samples[0].pos.y};
  for (const auto& s : data.samples) {
    r.xmin = std::min(r.xmin, s.pos.x);
    r.ymin = std::min(r.ymin, s.pos.y);
    r.xmax = std::max(r.xmax, s.pos.x);
    r.ymax = std::max(r.ymax, s.pos.y);
  }
  return r;
}

void validate_session(const SessionData& data) {
  if (data.samples.size() < 2) throw ValidationError("session needs at least two samples");
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    const std::size_t row = i + 1;
    if (!std::isfinite(s.time) || !std::isfinite(s.pos.x) || !std::isfinite(s.pos.y))
      throw MalformedRowError(row, "non-finite value");
    if (i == 0 && s.time < 0.0) throw NonMonotoneTimeError(row, "negative start time");
    if (i > 0 && !(s.time > data.samples[i - 1].time)) throw NonMonotoneTimeError(row, "time not strictly increasing");
    if (!(s.theta >= 0.0 && s.theta < kTwoPi)) throw AngleRangeError(row, "theta outside [0, 2pi)");
    if (!data.arena.contains(s.pos)) throw ValidationError("row " + std::to_string(row) + ": position outside arena");
  }
}

SessionData parse_session(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty session file");
  {
    const auto header = csv::split(line);
    const std::vector<std::string_view> want{"time", "x", "y", "theta", "spike"};
    if (header != want) throw MalformedRowError(0, "header must be time,x,y,theta,spike");
  }
  SessionData data;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split(line);
    Sample s;
    long long flag = 0;
    if (f.size() != 5 || !csv::parse_double(f[0], s.time) || !csv::parse_double(f[1], s.pos.x) ||
        !csv::parse_double(f[2], s.pos.y) || !csv::parse_double(f[3], s.theta) || !csv::parse_int(f[4], flag) ||
        (flag != 0 && flag != 1))
      throw MalformedRowError(row, "expected time,x,y,theta,spike with spike in {0,1}");
    if (!(s.theta >= 0.0 && s.theta < kTwoPi)) throw AngleRangeError(row, "theta outside [0, 2pi)");
    if (!data.samples.empty() && !(s.time > data.samples.back().time))
      throw NonMonotoneTimeError(row, "time not strictly increasing");
    if (data.samples.empty() && s.time < 0.0) throw NonMonotoneTimeError(row, "negative start time");
    s.spike = flag == 1;
    data.samples.push_back(s);
  }
  if (data.samples.empty()) throw ValidationError("session has no samples");
  data.arena = bounding_box(data);
  validate_session(data);
  return data;
}

SessionData load_session(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  return parse_session(in);
}

void save_session(const SessionData& data, const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << "time,x,y,theta,spike\n";
  for (const auto& s : data.samples)
    out << csv::format_double(s.time) << ',' << csv::format_double(s.pos.x) << ',' << csv::format_double(s.pos.y) << ','
        << csv::format_double(s.theta) << ',' << (s.spike ? 1 : 0) << '\n';
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::space: return "m0";
    case ModelKind::space_time: return "m0t";
    case ModelKind::space_dir: return "mxt";
    case ModelKind::space_dir_time: return "mxtt";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "m0") return ModelKind::space;
  if (s == "m0t") return ModelKind::space_time;
  if (s == "mxt") return ModelKind::space_dir;
  if (s == "mxtt") return ModelKind::space_dir_time;
  throw ValidationError("unknown model '" + s + "' (expected m0, m0t, mxt, mxtt)");
}

double angle_step(double a, double b) {
  const double d = wrap_angle(b - a);
  return d > kPi ? d - kTwoPi : d;
}

// ---------------------------------------------------------------------------
// Segmentation

SegmentedPath segment_path(const SessionData& data, const TriMesh2D& tri, const CircularMesh* circ,
                           const TemporalMesh* temporal, const std::vector<double>& extra_breaks) {
  if (data.samples.size() < 2 || !(data.duration() > 0.0)) throw ValidationError("zero-length session");
  std::vector<double> breaks = extra_breaks;
  std::sort(breaks.begin(), breaks.end());

  SegmentedPath out;
  out.duration = data.duration();
  std::vector<double> us;
  for (const auto& s : data.samples)
    if (!tri.try_locate(s.pos)) throw OutOfDomainError("sample at t=" + std::to_string(s.time) + " outside spatial mesh");

  for (std::size_t i = 0; i + 1 < data.samples.size(); ++i) {
    const Sample& a = data.samples[i];
    const Sample& b = data.samples[i + 1];
    const double len = distance(a.pos, b.pos);
    if (len == 0.0) continue;  // stationary: no intensity mass
    const double dth = angle_step(a.theta, b.theta);
    const double dt = b.time - a.time;

    us.clear();
    tri.edge_crossings(a.pos, b.pos, us);
    if (circ) circ->knot_crossings(a.theta, dth, us);
    if (temporal) temporal->knot_crossings(a.time, b.time, us);
    for (auto it = std::upper_bound(breaks.begin(), breaks.end(), a.time); it != breaks.end() && *it < b.time; ++it)
      us.push_back((*it - a.time) / dt);
    us.push_back(0.0);
    us.push_back(1.0);
    std::sort(us.begin(), us.end());
    std::size_t m = 0;
    for (double u : us) {
      u = std::clamp(u, 0.0, 1.0);
      if (m == 0 || u - us[m - 1] > 1e-12) us[m++] = u;
    }
    us.resize(m);
    us.back() = 1.0;

    for (std::size_t k = 0; k + 1 < us.size(); ++k) {
      const double ua = us[k], ub = us[k + 1];
      const double um = 0.5 * (ua + ub);
      Segment seg;
      seg.sample = i;
      seg.t0 = a.time + ua * dt;
      seg.t1 = k + 2 == us.size() ? b.time : a.time + ub * dt;
      seg.p0 = a.pos + ua * (b.pos - a.pos);
      seg.p1 = k + 2 == us.size() ? b.pos : a.pos + ub * (b.pos - a.pos);
      seg.th0 = wrap_angle(a.theta + ua * dth);
      seg.th1 = wrap_angle(a.theta + ub * dth);
      seg.length = (ub - ua) * len;
      const auto t = tri.try_locate(a.pos + um * (b.pos - a.pos));
      if (!t) throw OutOfDomainError("path leaves the spatial mesh");
      seg.tri = *t;
      if (circ) seg.arc = circ->arc_of(a.theta + um * dth);
      if (temporal) seg.cell = temporal->cell_of(a.time + um * dt);
      out.total_length += seg.length;
      out.segments.push_back(seg);
    }
  }
  return out;
}

SegmentedPath segment_path(const SessionData& data, const MeshSet& meshes, const std::vector<double>& extra_breaks) {
  if (!meshes.space) throw ValidationError("spatial mesh required");
  return segment_path(data, *meshes.space, meshes.dir.get(), meshes.time.get(), extra_breaks);
}

// ---------------------------------------------------------------------------
// Weights

void segment_quadrature_terms(const Segment& seg, const MeshSet& meshes, ModelKind kind,
                              const std::function<void(int, int, double)>& term) {
  const bool dir = has_direction(kind);
  const bool time = has_time(kind);
  if (dir && seg.arc < 0) throw ValidationError("segments were built without a circular mesh");
  if (time && seg.cell < 0) throw ValidationError("segments were built without a temporal mesh");
  const int ps = static_cast<int>(meshes.space->vertex_count());
  const double w = 0.5 * seg.length;
  for (int end = 0; end < 2; ++end) {
    const BasisVector sb = meshes.space->basis_in(seg.tri, end == 0 ? seg.p0 : seg.p1);
    BasisVector db;
    if (dir)
      db = meshes.dir->basis_in(seg.arc, end == 0 ? seg.th0 : seg.th1);
    else
      db.push(0, 1.0);
    BasisVector tb;
    if (time) tb = meshes.time->basis_in(seg.cell, end == 0 ? seg.t0 : seg.t1);
    for (int r = 0; r < db.size; ++r)
      for (int c = 0; c < sb.size; ++c) {
        const int idx = db.index[r] * ps + sb.index[c];
        const double v = w * db.weight[r] * sb.weight[c];
        if (time)
          for (int k = 0; k < tb.size; ++k) term(idx, tb.index[k], v * tb.weight[k]);
        else
          term(idx, -1, v);
      }
  }
}

Design integration_weights(const SegmentedPath& segs, const SessionData& data, const MeshSet& meshes, ModelKind kind,
                           const TimeFilter& keep) {
  if (!meshes.space) throw ValidationError("spatial mesh required");
  const bool dir = has_direction(kind);
  const bool time = has_time(kind);
  if (dir && !meshes.dir) throw ValidationError("model " + to_string(kind) + " needs a circular mesh");
  if (time && !meshes.time) throw ValidationError("model " + to_string(kind) + " needs a temporal mesh");
  const TriMesh2D& space = *meshes.space;

  Design d;
  d.kind = kind;
  const int ps = static_cast<int>(space.vertex_count());
  const int pd = dir ? static_cast<int>(meshes.dir->knot_count()) : 1;
  d.p_main = ps * pd;
  d.p_time = time ? static_cast<int>(meshes.time->knot_count()) : 0;
  d.b = Eigen::VectorXd::Zero(d.p_main);

  std::vector<Triplet> trips;
  for (const auto& seg : segs.segments) {
    if (keep && !keep(seg.mid_time())) continue;
    d.path_length += seg.length;
    segment_quadrature_terms(seg, meshes, kind, [&](int idx, int r, double v) {
      if (r < 0)
        d.b[idx] += v;
      else
        trips.emplace_back(r, idx, v);
    });
  }
  if (time) {
    // b is the column sum of B
    for (const auto& t : trips) d.b[t.col()] += t.value();
  }
  if (time) {
    d.B.resize(d.p_time, d.p_main);
    d.B.setFromTriplets(trips.begin(), trips.end());
  }

  std::vector<Triplet> obs, obs_t;
  int row = 0;
  for (const auto& s : data.samples) {
    if (!s.spike || (keep && !keep(s.time))) continue;
    const BasisVector sb = space.basis(s.pos);
    BasisVector db;
    if (dir)
      db = meshes.dir->basis(s.theta);
    else
      db.push(0, 1.0);
    for (int r = 0; r < db.size; ++r)
      for (int c = 0; c < sb.size; ++c) obs.emplace_back(row, db.index[r] * ps + sb.index[c], db.weight[r] * sb.weight[c]);
    if (time) {
      const BasisVector tb = meshes.time->basis(s.time);
      for (int k = 0; k < tb.size; ++k) obs_t.emplace_back(row, tb.index[k], tb.weight[k]);
    }
    ++row;
  }
  d.spikes = row;
  d.A_obs.resize(row, d.p_main);
  d.A_obs.setFromTriplets(obs.begin(), obs.end());
  if (time) {
    d.A_time.resize(row, d.p_time);
    d.A_time.setFromTriplets(obs_t.begin(), obs_t.end());
  }
  return d;
}

TemporalMesh thin_temporal_knots(const SegmentedPath& segs, double spacing) {
  if (!(spacing > 0.0)) throw ValidationError("temporal knot spacing must be positive");
  const double T = segs.duration;
  if (!(T > 0.0)) throw ValidationError("zero-length session");
  std::vector<double> cand;
  cand.reserve(segs.segments.size() + 1);
  for (const auto& s : segs.segments) cand.push_back(s.t0);
  std::sort(cand.begin(), cand.end());
  std::vector<double> knots{0.0};
  for (double c : cand)
    if (c - knots.back() >= spacing && c < T) knots.push_back(c);
  if (knots.size() > 1 && T - knots.back() < spacing) knots.pop_back();
  knots.push_back(T);
  return TemporalMesh(std::move(knots));
}

// ---------------------------------------------------------------------------
// Rate map

RateMap rate_map_kernel(const SessionData& data, double bandwidth, const RasterSpec& grid) {
  if (data.samples.empty()) throw ValidationError("empty session");
  if (!(bandwidth > 0.0)) throw ValidationError("bandwidth must be positive");
  if (grid.nx < 1 || grid.ny < 1) throw ValidationError("raster needs nx, ny >= 1");
  RateMap m;
  m.grid = grid;
  m.bandwidth = bandwidth;
  const std::size_t cells = static_cast<std::size_t>(grid.nx) * grid.ny;
  m.rate_time.assign(cells, 0.0);
  m.rate_distance.assign(cells, 0.0);
  m.speed.assign(cells, 0.0);
  m.time_density.assign(cells, 0.0);
  m.path_density.assign(cells, 0.0);

  const auto& smp = data.samples;
  const std::size_t n = smp.size();
  // Trapezoid weights per sample for dt and for the line element.
  std::vector<double> wt(n, 0.0), wl(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double dt = 0.5 * (smp[i + 1].time - smp[i].time);
    const double dl = 0.5 * distance(smp[i].pos, smp[i + 1].pos);
    wt[i] += dt;
    wt[i + 1] += dt;
    wl[i] += dl;
    wl[i + 1] += dl;
  }
  // The Gaussian normalizing constant cancels in every ratio below.
  const double inv2h2 = 0.5 / (bandwidth * bandwidth);
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) {
      const Point2 s{grid.x(i), grid.y(j)};
      double num = 0.0, den_t = 0.0, den_l = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double dx = smp[k].pos.x - s.x, dy = smp[k].pos.y - s.y;
        const double kv = std::exp(-(dx * dx + dy * dy) * inv2h2);
        if (kv == 0.0) continue;
        den_t += wt[k] * kv;
        den_l += wl[k] * kv;
        if (smp[k].spike) num += kv;
      }
      const std::size_t c = static_cast<std::size_t>(j) * grid.nx + i;
      m.time_density[c] = den_t;
      m.path_density[c] = den_l;
      m.rate_time[c] = den_t > 0.0 ? num / den_t : 0.0;
      m.rate_distance[c] = den_l > 0.0 ? num / den_l : 0.0;
      m.speed[c] = den_t > 0.0 ? den_l / den_t : 0.0;
    }
  return m;
}

void write_raster_csv(const RasterSpec& grid, const std::vector<double>& values, const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << "x,y,value\n";
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i)
      out << csv::format_double(grid.x(i)) << ',' << csv::format_double(grid.y(j)) << ','
          << csv::format_double(values[static_cast<std::size_t>(j) * grid.nx + i]) << '\n';
}

}  // namespace gridcox
