#include "gridcox/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "gridcox/csv.hpp"
#include "gridcox/error.hpp"

namespace gridcox {

namespace {

constexpr double kMaxLogGap = 0.05;
constexpr int kMaxPieces = 1 << 14;

Point2 lerp(Point2 a, Point2 b, double f) { return a + f * (b - a); }

// Turn angle with the requested mean resultant length (wrapped normal; uniform at 0).
double turn_angle(double persistence, std::mt19937_64& rng) {
  if (persistence <= 0.0) return std::uniform_real_distribution<double>(-kPi, kPi)(rng);
  return std::normal_distribution<double>(0.0, std::sqrt(-2.0 * std::log(persistence)))(rng);
}

}  // namespace

// ---------------------------------------------------------------------------
// Trajectories

SessionData random_walk_trajectory(const WalkOptions& opt) {
  if (!(opt.dt > 0.0)) throw ValidationError("walk.dt must be positive");
  if (!(opt.duration > 0.0)) throw ValidationError("walk.duration must be positive");
  if (!(opt.persistence >= 0.0 && opt.persistence < 1.0)) throw ValidationError("walk.persistence must be in [0, 1)");
  const Rect& a = opt.arena;
  if (!(a.width() > 0.0 && a.height() > 0.0)) throw ValidationError("walk.arena is empty");

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SessionData d;
  d.arena = a;
  Point2 p{a.xmin + a.width() * (0.25 + 0.5 * u01(rng)), a.ymin + a.height() * (0.25 + 0.5 * u01(rng))};
  double heading = kTwoPi * u01(rng);
  const double eps = 1e-9 * std::max(a.width(), a.height());
  const long steps = static_cast<long>(std::floor(opt.duration / opt.dt + 1e-9));
  d.samples.reserve(static_cast<std::size_t>(steps) + 1);
  for (long i = 0; i <= steps; ++i) {
    if (i > 0) {
      heading += turn_angle(opt.persistence, rng);
      const double step = opt.speed * std::exp(opt.speed_log_sd * n01(rng)) * opt.dt;
      Point2 q = p + step * Point2{std::cos(heading), std::sin(heading)};
      double hx = std::cos(heading), hy = std::sin(heading);
      for (int k = 0; k < 8 && !(q.x > a.xmin && q.x < a.xmax && q.y > a.ymin && q.y < a.ymax); ++k) {
        if (q.x <= a.xmin) { q.x = 2 * a.xmin - q.x; hx = -hx; }
        if (q.x >= a.xmax) { q.x = 2 * a.xmax - q.x; hx = -hx; }
        if (q.y <= a.ymin) { q.y = 2 * a.ymin - q.y; hy = -hy; }
        if (q.y >= a.ymax) { q.y = 2 * a.ymax - q.y; hy = -hy; }
      }
      q.x = std::clamp(q.x, a.xmin + eps, a.xmax - eps);
      q.y = std::clamp(q.y, a.ymin + eps, a.ymax - eps);
      heading = std::atan2(hy, hx);
      p = q;
    }
    const double theta = wrap_angle(heading + opt.heading_noise * n01(rng));
    d.samples.push_back({static_cast<double>(i) * opt.dt, p, theta, false});
  }
  return d;
}

// ---------------------------------------------------------------------------
// Fields

double LatentField::log_intensity(double t, Point2 pos, double theta) const {
  const BasisVector sb = meshes.space->basis(pos);
  BasisVector db;
  if (has_direction(kind))
    db = meshes.dir->basis(theta);
  else
    db.push(0, 1.0);
  const int ps = static_cast<int>(meshes.space->vertex_count());
  double v = beta;
  for (int r = 0; r < db.size; ++r)
    for (int c = 0; c < sb.size; ++c) v += db.weight[r] * sb.weight[c] * w_main[db.index[r] * ps + sb.index[c]];
  if (has_time(kind)) {
    const BasisVector tb = meshes.time->basis(std::clamp(t, 0.0, meshes.time->duration()));
    for (int k = 0; k < tb.size; ++k) v += tb.weight[k] * w_time[tb.index[k]];
  }
  return v;
}

double LatentField::log_intensity_in(const Segment& seg, double f) const {
  const Point2 pos = lerp(seg.p0, seg.p1, f);
  const double theta = wrap_angle(seg.th0 + f * angle_step(seg.th0, seg.th1));
  const double t = seg.t0 + f * (seg.t1 - seg.t0);
  if (seg.tri < 0 || (has_direction(kind) && seg.arc < 0) || (has_time(kind) && seg.cell < 0))
    return log_intensity(t, pos, theta);
  const BasisVector sb = meshes.space->basis_in(seg.tri, pos);
  BasisVector db;
  if (has_direction(kind))
    db = meshes.dir->basis_in(seg.arc, theta);
  else
    db.push(0, 1.0);
  const int ps = static_cast<int>(meshes.space->vertex_count());
  double v = beta;
  for (int r = 0; r < db.size; ++r)
    for (int c = 0; c < sb.size; ++c) v += db.weight[r] * sb.weight[c] * w_main[db.index[r] * ps + sb.index[c]];
  if (has_time(kind)) {
    const BasisVector tb = meshes.time->basis_in(seg.cell, t);
    for (int k = 0; k < tb.size; ++k) v += tb.weight[k] * w_time[tb.index[k]];
  }
  return v;
}

SyntheticTruth draw_truth(ModelKind kind, const MeshSet& meshes, const Hyper& hyper, double beta,
                          std::uint64_t seed) {
  if (!meshes.space) throw ValidationError("spatial mesh required");
  SyntheticTruth t;
  t.hyper = hyper;
  t.seed = seed;
  t.field.kind = kind;
  t.field.meshes = meshes;
  t.field.beta = beta;
  const SparseMatrix qs = assemble_precision(meshes.space->mass_stiffness(), hyper.space);
  if (has_direction(kind)) {
    if (!meshes.dir) throw ValidationError("circular mesh required");
    const SparseMatrix qd = assemble_precision(meshes.dir->mass_stiffness(), hyper.dir);
    t.field.w_main = sample_gmrf(kron_precision(qd, qs), derive_seed(seed, 0));
  } else {
    t.field.w_main = sample_gmrf(qs, derive_seed(seed, 0));
  }
  if (has_time(kind)) {
    if (!meshes.time) throw ValidationError("temporal mesh required");
    t.field.w_time = sample_gmrf(assemble_precision(meshes.time->mass_stiffness(), hyper.time), derive_seed(seed, 1));
  }
  return t;
}

LatentField field_from_fit(const PosteriorFit& fit, const MeshSet& meshes) {
  LatentField f;
  f.kind = fit.kind;
  f.meshes = meshes;
  f.beta = fit.beta();
  f.w_main = fit.w_main();
  f.w_time = fit.w_time();
  return f;
}

std::vector<std::pair<double, double>> intensity_on_path(const LatentField& field, const SegmentedPath& segs) {
  const std::size_t expect = field.meshes.space->vertex_count() *
                             (has_direction(field.kind) ? field.meshes.dir->knot_count() : 1);
  if (static_cast<std::size_t>(field.w_main.size()) != expect) throw ValidationError("field does not match its meshes");
  std::vector<std::pair<double, double>> out;
  out.reserve(segs.segments.size());
  for (const auto& s : segs.segments)
    out.emplace_back(std::exp(field.log_intensity_in(s, 0.0)), std::exp(field.log_intensity_in(s, 1.0)));
  return out;
}

// ---------------------------------------------------------------------------
// Thinning

std::vector<SpikeEvent> simulate_spikes(const SegmentedPath& segs, const SegmentLogIntensity& log_intensity,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<SpikeEvent> events;
  std::vector<double> f, lg;
  for (const auto& seg : segs.segments) {
    if (!(seg.length > 0.0)) continue;
    const double l0 = log_intensity(seg, 0.0), l1 = log_intensity(seg, 1.0);
    int n = 1;
    if (std::isfinite(l0) && std::isfinite(l1))
      n = std::clamp(static_cast<int>(std::ceil(std::abs(l1 - l0) / kMaxLogGap)), 1, kMaxPieces);
    else if (std::isfinite(l0) || std::isfinite(l1))
      n = 64;
    // Refine until neighbouring values are close (the log-intensity may bend inside).
    for (;;) {
      f.assign(n + 1, 0.0);
      lg.assign(n + 1, 0.0);
      for (int k = 0; k <= n; ++k) {
        f[k] = static_cast<double>(k) / n;
        lg[k] = k == 0 ? l0 : (k == n ? l1 : log_intensity(seg, f[k]));
      }
      bool ok = true;
      for (int k = 0; k < n && ok; ++k)
        if (std::isfinite(lg[k]) && std::isfinite(lg[k + 1]) && std::abs(lg[k + 1] - lg[k]) >= kMaxLogGap) ok = false;
      if (ok || n >= kMaxPieces) break;
      n *= 2;
    }
    for (int k = 0; k < n; ++k) {
      const double la = std::exp(lg[k]), lb = std::exp(lg[k + 1]);
      const double bound = std::max(la, lb);
      if (!(bound > 0.0)) continue;
      const double piece = (f[k + 1] - f[k]) * seg.length;
      const long candidates = std::poisson_distribution<long>(bound * piece)(rng);
      for (long c = 0; c < candidates; ++c) {
        const double u = u01(rng);
        if (u01(rng) * bound >= la + u * (lb - la)) continue;
        const double g = f[k] + u * (f[k + 1] - f[k]);
        events.push_back({seg.t0 + g * (seg.t1 - seg.t0), lerp(seg.p0, seg.p1, g),
                          wrap_angle(seg.th0 + g * angle_step(seg.th0, seg.th1))});
      }
    }
  }
  std::sort(events.begin(), events.end(), [](const SpikeEvent& a, const SpikeEvent& b) { return a.time < b.time; });
  return events;
}

std::vector<SpikeEvent> simulate_spikes(const LatentField& field, const SessionData& path, std::uint64_t seed) {
  const SegmentedPath segs = segment_path(path, field.meshes);
  return simulate_spikes(
      segs, [&](const Segment& s, double f) { return field.log_intensity_in(s, f); }, seed);
}

SessionData with_spikes(const SessionData& path, const std::vector<SpikeEvent>& events) {
  SessionData out;
  out.arena = path.arena;
  out.samples.reserve(path.samples.size() + events.size());
  std::size_t e = 0;
  for (const auto& s : path.samples) {
    while (e < events.size() && events[e].time < s.time) {
      if (out.samples.empty() || events[e].time > out.samples.back().time)
        out.samples.push_back({events[e].time, events[e].pos, events[e].theta, true});
      ++e;
    }
    Sample copy = s;
    copy.spike = false;
    while (e < events.size() && events[e].time == s.time) {
      copy.spike = true;
      ++e;
    }
    out.samples.push_back(copy);
  }
  return out;
}

double RasterIntensity::at(Point2 p) const {
  const auto& g = grid;
  const double fx = std::clamp((p.x - g.box.xmin) / g.box.width() * g.nx - 0.5, 0.0, g.nx - 1.0);
  const double fy = std::clamp((p.y - g.box.ymin) / g.box.height() * g.ny - 0.5, 0.0, g.ny - 1.0);
  const int i = std::min(static_cast<int>(fx), g.nx - 1), j = std::min(static_cast<int>(fy), g.ny - 1);
  const int i1 = std::min(i + 1, g.nx - 1), j1 = std::min(j + 1, g.ny - 1);
  const double ax = fx - i, ay = fy - j;
  auto v = [&](int x, int y) { return rate[static_cast<std::size_t>(y) * g.nx + x]; };
  return (1 - ay) * ((1 - ax) * v(i, j) + ax * v(i1, j)) + ay * ((1 - ax) * v(i, j1) + ax * v(i1, j1));
}

SessionData replay_rate_map(const RasterIntensity& raster, const SessionData& session, std::uint64_t seed) {
  if (raster.rate.size() != static_cast<std::size_t>(raster.grid.nx) * raster.grid.ny)
    throw ValidationError("raster size does not match its grid");
  SegmentedPath segs;
  const auto& s = session.samples;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    Segment seg;
    seg.t0 = s[i].time;
    seg.t1 = s[i + 1].time;
    seg.p0 = s[i].pos;
    seg.p1 = s[i + 1].pos;
    seg.th0 = s[i].theta;
    seg.th1 = s[i + 1].theta;
    seg.length = distance(seg.p0, seg.p1);
    seg.sample = i;
    if (seg.length > 0.0) segs.segments.push_back(seg);
  }
  // time rate over speed gives events per cm
  auto log_rate = [&](const Segment& seg, double f) {
    const double r = raster.at(lerp(seg.p0, seg.p1, f));
    return r > 0.0 ? std::log(r * (seg.t1 - seg.t0) / seg.length) : -std::numeric_limits<double>::infinity();
  };
  return with_spikes(session, simulate_spikes(segs, log_rate, seed));
}

SessionData replay_fit(const LatentField& field, const SessionData& session, std::uint64_t seed) {
  return with_spikes(session, simulate_spikes(field, session, seed));
}

// ---------------------------------------------------------------------------
// Truth specification

namespace {

using nlohmann::ordered_json;

void check_keys(const ordered_json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
      throw ValidationError((path.empty() ? "" : path + ".") + it.key() + ": unknown key");
}

template <class T>
void read(const ordered_json& j, const char* key, const std::string& path, T& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number()) throw ValidationError(path + "." + key + ": expected a number");
  out = v.get<T>();
}

}  // namespace

TruthSpec parse_truth_spec(const std::string& text) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("truth spec is not valid JSON: ") + e.what());
  }
  check_keys(root, "", {"model", "beta", "walk", "meshes", "space", "direction", "time"});
  TruthSpec s;
  if (root.contains("model")) {
    if (!root["model"].is_string()) throw ValidationError("model: expected a string");
    s.kind = model_kind_from_string(root["model"].get<std::string>());
  }
  read(root, "beta", "", s.beta);
  if (root.contains("walk")) {
    const auto& w = root["walk"];
    check_keys(w, "walk", {"duration", "dt", "arena", "persistence", "speed", "speed_log_sd", "heading_noise", "seed"});
    read(w, "duration", "walk", s.walk.duration);
    read(w, "dt", "walk", s.walk.dt);
    read(w, "persistence", "walk", s.walk.persistence);
    read(w, "speed", "walk", s.walk.speed);
    read(w, "speed_log_sd", "walk", s.walk.speed_log_sd);
    read(w, "heading_noise", "walk", s.walk.heading_noise);
    read(w, "seed", "walk", s.walk.seed);
    if (w.contains("arena")) {
      const auto& a = w["arena"];
      if (!a.is_array() || a.size() != 4) throw ValidationError("walk.arena: expected [xmin, ymin, xmax, ymax]");
      s.walk.arena = {a[0].get<double>(), a[1].get<double>(), a[2].get<double>(), a[3].get<double>()};
    }
  }
  if (root.contains("meshes")) {
    const auto& m = root["meshes"];
    check_keys(m, "meshes", {"max_edge", "margin_fraction", "circle_knots", "time_spacing"});
    read(m, "max_edge", "meshes", s.meshes.max_edge);
    read(m, "margin_fraction", "meshes", s.meshes.margin_fraction);
    read(m, "circle_knots", "meshes", s.meshes.circle_knots);
    read(m, "time_spacing", "meshes", s.meshes.time_spacing);
  }
  auto block = [&](const char* name, Domain d, SpdeParams& p, bool damping) {
    if (!root.contains(name)) return;
    const auto& b = root[name];
    if (damping)
      check_keys(b, name, {"range", "sd", "damping"});
    else
      check_keys(b, name, {"range", "sd"});
    double range = p.range, sd = p.sd, phi = p.damping;
    read(b, "range", name, range);
    read(b, "sd", name, sd);
    if (damping) read(b, "damping", name, phi);
    if (!(range > 0.0) || !(sd > 0.0)) throw ValidationError(std::string(name) + ": range and sd must be positive");
    p = make_params(d, range, sd, phi);
  };
  block("space", Domain::plane, s.hyper.space, true);
  block("direction", Domain::circle, s.hyper.dir, false);
  block("time", Domain::line, s.hyper.time, false);
  return s;
}

TruthSpec load_truth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open truth spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_truth_spec(ss.str());
}

std::string dump_truth_spec(const TruthSpec& s) {
  ordered_json j;
  j["model"] = to_string(s.kind);
  j["beta"] = s.beta;
  const auto& w = s.walk;
  j["walk"] = {{"duration", w.duration},       {"dt", w.dt},
               {"arena", {w.arena.xmin, w.arena.ymin, w.arena.xmax, w.arena.ymax}},
               {"persistence", w.persistence}, {"speed", w.speed},
               {"speed_log_sd", w.speed_log_sd}, {"heading_noise", w.heading_noise},
               {"seed", w.seed}};
  j["meshes"] = {{"max_edge", s.meshes.max_edge},
                 {"margin_fraction", s.meshes.margin_fraction},
                 {"circle_knots", s.meshes.circle_knots},
                 {"time_spacing", s.meshes.time_spacing}};
  j["space"] = {{"range", s.hyper.space.range}, {"sd", s.hyper.space.sd}, {"damping", s.hyper.space.damping}};
  j["direction"] = {{"range", s.hyper.dir.range}, {"sd", s.hyper.dir.sd}};
  j["time"] = {{"range", s.hyper.time.range}, {"sd", s.hyper.time.sd}};
  return j.dump(2) + "\n";
}

Simulation simulate(const TruthSpec& spec) {
  Simulation sim;
  const SessionData path = random_walk_trajectory(spec.walk);
  MeshSet meshes;
  const Rect& a = spec.walk.arena;
  const double margin = spec.meshes.margin_fraction * std::max(a.width(), a.height());
  meshes.space = std::make_shared<TriMesh2D>(build_tri_mesh(a, spec.meshes.max_edge, margin));
  if (has_direction(spec.kind)) meshes.dir = std::make_shared<CircularMesh>(build_circular_mesh(spec.meshes.circle_knots));
  if (has_time(spec.kind)) {
    const double T = path.duration();
    const int knots = std::max(2, static_cast<int>(std::ceil(T / spec.meshes.time_spacing - 1e-9)) + 1);
    meshes.time = std::make_shared<TemporalMesh>(build_uniform_temporal_mesh(T, knots));
  }
  sim.truth = draw_truth(spec.kind, meshes, spec.hyper, spec.beta, derive_seed(spec.walk.seed, 1));
  sim.session = with_spikes(path, simulate_spikes(sim.truth.field, path, derive_seed(spec.walk.seed, 2)));
  return sim;
}

void write_latent_csv(double beta, const Eigen::VectorXd& w_main, const Eigen::VectorXd& w_time,
                      const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << "block,index,value\n";
  out << "beta,0," << csv::format_double(beta) << '\n';
  for (Eigen::Index i = 0; i < w_main.size(); ++i) out << "main," << i << ',' << csv::format_double(w_main[i]) << '\n';
  for (Eigen::Index i = 0; i < w_time.size(); ++i) out << "time," << i << ',' << csv::format_double(w_time[i]) << '\n';
}

}  // namespace gridcox
