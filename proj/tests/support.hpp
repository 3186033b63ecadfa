#pragma once

// Helpers shared by the model tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include <Eigen/Dense>

#include "gridcox/model.hpp"

namespace gridcox::testing {

// Tracked random walk at 50 Hz with spikes at a constant rate per cm. theta_step is the
// sd of the head-direction increment per sample (0.1 rad is 5 rad/s rms).
inline SessionData walk_session(std::uint64_t seed, double duration, double rate_per_cm, double arena = 20.0,
                                double theta_step = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SessionData d;
  d.arena = {0, 0, arena, arena};
  Point2 p{arena / 2, arena / 2};
  double heading = 0.3, theta = 1.0;
  const double dt = 0.02;
  const int steps = static_cast<int>(std::round(duration / dt));
  for (int i = 0; i <= steps; ++i) {
    double len = 0.0;
    if (i > 0) {
      heading += 0.3 * n01(rng);
      const double speed = 10.0 * std::exp(0.3 * n01(rng));
      Point2 q = p + (speed * dt) * Point2{std::cos(heading), std::sin(heading)};
      if (q.x < 0 || q.x > arena) { q.x = std::clamp(q.x, 0.0, arena); heading = kPi - heading; }
      if (q.y < 0 || q.y > arena) { q.y = std::clamp(q.y, 0.0, arena); heading = -heading; }
      len = distance(p, q);
      p = q;
      theta += theta_step * n01(rng);
    }
    d.samples.push_back({i * dt, p, wrap_angle(theta), u(rng) < rate_per_cm * len});
  }
  return d;
}

struct Problem {
  SessionData data;
  MeshSet meshes;
  Design design;
};

inline Problem make_problem(ModelKind kind, const SessionData& data, double max_edge = 5.0, int dir_knots = 6,
                     int time_knots = 5) {
  Problem pr;
  pr.data = data;
  pr.meshes.space = std::make_shared<TriMesh2D>(build_tri_mesh(data.arena, max_edge, 0.0));
  if (has_direction(kind)) pr.meshes.dir = std::make_shared<CircularMesh>(build_circular_mesh(dir_knots));
  if (has_time(kind))
    pr.meshes.time = std::make_shared<TemporalMesh>(build_uniform_temporal_mesh(data.duration(), time_knots));
  const auto segs = segment_path(data, pr.meshes);
  pr.design = integration_weights(segs, data, pr.meshes, kind);
  return pr;
}

inline Eigen::VectorXd random_state(int n, std::mt19937_64& rng, double scale = 0.7) {
  std::normal_distribution<double> n01(0.0, scale);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = n01(rng);
  return x;
}

inline double max_rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

inline const ModelKind kAllKinds[] = {ModelKind::space, ModelKind::space_time, ModelKind::space_dir,
                               ModelKind::space_dir_time};

// Brute-force trapezoid of the interpolated intensity on a path subdivided `refine`
// times, with bases evaluated by point location.
inline double refined_quadrature(const Problem& pr, ModelKind kind, const Eigen::VectorXd& x, int refine) {
  const auto& s = pr.data.samples;
  const int ps = static_cast<int>(pr.meshes.space->vertex_count());
  const int p_main = pr.design.p_main;
  auto intensity = [&](double t, Point2 pos, double th) {
    const BasisVector sb = pr.meshes.space->basis(pos);
    BasisVector db;
    if (has_direction(kind)) db = pr.meshes.dir->basis(th);
    else db.push(0, 1.0);
    double main = 0.0;
    for (int r = 0; r < db.size; ++r)
      for (int c = 0; c < sb.size; ++c)
        main += db.weight[r] * sb.weight[c] * std::exp(x[1 + db.index[r] * ps + sb.index[c]]);
    double temporal = 1.0;
    if (has_time(kind)) {
      const BasisVector tb = pr.meshes.time->basis(t);
      temporal = 0.0;
      for (int k = 0; k < tb.size; ++k) temporal += tb.weight[k] * std::exp(x[1 + p_main + tb.index[k]]);
    }
    return std::exp(x[0]) * main * temporal;
  };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double step = angle_step(s[i].theta, s[i + 1].theta);
    double prev = intensity(s[i].time, s[i].pos, s[i].theta);
    Point2 prev_p = s[i].pos;
    for (int k = 1; k <= refine; ++k) {
      const double f = static_cast<double>(k) / refine;
      const Point2 p = s[i].pos + f * (s[i + 1].pos - s[i].pos);
      const double t = k == refine ? s[i + 1].time : s[i].time + f * (s[i + 1].time - s[i].time);
      const double cur = intensity(t, p, wrap_angle(s[i].theta + f * step));
      total += 0.5 * distance(prev_p, p) * (prev + cur);
      prev = cur;
      prev_p = p;
    }
  }
  return total;
}

}  // namespace gridcox::testing
