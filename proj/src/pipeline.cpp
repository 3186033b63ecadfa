#include "gridcox/pipeline.hpp"

#include <algorithm>

#include "gridcox/error.hpp"

namespace gridcox {

MeshSet build_meshes(const SessionData& data, const MeshConfig& cfg, ModelKind kind,
                     const std::vector<double>& extra_breaks) {
  if (data.samples.size() < 2) throw ValidationError("session needs at least two samples");
  MeshSet m;
  const double margin = cfg.margin_fraction * std::max(data.arena.width(), data.arena.height());
  m.space = std::make_shared<TriMesh2D>(build_tri_mesh(data.arena, cfg.max_edge, margin));
  if (has_direction(kind)) m.dir = std::make_shared<CircularMesh>(build_circular_mesh(cfg.circle_knots));
  if (has_time(kind)) {
    const SegmentedPath segs = segment_path(data, *m.space, m.dir.get(), nullptr, extra_breaks);
    m.time = std::make_shared<TemporalMesh>(thin_temporal_knots(segs, cfg.time_spacing));
  }
  return m;
}

PreparedSession prepare_session(const SessionData& data, const MeshConfig& cfg, ModelKind kind,
                                const std::vector<double>& extra_breaks) {
  PreparedSession p;
  p.kind = kind;
  p.meshes = build_meshes(data, cfg, kind, extra_breaks);
  p.segments = segment_path(data, p.meshes, extra_breaks);
  return p;
}

LgcpModel make_model(const PreparedSession& prep, const SessionData& data, const PriorConfig& priors,
                     const TimeFilter& keep) {
  return LgcpModel(prep.kind, prep.meshes, integration_weights(prep.segments, data, prep.meshes, prep.kind, keep),
                   priors);
}

PosteriorFit fit_session(const PreparedSession& prep, const SessionData& data, const RunConfig& cfg,
                         const TimeFilter& keep) {
  const LgcpModel model = make_model(prep, data, cfg.priors, keep);
  if (model.likelihood().design().path_length <= 0.0) throw ValidationError("no path to fit on");
  return optimize_hyper(model, search_options(cfg));
}

}  // namespace gridcox
