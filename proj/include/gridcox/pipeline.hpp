#pragma once

#include <vector>

#include "gridcox/config.hpp"
#include "gridcox/model.hpp"
#include "gridcox/trajectory.hpp"

namespace gridcox {

/// Meshes and segmented path for one model kind on one session.
struct PreparedSession {
  ModelKind kind = ModelKind::space;
  MeshSet meshes;
  SegmentedPath segments;
};

/// Spatial mesh over the arena plus margin; circular mesh for direction kinds;
/// temporal knots thinned from segment boundaries for temporal kinds.
MeshSet build_meshes(const SessionData& data, const MeshConfig& cfg, ModelKind kind,
                     const std::vector<double>& extra_breaks = {});
PreparedSession prepare_session(const SessionData& data, const MeshConfig& cfg, ModelKind kind,
                                const std::vector<double>& extra_breaks = {});

/// Model on the part of the path accepted by `keep` (everything when empty).
LgcpModel make_model(const PreparedSession& prep, const SessionData& data, const PriorConfig& priors,
                     const TimeFilter& keep = {});

/// Hyperparameter search followed by the MAP fit at the optimum.
PosteriorFit fit_session(const PreparedSession& prep, const SessionData& data, const RunConfig& cfg,
                         const TimeFilter& keep = {});

}  // namespace gridcox
