#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gridcox/model.hpp"

namespace gridcox {

struct MeshConfig {
  double max_edge = 5.0;         // cm
  double margin_fraction = 0.2;  // of the larger arena side
  int circle_knots = 8;
  double time_spacing = 60.0;  // s, target gap between temporal knots
};

struct InferenceConfig {
  double newton_tolerance = 1e-6;
  int newton_max_iterations = 100;
  int max_evaluations = 200;
  int restarts = 3;
  double initial_step = 0.5;
  double search_tolerance = 1e-4;
  int posterior_draws = 2000;     // K
  long permutations = 1000000;    // J
};

struct RateMapConfig {
  double bandwidth = 3.0;  // cm
  int nx = 50;
  int ny = 50;
};

struct RunConfig {
  MeshConfig meshes;
  PriorConfig priors;
  InferenceConfig inference;
  RateMapConfig ratemap;
  std::uint64_t seed = 1;

  /// Throws ValidationError naming the offending key.
  void validate() const;
};

/// Pretty-printed JSON with every key present.
std::string dump_config(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected with their path.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// FNV-1a of the canonical dump, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

SearchOptions search_options(const RunConfig& cfg);
NewtonOptions newton_options(const RunConfig& cfg);

}  // namespace gridcox
