#include "gridcox/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "gridcox/error.hpp"

namespace gridcox {

namespace {

using nlohmann::ordered_json;

// One JSON section: key -> (read, write) accessors.
struct Field {
  std::function<void(const ordered_json&, const std::string&)> read;
  std::function<ordered_json()> write;
};
using Section = std::vector<std::pair<std::string, Field>>;

template <class T>
Field field(T& target) {
  return {[&target](const ordered_json& j, const std::string& path) {
            try {
              if constexpr (std::is_integral_v<T>) {
                if (!j.is_number_integer() && !j.is_number_unsigned())
                  throw ValidationError(path + ": expected an integer");
              } else if (!j.is_number()) {
                throw ValidationError(path + ": expected a number");
              }
              target = j.get<T>();
            } catch (const nlohmann::json::exception& e) {
              throw ValidationError(path + ": " + e.what());
            }
          },
          [&target] { return ordered_json(target); }};
}

std::vector<std::pair<std::string, Section>> sections(RunConfig& c) {
  return {
      {"meshes",
       {{"max_edge", field(c.meshes.max_edge)},
        {"margin_fraction", field(c.meshes.margin_fraction)},
        {"circle_knots", field(c.meshes.circle_knots)},
        {"time_spacing", field(c.meshes.time_spacing)}}},
      {"priors",
       {{"range_space_median", field(c.priors.range_space_median)},
        {"range_space_log_sd", field(c.priors.range_space_log_sd)},
        {"damping_space_a", field(c.priors.damping_space_a)},
        {"damping_space_b", field(c.priors.damping_space_b)},
        {"sd_space_rate", field(c.priors.sd_space_rate)},
        {"sd_direction_rate", field(c.priors.sd_direction_rate)},
        {"sd_time_rate", field(c.priors.sd_time_rate)},
        {"range_direction_rate", field(c.priors.range_direction_rate)},
        {"range_time_rate", field(c.priors.range_time_rate)},
        {"intercept_mean", field(c.priors.intercept_mean)},
        {"intercept_sd", field(c.priors.intercept_sd)}}},
      {"inference",
       {{"newton_tolerance", field(c.inference.newton_tolerance)},
        {"newton_max_iterations", field(c.inference.newton_max_iterations)},
        {"max_evaluations", field(c.inference.max_evaluations)},
        {"restarts", field(c.inference.restarts)},
        {"initial_step", field(c.inference.initial_step)},
        {"search_tolerance", field(c.inference.search_tolerance)},
        {"posterior_draws", field(c.inference.posterior_draws)},
        {"permutations", field(c.inference.permutations)}}},
      {"ratemap",
       {{"bandwidth", field(c.ratemap.bandwidth)}, {"nx", field(c.ratemap.nx)}, {"ny", field(c.ratemap.ny)}}},
      {"seeds", {{"root", field(c.seed)}}},
  };
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ValidationError(path + ": " + what);
}

}  // namespace

void RunConfig::validate() const {
  require(meshes.max_edge > 0.0, "meshes.max_edge", "must be positive");
  require(meshes.margin_fraction >= 0.0, "meshes.margin_fraction", "must be non-negative");
  require(meshes.circle_knots >= 3, "meshes.circle_knots", "must be at least 3");
  require(meshes.time_spacing > 0.0, "meshes.time_spacing", "must be positive");
  priors.validate();
  require(inference.newton_tolerance > 0.0, "inference.newton_tolerance", "must be positive");
  require(inference.newton_max_iterations >= 1, "inference.newton_max_iterations", "must be at least 1");
  require(inference.max_evaluations >= 1, "inference.max_evaluations", "must be at least 1");
  require(inference.restarts >= 0, "inference.restarts", "must be non-negative");
  require(inference.initial_step > 0.0, "inference.initial_step", "must be positive");
  require(inference.search_tolerance > 0.0, "inference.search_tolerance", "must be positive");
  require(inference.posterior_draws >= 2, "inference.posterior_draws", "must be at least 2");
  require(inference.permutations >= 1, "inference.permutations", "must be at least 1");
  require(ratemap.bandwidth > 0.0, "ratemap.bandwidth", "must be positive");
  require(ratemap.nx >= 1 && ratemap.ny >= 1, "ratemap.nx", "raster needs at least one cell");
}

std::string dump_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  ordered_json root = ordered_json::object();
  for (auto& [name, sec] : sections(copy)) {
    ordered_json obj = ordered_json::object();
    for (auto& [key, f] : sec) obj[key] = f.write();
    root[name] = obj;
  }
  return root.dump(2) + "\n";
}

RunConfig parse_config(const std::string& text) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("config: top level must be an object");
  RunConfig cfg;
  auto secs = sections(cfg);
  for (auto it = root.begin(); it != root.end(); ++it) {
    auto sec = std::find_if(secs.begin(), secs.end(), [&](const auto& s) { return s.first == it.key(); });
    if (sec == secs.end()) throw ValidationError(it.key() + ": unknown key");
    if (!it.value().is_object()) throw ValidationError(it.key() + ": expected an object");
    for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) {
      const std::string path = it.key() + "." + jt.key();
      auto f = std::find_if(sec->second.begin(), sec->second.end(), [&](const auto& p) { return p.first == jt.key(); });
      if (f == sec->second.end()) throw ValidationError(path + ": unknown key");
      f->second.read(jt.value(), path);
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump_config(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

NewtonOptions newton_options(const RunConfig& cfg) {
  NewtonOptions n;
  n.tolerance = cfg.inference.newton_tolerance;
  n.max_iterations = cfg.inference.newton_max_iterations;
  return n;
}

SearchOptions search_options(const RunConfig& cfg) {
  SearchOptions s;
  s.max_evaluations = cfg.inference.max_evaluations;
  s.restarts = cfg.inference.restarts;
  s.initial_step = cfg.inference.initial_step;
  s.tolerance = cfg.inference.search_tolerance;
  s.seed = cfg.seed;
  s.newton = newton_options(cfg);
  return s;
}

}  // namespace gridcox
