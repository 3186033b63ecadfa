#include "gridcox/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <nlohmann/json.hpp>

#include "gridcox/config.hpp"
#include "gridcox/csv.hpp"
#include "gridcox/error.hpp"
#include "gridcox/eval.hpp"
#include "gridcox/pipeline.hpp"
#include "gridcox/sim.hpp"

#ifndef GRIDCOX_VERSION
#define GRIDCOX_VERSION "0.0.0"
#endif

namespace gridcox {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::vector<std::string> args;
};

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + p.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig run_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void write_json(const json& j, const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

json manifest(const std::string& command, const Common& c, const RunConfig* cfg, const json& seeds,
              const std::vector<fs::path>& inputs) {
  json j;
  j["tool"] = "gridcox";
  j["command"] = command;
  j["arguments"] = c.args;
  j["versions"] = {{"gridcox", version_string()},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"boost", BOOST_LIB_VERSION}};
  if (cfg) {
    j["config_hash"] = config_hash(*cfg);
    j["config"] = json::parse(dump_config(*cfg));
  }
  j["seeds"] = seeds;
  json in = json::array();
  for (const auto& p : inputs) in.push_back({{"path", p.string()}, {"fnv1a", file_hash(p)}});
  j["inputs"] = in;
  return j;
}

json block_json(const SpdeParams& p) {
  return {{"range", p.range}, {"sd", p.sd}, {"damping", p.damping}, {"kappa", p.kappa}, {"tau", p.tau}};
}

json hyper_json(ModelKind kind, const Hyper& h) {
  json j;
  j["space"] = block_json(h.space);
  if (has_direction(kind)) j["direction"] = block_json(h.dir);
  if (has_time(kind)) j["time"] = block_json(h.time);
  return j;
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir.string());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

int cmd_ratemap(const Common& c, const std::string& session, const std::string& out_dir,
                std::optional<double> bandwidth, std::optional<int> nx, std::optional<int> ny, std::ostream& out) {
  RunConfig cfg = run_config(c);
  if (bandwidth) cfg.ratemap.bandwidth = *bandwidth;
  if (nx) cfg.ratemap.nx = *nx;
  if (ny) cfg.ratemap.ny = *ny;
  cfg.validate();
  const SessionData data = load_session(session);
  RasterSpec grid;
  grid.box = data.arena;
  grid.nx = cfg.ratemap.nx;
  grid.ny = cfg.ratemap.ny;
  const RateMap rm = rate_map_kernel(data, cfg.ratemap.bandwidth, grid);
  const fs::path dir(out_dir);
  prepare_dir(dir);
  write_raster_csv(grid, rm.rate_time, dir / "rate_time.csv");
  write_raster_csv(grid, rm.rate_distance, dir / "rate_distance.csv");
  write_raster_csv(grid, rm.speed, dir / "speed.csv");
  json meta;
  meta["bandwidth_cm"] = rm.bandwidth;
  meta["nx"] = grid.nx;
  meta["ny"] = grid.ny;
  meta["box"] = {grid.box.xmin, grid.box.ymin, grid.box.xmax, grid.box.ymax};
  meta["spikes"] = data.spike_count();
  meta["duration_s"] = data.duration();
  meta["files"] = {{"rate_time.csv", "spikes per second"},
                   {"rate_distance.csv", "spikes per cm"},
                   {"speed.csv", "expected speed, cm per second"}};
  write_json(meta, dir / "metadata.json");
  write_json(manifest("ratemap", c, &cfg, {{"root", cfg.seed}}, {session}), dir / "manifest.json");
  out << "rate maps written to " << dir.string() << " (bandwidth " << rm.bandwidth << " cm)\n";
  return kExitOk;
}

int cmd_fit(const Common& c, const std::string& model, const std::string& session, const std::string& out_dir,
            std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = run_config(c);
  const ModelKind kind = model_kind_from_string(model);
  const SessionData data = load_session(session);
  const PreparedSession prep = prepare_session(data, cfg.meshes, kind);
  const PosteriorFit fit = fit_session(prep, data, cfg);

  const fs::path dir(out_dir);
  prepare_dir(dir);
  json h;
  h["model"] = to_string(kind);
  h["hyper"] = hyper_json(kind, fit.hyper);
  h["beta"] = fit.beta();
  h["objective"] = fit.objective;
  h["log_evidence"] = fit.laplace.log_evidence;
  h["log_hyper_prior"] = fit.log_hyper_prior;
  write_json(h, dir / "hyper.json");
  write_latent_csv(fit.beta(), fit.w_main(), fit.w_time(), dir / "latent.csv");

  json r;
  r["model"] = to_string(kind);
  r["spikes"] = data.spike_count();
  r["duration_s"] = data.duration();
  r["path_length_cm"] = data.path_length();
  r["segments"] = prep.segments.segments.size();
  r["mesh"] = {{"space_vertices", prep.meshes.space->vertex_count()},
               {"direction_knots", prep.meshes.dir ? prep.meshes.dir->knot_count() : 0},
               {"time_knots", prep.meshes.time ? prep.meshes.time->knot_count() : 0}};
  r["search"] = {{"evaluations", fit.evaluations},
                 {"hit_evaluation_cap", fit.hit_evaluation_cap},
                 {"start_objective", fit.start_objective},
                 {"objective", fit.objective}};
  r["newton"] = {{"iterations", fit.laplace.iterations},
                 {"gradient_norm", fit.laplace.gradient_norm},
                 {"log_likelihood", fit.laplace.log_likelihood}};
  r["runtime_s"] = seconds_since(t0);
  write_json(r, dir / "report.json");
  write_json(manifest("fit", c, &cfg, {{"root", cfg.seed}}, {session}), dir / "manifest.json");
  out << to_string(kind) << ": objective " << fit.objective << ", " << fit.evaluations << " evaluations";
  if (fit.hit_evaluation_cap) out << " (evaluation cap reached)";
  out << "\n";
  return kExitOk;
}

int cmd_simulate(const Common& c, const std::string& truth, std::optional<double> duration, std::optional<double> dt,
                 const std::string& out_file, std::ostream& out) {
  TruthSpec spec = load_truth_spec(truth);
  if (duration) spec.walk.duration = *duration;
  if (dt) spec.walk.dt = *dt;
  if (c.seed) spec.walk.seed = *c.seed;
  const Simulation sim = simulate(spec);
  const fs::path path(out_file);
  if (path.has_parent_path()) prepare_dir(path.parent_path());
  save_session(sim.session, path);
  const fs::path stem = path.parent_path() / path.stem();
  write_latent_csv(sim.truth.field.beta, sim.truth.field.w_main, sim.truth.field.w_time,
                   stem.string() + "_truth_latent.csv");
  {
    std::ofstream js(stem.string() + "_truth.json");
    js << dump_truth_spec(spec);
  }
  const json seeds = {{"walk", spec.walk.seed},
                      {"field", derive_seed(spec.walk.seed, 1)},
                      {"spikes", derive_seed(spec.walk.seed, 2)}};
  write_json(manifest("simulate", c, nullptr, seeds, {truth}), stem.string() + "_manifest.json");
  out << sim.session.spike_count() << " spikes over " << sim.session.duration() << " s written to " << path.string()
      << "\n";
  return kExitOk;
}

int cmd_crossval(const Common& c, const std::string& session, const std::vector<std::string>& model_names,
                 const std::vector<double>& taus, std::optional<long> permutations, std::optional<int> draws,
                 const std::string& out_dir, std::ostream& out) {
  RunConfig cfg = run_config(c);
  if (permutations) cfg.inference.permutations = *permutations;
  if (draws) cfg.inference.posterior_draws = *draws;
  cfg.validate();
  if (model_names.empty()) throw ValidationError("--models: at least one model required");
  if (taus.empty()) throw ValidationError("--tau: at least one interval length required");
  std::vector<ModelKind> models;
  for (const auto& m : model_names) models.push_back(model_kind_from_string(m));
  const SessionData data = load_session(session);

  std::vector<CrossvalResult> runs;
  std::vector<TableRow> rows;
  json fits = json::array();
  for (std::size_t t = 0; t < taus.size(); ++t) {
    RunConfig tc = cfg;
    tc.seed = derive_seed(cfg.seed, t);
    runs.push_back(crossval(data, models, taus[t], tc, c.threads));
    const auto table = score_table(runs.back(), cfg.inference.permutations, derive_seed(tc.seed, 7), c.threads);
    rows.insert(rows.end(), table.begin(), table.end());
    for (const auto& f : runs.back().fits)
      fits.push_back({{"tau", taus[t]},
                      {"fold", f.fold + 1},
                      {"model", to_string(f.kind)},
                      {"hyper", hyper_json(f.kind, f.hyper)},
                      {"objective", f.objective},
                      {"evaluations", f.evaluations},
                      {"hit_evaluation_cap", f.hit_evaluation_cap}});
    if (runs.back().skipped > 0)
      out << "tau " << taus[t] << ": " << runs.back().skipped << " intervals without movement skipped\n";
  }

  const fs::path dir(out_dir);
  prepare_dir(dir);
  std::vector<std::pair<double, const CrossvalResult*>> refs;
  for (std::size_t t = 0; t < taus.size(); ++t) refs.emplace_back(taus[t], &runs[t]);
  write_interval_csv(refs, dir / "intervals.csv");
  write_table_csv(rows, models.size() > 1, dir / "table.csv");
  write_json(fits, dir / "fits.json");
  json seeds = {{"root", cfg.seed}};
  for (std::size_t t = 0; t < taus.size(); ++t) seeds["tau_" + csv::format_double(taus[t])] = derive_seed(cfg.seed, t);
  write_json(manifest("crossval", c, &cfg, seeds, {session}), dir / "manifest.json");

  for (const auto& r : rows) {
    if (!r.has_difference || r.fold != "combined") continue;
    out << "tau " << r.tau << " " << to_string(r.model) << " - " << to_string(models[0]) << ": SE " << r.diff_se
        << " (p " << r.test_se.p << "), DS " << r.diff_ds << " (p " << r.test_ds.p << ")\n";
  }
  return kExitOk;
}

}  // namespace

std::string version_string() { return GRIDCOX_VERSION; }

int cmd_check_variance(std::ostream& out, double tolerance, const VarianceFormula& closed_form) {
  const auto rows = check_variance_grid(tolerance, closed_form);
  out << "domain,kappa,phi,closed_form,numeric,relative_error,status\n";
  int failed = 0;
  for (const auto& r : rows) {
    out << to_string(r.domain) << ',' << csv::format_double(r.kappa) << ',' << csv::format_double(r.phi) << ','
        << csv::format_double(r.closed_form) << ',' << csv::format_double(r.numeric) << ','
        << csv::format_double(r.relative_error) << ',' << (r.pass ? "pass" : "FAIL") << '\n';
    failed += r.pass ? 0 : 1;
  }
  out << rows.size() - failed << "/" << rows.size() << " rows within " << tolerance << "\n";
  return failed ? kExitCheckFailed : kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Log-Gaussian Cox process models for spike trains along trajectories", "gridcox"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());
  Common common;
  common.args = args;
  std::uint64_t seed = 0;
  app.add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "root seed (overrides the config)");
  app.add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber);

  auto* config = app.add_subcommand("config", "configuration utilities");
  config->require_subcommand(1);
  auto* defaults = config->add_subcommand("print-defaults", "print the default configuration");

  auto* check = app.add_subcommand("check-variance", "closed-form marginal variances against spectral quadrature");
  double tolerance = 1e-6;
  check->add_option("--tolerance", tolerance, "relative error bound")->capture_default_str();

  auto* ratemap = app.add_subcommand("ratemap", "kernel firing-rate maps");
  std::string session, out_dir;
  std::optional<double> bandwidth;
  std::optional<int> nx, ny;
  ratemap->add_option("--session", session, "session CSV")->required();
  ratemap->add_option("--out", out_dir, "output directory")->required();
  ratemap->add_option("--bandwidth", bandwidth, "kernel bandwidth in cm");
  ratemap->add_option("--nx", nx, "raster columns");
  ratemap->add_option("--ny", ny, "raster rows");

  auto* fit = app.add_subcommand("fit", "fit one model to a session");
  std::string model;
  fit->add_option("--model", model, "m0, m0t, mxt or mxtt")->required();
  fit->add_option("--session", session, "session CSV")->required();
  fit->add_option("--out", out_dir, "output directory")->required();

  auto* sim = app.add_subcommand("simulate", "simulate a session from a truth specification");
  std::string truth, out_file;
  std::optional<double> duration, dt;
  sim->add_option("--truth", truth, "truth JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--T", duration, "duration in s");
  sim->add_option("--dt", dt, "sampling interval in s");
  sim->add_option("--out", out_file, "session CSV to write")->required();

  auto* cv = app.add_subcommand("crossval", "two-fold interval cross-validation of models");
  std::vector<std::string> models;
  std::vector<double> taus;
  std::optional<long> permutations;
  std::optional<int> draws;
  cv->add_option("--session", session, "session CSV")->required();
  cv->add_option("--models", models, "comma-separated models; the first is the baseline")
      ->required()
      ->delimiter(',');
  cv->add_option("--tau", taus, "comma-separated interval lengths in s")->required()->delimiter(',');
  cv->add_option("--J", permutations, "permutations per test");
  cv->add_option("--K", draws, "posterior draws per interval");
  cv->add_option("--out", out_dir, "output directory")->required();

  for (auto* sub : {config, check, ratemap, fit, sim, cv}) sub->fallthrough();
  defaults->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }
  if (*seed_opt) common.seed = seed;

  try {
    if (*defaults) {
      out << dump_config(RunConfig{});
      return kExitOk;
    }
    if (*check) return cmd_check_variance(out, tolerance);
    if (*ratemap) return cmd_ratemap(common, session, out_dir, bandwidth, nx, ny, out);
    if (*fit) return cmd_fit(common, model, session, out_dir, out);
    if (*sim) return cmd_simulate(common, truth, duration, dt, out_file, out);
    if (*cv) return cmd_crossval(common, session, models, taus, permutations, draws, out_dir, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NoClosedFormError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConvergenceError& e) {
    err << "convergence failure: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const FactorizationError& e) {
    err << "convergence failure: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace gridcox
