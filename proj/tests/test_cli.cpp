#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "gridcox/cli.hpp"
#include "gridcox/config.hpp"
#include "gridcox/csv.hpp"
#include "gridcox/sim.hpp"

using namespace gridcox;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<double>> read_numeric_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> r;
    for (auto f : csv::split(line)) {
      double v = 0.0;
      REQUIRE(csv::parse_double(f, v));
      r.push_back(v);
    }
    rows.push_back(r);
  }
  return rows;
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("gridcox_cli_" + std::to_string(::getpid()))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

const char* kTruth = R"({"model": "mxt", "beta": -2.5,
  "walk": {"arena": [0, 0, 30, 30], "speed": 12},
  "meshes": {"max_edge": 6, "circle_knots": 6},
  "space": {"range": 15, "sd": 1, "damping": -0.5},
  "direction": {"range": 2, "sd": 0.8}})";

const char* kQuick = R"({"meshes": {"max_edge": 6, "circle_knots": 6},
  "inference": {"max_evaluations": 15, "restarts": 0, "posterior_draws": 100}})";

}  // namespace

TEST_CASE("config print-defaults") {
  const Run r = cli({"config", "print-defaults"});
  CHECK(r.code == kExitOk);
  CHECK(dump_config(parse_config(r.out)) == r.out);
  CHECK(r.out == dump_config(RunConfig{}));
  CHECK(cli({"config"}).code == kExitValidation);
  CHECK(cli({}).code == kExitValidation);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("check-variance") {
  const Run r = cli({"check-variance"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("54/54") != std::string::npos);
  const std::string plane_row = "plane,1,1," + csv::format_double(1.0 / (4.0 * M_PI));
  CHECK(r.out.find(plane_row) != std::string::npos);

  // a formula off by 1e-5 in one domain is caught
  const VarianceFormula wrong = [](Domain d, double k, double phi, double s) {
    const double v = marginal_variance(d, k, phi, s);
    return d == Domain::line ? v * (1.0 + 1e-5) : v;
  };
  std::ostringstream out;
  CHECK(cmd_check_variance(out, 1e-6, wrong) == kExitCheckFailed);
  CHECK(out.str().find("line,1,1,") != std::string::npos);
  CHECK(out.str().find("36/54") != std::string::npos);
}

TEST_CASE("ratemap outputs") {
  TempDir tmp;
  TruthSpec spec = parse_truth_spec(kTruth);
  spec.walk.duration = 200;
  const Simulation sim = simulate(spec);
  save_session(sim.session, tmp / "s.csv");

  const Run r = cli({"ratemap", "--session", (tmp / "s.csv").string(), "--out", (tmp / "rm").string(), "--nx", "20",
                     "--ny", "15"});
  REQUIRE(r.code == kExitOk);
  const auto meta = nlohmann::json::parse(slurp(tmp / "rm/metadata.json"));
  CHECK(meta["bandwidth_cm"] == 3.0);
  CHECK(meta["nx"] == 20);
  const auto rt = read_numeric_csv(tmp / "rm/rate_time.csv");
  const auto rd = read_numeric_csv(tmp / "rm/rate_distance.csv");
  const auto sp = read_numeric_csv(tmp / "rm/speed.csv");
  REQUIRE(rt.size() == 300);
  double total = 0.0;
  for (std::size_t i = 0; i < rt.size(); ++i) {
    CHECK(rt[i][2] == doctest::Approx(rd[i][2] * sp[i][2]).epsilon(1e-12));
    total += rt[i][2];
  }
  CHECK(total > 0.0);
  CHECK(fs::exists(tmp / "rm/manifest.json"));

  // no spikes: zero rasters
  SessionData quiet = sim.session;
  for (auto& s : quiet.samples) s.spike = false;
  save_session(quiet, tmp / "quiet.csv");
  REQUIRE(cli({"ratemap", "--session", (tmp / "quiet.csv").string(), "--out", (tmp / "rq").string()}).code == 0);
  for (const auto& row : read_numeric_csv(tmp / "rq/rate_time.csv")) CHECK(row[2] == 0.0);
}

TEST_CASE("simulate, fit and crossval") {
  TempDir tmp;
  write_text(tmp / "truth.json", kTruth);
  write_text(tmp / "quick.json", kQuick);
  const auto t0 = std::chrono::steady_clock::now();

  Run r = cli({"simulate", "--truth", (tmp / "truth.json").string(), "--T", "300", "--dt", "0.05", "--seed", "7",
               "--out", (tmp / "sim/session.csv").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(tmp / "sim/session_truth_latent.csv"));
  const auto sm = nlohmann::json::parse(slurp(tmp / "sim/session_manifest.json"));
  CHECK(sm["seeds"]["walk"] == 7);
  const std::string first = slurp(tmp / "sim/session.csv");
  REQUIRE(cli({"simulate", "--truth", (tmp / "truth.json").string(), "--T", "300", "--dt", "0.05", "--seed", "7",
               "--out", (tmp / "again.csv").string()})
              .code == kExitOk);
  CHECK(slurp(tmp / "again.csv") == first);
  const SessionData data = load_session(tmp / "sim/session.csv");
  CHECK(data.duration() == doctest::Approx(300.0));

  const std::string session = (tmp / "sim/session.csv").string();
  const std::string cfg = (tmp / "quick.json").string();
  for (const char* out : {"fit_a", "fit_b"}) {
    r = cli({"--config", cfg, "fit", "--model", "m0", "--session", session, "--out", (tmp / out).string()});
    REQUIRE(r.code == kExitOk);
  }
  CHECK(slurp(tmp / "fit_a/latent.csv") == slurp(tmp / "fit_b/latent.csv"));
  CHECK(slurp(tmp / "fit_a/hyper.json") == slurp(tmp / "fit_b/hyper.json"));
  const auto man = nlohmann::json::parse(slurp(tmp / "fit_a/manifest.json"));
  CHECK(man["config_hash"] == config_hash(load_config(cfg)));
  CHECK(man["inputs"][0]["path"] == session);
  CHECK(man["seeds"]["root"] == 1);
  const auto rep = nlohmann::json::parse(slurp(tmp / "fit_a/report.json"));
  CHECK(rep["spikes"] == data.spike_count());
  const auto hyper = nlohmann::json::parse(slurp(tmp / "fit_a/hyper.json"));
  CHECK(hyper["hyper"].contains("space"));
  CHECK_FALSE(hyper["hyper"].contains("direction"));

  // the root seed is recorded
  r = cli({"--config", cfg, "--seed", "5", "fit", "--model", "m0", "--session", session, "--out",
           (tmp / "fit_c").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(nlohmann::json::parse(slurp(tmp / "fit_c/manifest.json"))["seeds"]["root"] == 5);

  r = cli({"--config", cfg, "crossval", "--session", session, "--models", "m0,mxt", "--tau", "60", "--J", "2000",
           "--out", (tmp / "cv").string()});
  REQUIRE(r.code == kExitOk);
  std::ifstream table(tmp / "cv/table.csv");
  std::string header;
  std::getline(table, header);
  CHECK(header.find("diff_ds") != std::string::npos);
  int lines = 0;
  for (std::string l; std::getline(table, l);) ++lines;
  CHECK(lines == 6);
  CHECK(fs::exists(tmp / "cv/intervals.csv"));
  CHECK(nlohmann::json::parse(slurp(tmp / "cv/fits.json")).size() == 4);

  r = cli({"--config", cfg, "crossval", "--session", session, "--models", "m0", "--tau", "60,100", "--J", "100",
           "--K", "50", "--out", (tmp / "cv1").string()});
  REQUIRE(r.code == kExitOk);
  std::ifstream one(tmp / "cv1/table.csv");
  std::getline(one, header);
  CHECK(header == "tau,fold,model,intervals,mean_se,mean_ds");
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(seconds < 600.0);
}

TEST_CASE("exit codes") {
  TempDir tmp;
  TruthSpec spec = parse_truth_spec(kTruth);
  spec.walk.duration = 120;
  save_session(simulate(spec).session, tmp / "s.csv");
  const std::string session = (tmp / "s.csv").string();

  write_text(tmp / "bad.json", R"({"meshes": {"foo": 1}})");
  Run r = cli({"--config", (tmp / "bad.json").string(), "fit", "--model", "m0", "--session", session, "--out",
               (tmp / "x").string()});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find("meshes.foo: unknown key") != std::string::npos);

  CHECK(cli({"fit", "--model", "m9", "--session", session, "--out", (tmp / "x").string()}).code == kExitValidation);
  CHECK(cli({"fit", "--model", "m0"}).code == kExitValidation);
  CHECK(cli({"fit", "--model", "m0", "--session", (tmp / "missing.csv").string(), "--out", (tmp / "x").string()})
            .code == kExitValidation);
  CHECK(cli({"crossval", "--session", session, "--models", "m0", "--tau", "500", "--out", (tmp / "x").string()})
            .code == kExitValidation);
  CHECK(cli({"--threads", "0", "check-variance"}).code == kExitValidation);

  write_text(tmp / "stiff.json", R"({"inference": {"newton_max_iterations": 1}})");
  r = cli({"--config", (tmp / "stiff.json").string(), "fit", "--model", "m0", "--session", session, "--out",
           (tmp / "x").string()});
  CHECK(r.code == kExitConvergence);
}
