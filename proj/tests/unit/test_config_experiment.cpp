#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "bnn/config.hpp"
#include "bnn/errors.hpp"
#include "bnn/experiment.hpp"

using namespace bnn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bnn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig tiny_hmc() {
  ExperimentConfig c = preset_config("reg1-hmc");
  c.seed = 3;
  c.hmc.iterations = 300;
  c.hmc.burn_in = 100;
  c.hmc.thinning = 1;
  c.hmc.leapfrog_steps = 10;
  c.predictive_samples = 60;
  c.grid_points = 40;
  return c;
}

}  // namespace

TEST_CASE("presets") {
  const auto names = preset_names();
  CHECK(names.size() == 28);
  for (const auto& n : names) {
    const ExperimentConfig c = preset_config(n);
    CHECK_NOTHROW(c.validate());
    CHECK(c.preset == n);
  }
  CHECK(preset_config("reg2-bbb").n_restarts == 20);
  CHECK(preset_config("reg2-hmc").n_restarts == 1);
  CHECK(preset_config("reg1-dropout").dropout.dropout_rate == 0.005);
  CHECK(preset_config("reg2-dropout").dropout.dropout_rate == 0.01);
  CHECK(preset_config("reg1-bbb").vi.learning_rate == 0.001);
  CHECK_THROWS_AS(preset_config("reg9-hmc"), ConfigError);
  CHECK_THROWS_AS(preset_config("reg1-gibbs"), ConfigError);
}

TEST_CASE("stochastic-gradient presets stay finite") {
  CHECK(preset_config("reg1-sgld").sgld.step_size == doctest::Approx(2.0 * 0.001 / 80.0));
  CHECK(preset_config("class2-sgld").sgld.step_size == doctest::Approx(2.0 * 0.01 / 80.0));
  CHECK(preset_config("reg2-sghmc").sghmc.step_size == doctest::Approx(0.002 / std::sqrt(82.0)));
  CHECK(preset_config("reg2-sgld").sgld.step_size == doctest::Approx(2.0 * 0.001 / 82.0));
  for (const char* name : {"reg1-sgld", "reg2-sgld", "class1-sgld", "class2-sgld"}) {
    ExperimentConfig c = preset_config(name);
    c.sgld.iterations = 20'000;
    c.sgld.burn_in = 19'000;
    c.sgld.thinning = 10;
    c.predictive_samples = 50;
    const RunArtifact a = run_experiment(c);
    CHECK_MESSAGE(a.restarts[0].status == "ok", name);
  }
  for (const char* name : {"reg1-sghmc", "reg2-sghmc", "class1-sghmc", "class2-sghmc"}) {
    ExperimentConfig c = preset_config(name);
    c.sghmc.iterations = 1'000;
    c.sghmc.burn_in = 900;
    c.sghmc.thinning = 2;
    c.predictive_samples = 50;
    const RunArtifact a = run_experiment(c);
    CHECK_MESSAGE(a.restarts[0].status == "ok", name);
  }
}

TEST_CASE("config text round trip and digest") {
  ExperimentConfig c = preset_config("class2-sghmc");
  c.seed = 17;
  c.sghmc.friction = 0.3;
  const ExperimentConfig back = parse_config(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.digest() == c.digest());
  CHECK(c.digest().size() == 16);
  c.seed = 18;
  CHECK(back.digest() != c.digest());
}

TEST_CASE("config parsing") {
  SUBCASE("preset then overrides") {
    const ExperimentConfig c = parse_config("[experiment]\npreset = reg2-sgld\nseed = 9\n[sgld]\nstep_size = 0.02\n");
    CHECK(c.dataset == "reg2");
    CHECK(c.method == Method::sgld);
    CHECK(c.seed == 9);
    CHECK(c.sgld.step_size == 0.02);
  }
  SUBCASE("default preset yields to the text") {
    CHECK(parse_config("", "reg1-bbb").method == Method::bbb);
    CHECK(parse_config("[experiment]\npreset = class1-hmc\n", "reg1-bbb").dataset == "class1");
  }
  SUBCASE("syntax errors carry the line") {
    try {
      parse_config("[experiment]\nseed = 1\n[broken\n");
      FAIL("no throw");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("unknown keys and bad values") {
    CHECK_THROWS_AS(parse_config("[experiment]\nsede = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[nonsense]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\nmethod = gibbs\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[hmc]\nstep_size = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\nrestarts = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\nmethod = hmc\nselection = elbo\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\npreset = reg1-dropout\n[dropout]\ndropout_rate = 1.0\n"), ConfigError);
  }
}

TEST_CASE("restart selection") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(select_best_restart(std::vector<double>{-3, -1, -2}) == 1);
  CHECK(select_best_restart(std::vector<double>{-1, -1, -2}) == 0);
  CHECK(select_best_restart(std::vector<double>{nan, -5, nan}) == 1);
  CHECK(select_best_restart(std::vector<double>{-std::numeric_limits<double>::infinity(), -7}) == 1);
  CHECK_THROWS_AS(select_best_restart(std::vector<double>{nan, nan}), std::invalid_argument);
  CHECK_THROWS_AS(select_best_restart(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("band csv") {
  const fs::path dir = scratch("band");
  const Eigen::Index n = 200;
  const Vector x = Vector::LinSpaced(n, -1.0, 1.0);
  IntervalBand band{x.array() - 0.5, x.array() + 0.5, x};
  emit_band_csv(band, x, (dir / "band.csv").string());
  const auto rows = lines(slurp(dir / "band.csv"));
  REQUIRE(rows.size() == static_cast<std::size_t>(n) + 1);
  CHECK(rows[0] == "x,mean,low,high");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::count(rows[i].begin(), rows[i].end(), ',') == 3);
  }
  Vector unsorted = x;
  std::swap(unsorted(3), unsorted(4));
  CHECK_THROWS(emit_band_csv(band, unsorted, (dir / "bad.csv").string()));
  CHECK_THROWS(emit_band_csv(band, x.head(10), (dir / "bad.csv").string()));
}

TEST_CASE("report aggregation") {
  const fs::path dir = scratch("report");
  MetricsReport a;
  a.method = "hmc";
  a.dataset = "reg1";
  a.rmse = 0.1;
  a.avg_loglik = -1.0;
  a.picp = 0.9;
  a.mpiw = 2.0;
  a.grid_loglik = -0.5;
  MetricsReport b = a;
  b.rmse = 0.3;
  emit_report({a, b}, (dir / "r.csv").string());
  const auto rows = lines(slurp(dir / "r.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].find("rmse_mean") != std::string::npos);
  CHECK(rows[0].find("accuracy") == std::string::npos);
  CHECK(rows[1].rfind("reg1,hmc,2,", 0) == 0);
  CHECK(rows[1].find("0.20000000000000001,0.1414213562373095") != std::string::npos);
  CHECK(fs::exists(dir / "r.csv.txt"));

  MetricsReport c;
  c.method = "hmc";
  c.dataset = "class1";
  c.regression = false;
  c.accuracy = 1.0;
  c.avg_loglik = -0.1;
  c.auc = 1.0;
  CHECK_THROWS(emit_report({a, c}, (dir / "mixed.csv").string()));
}

TEST_CASE("small experiment writes, reloads and replays") {
  const fs::path dir = scratch("run");
  const ExperimentConfig cfg = tiny_hmc();
  const RunArtifact a = run_experiment(cfg);
  CHECK(a.selected == 0);
  CHECK(a.samples.draws.rows() > 0);
  REQUIRE(a.metrics.rmse);
  CHECK(std::isfinite(*a.metrics.rmse));
  CHECK(a.grid_x.size() == 40);
  CHECK(a.band.low.size() == 40);
  CHECK(!a.truncated);

  write_artifact(a, (dir / "orig").string());
  for (const char* f : {"dataset.csv", "restarts.csv", "samples.csv", "chain.csv", "metrics.txt",
                        "metrics.csv", "band.csv", "plot.svg", "manifest.json"}) {
    CHECK_MESSAGE(fs::exists(dir / "orig" / f), f);
  }
  const ExperimentConfig back = config_from_manifest((dir / "orig" / "manifest.json").string());
  CHECK(back.digest() == cfg.digest());

  const ReplayResult r = replay((dir / "orig" / "manifest.json").string(), (dir / "again").string());
  CHECK(r.identical);
  CHECK(r.mismatched_files.empty());
  CHECK(slurp(dir / "orig" / "band.csv") == slurp(dir / "again" / "band.csv"));

  SUBCASE("tampered output is detected") {
    std::ofstream(dir / "orig" / "metrics.txt", std::ios::app) << "# edit\n";
    const ReplayResult t = replay((dir / "orig" / "manifest.json").string(), (dir / "third").string());
    CHECK_FALSE(t.identical);
    CHECK(t.mismatched_files == std::vector<std::string>{"metrics.txt"});
  }
}

TEST_CASE("time limit marks the run truncated") {
  ExperimentConfig cfg = tiny_hmc();
  cfg.hmc.iterations = 200000;
  cfg.hmc.burn_in = 100;
  cfg.time_limit_seconds = 0.5;
  const RunArtifact a = run_experiment(cfg);
  CHECK(a.truncated);
  CHECK(a.samples.draws.rows() > 0);
}
