#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "bnn/config.hpp"
#include "bnn/datasets.hpp"
#include "bnn/errors.hpp"
#include "bnn/experiment.hpp"
#include "bnn/plotting.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitConfigError = 2;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Rows of a numeric CSV with a header line.
std::vector<std::vector<double>> read_numeric_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

struct RunOptions {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<double> time_limit;
  std::string out = "run";
};

bnn::ExperimentConfig resolve_config(const RunOptions& o) {
  bnn::ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = bnn::load_config_file(o.config, o.preset);
  } else if (!o.preset.empty()) {
    cfg = bnn::preset_config(o.preset);
  } else {
    throw bnn::ConfigError("run needs --config or --preset");
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.time_limit) cfg.time_limit_seconds = *o.time_limit;
  cfg.validate();
  return cfg;
}

int cmd_run(const RunOptions& o) {
  const bnn::ExperimentConfig cfg = resolve_config(o);
  const bnn::RunArtifact a = bnn::run_experiment(cfg);
  bnn::write_artifact(a, o.out);
  fmt::print("{}", a.metrics.to_key_value());
  fmt::print("selected_restart = {}\ntruncated = {}\nartifacts = {}\n", a.selected, a.truncated,
             o.out);
  return kExitOk;
}

int cmd_gen_data(const std::string& dataset, std::uint64_t seed, const std::string& out) {
  if (!bnn::is_known_dataset(dataset)) {
    throw bnn::ConfigError(fmt::format("unknown dataset '{}'", dataset));
  }
  const bnn::Dataset d = bnn::generate_dataset(dataset, seed);
  bnn::save_dataset(d, out);
  fmt::print("wrote {} rows to {}\n", d.size(), out);
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out) {
  std::vector<bnn::MetricsReport> reports;
  for (const auto& run : runs) {
    fs::path p(run);
    if (fs::is_directory(p)) p /= "metrics.txt";
    reports.push_back(bnn::MetricsReport::from_key_value(read_file(p)));
  }
  bnn::emit_report(reports, out);
  fmt::print("{}", bnn::format_report_table(reports));
  return kExitOk;
}

int cmd_plot(const std::string& run, const std::string& out) {
  const fs::path dir(run);
  const bnn::Dataset data = bnn::load_dataset((dir / "dataset.csv").string());
  const bnn::Batch train = data.subset(bnn::Split::train);
  bnn::PlotOptions opts;
  opts.title = data.generator;
  std::string svg;
  if (fs::exists(dir / "band.csv")) {
    const auto rows = read_numeric_csv(dir / "band.csv");
    const auto n = static_cast<Eigen::Index>(rows.size());
    bnn::Vector x(n);
    bnn::IntervalBand band{bnn::Vector(n), bnn::Vector(n), bnn::Vector(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = rows[static_cast<std::size_t>(i)];
      if (r.size() != 4) throw bnn::ParseError("band.csv needs 4 columns", i + 2);
      x(i) = r[0];
      band.mean(i) = r[1];
      band.low(i) = r[2];
      band.high(i) = r[3];
    }
    svg = bnn::render_band_svg(band, x, train, opts);
  } else {
    const auto rows = read_numeric_csv(dir / "raster.csv");
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (side * side != rows.size() || side < 2) {
      throw bnn::ParseError("raster.csv is not a square grid", 0);
    }
    bnn::Vector mean(n);
    double lo = 0.0, hi = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = rows[static_cast<std::size_t>(i)];
      if (r.size() != 4) throw bnn::ParseError("raster.csv needs 4 columns", i + 2);
      mean(i) = r[2];
      lo = i == 0 ? r[0] : std::min({lo, r[0], r[1]});
      hi = i == 0 ? r[0] : std::max({hi, r[0], r[1]});
    }
    svg = bnn::render_heatmap_svg(mean, side, lo, hi, train, opts);
  }
  bnn::write_text_file(out, svg);
  fmt::print("wrote {}\n", out);
  return kExitOk;
}

int cmd_replay(const std::string& manifest, const std::string& out) {
  const bnn::ReplayResult r = bnn::replay(manifest, out);
  if (r.identical) {
    fmt::print("replay identical\n");
    return kExitOk;
  }
  for (const auto& f : r.mismatched_files) fmt::print(stderr, "differs: {}\n", f);
  return kExitRunFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian neural network benchmark runner"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "run one experiment and write its artifacts");
  run->add_option("--config", run_opts.config, "config file")->check(CLI::ExistingFile);
  run->add_option("--preset", run_opts.preset, "named preset, e.g. reg2-bbb");
  run->add_option("--seed", run_opts.seed, "master seed");
  run->add_option("--time-limit", run_opts.time_limit, "wall-time budget in seconds");
  run->add_option("--out", run_opts.out, "artifact directory");

  std::string dataset = "reg1";
  std::uint64_t data_seed = 1;
  std::string data_out = "dataset.csv";
  auto* gen = app.add_subcommand("gen-data", "generate a toy dataset");
  gen->add_option("--dataset", dataset, "reg1 | reg2 | class1 | class2");
  gen->add_option("--seed", data_seed, "data seed");
  gen->add_option("--out", data_out, "output CSV");

  std::vector<std::string> report_runs;
  std::string report_out = "report.csv";
  auto* report = app.add_subcommand("report", "aggregate runs into a methods x metrics table");
  report->add_option("runs", report_runs, "run directories or metrics.txt files")->required();
  report->add_option("--out", report_out, "output CSV (a .txt table is written alongside)");

  std::string plot_run;
  std::string plot_out = "plot.svg";
  auto* plot = app.add_subcommand("plot", "render a run's band or heat map as SVG");
  plot->add_option("run", plot_run, "run directory")->required()->check(CLI::ExistingDirectory);
  plot->add_option("--out", plot_out, "output SVG");

  std::string manifest;
  std::string replay_out = "replay";
  auto* replay = app.add_subcommand("replay", "re-run a manifest and compare outputs");
  replay->add_option("manifest", manifest, "manifest.json of a previous run")
      ->required()
      ->check(CLI::ExistingFile);
  replay->add_option("--out", replay_out, "directory for the replayed artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*gen) return cmd_gen_data(dataset, data_seed, data_out);
    if (*report) return cmd_report(report_runs, report_out);
    if (*plot) return cmd_plot(plot_run, plot_out);
    if (*replay) return cmd_replay(manifest, replay_out);
  } catch (const bnn::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfigError;
  } catch (const bnn::ParseError& e) {
    fmt::print(stderr, "parse error (line {}): {}\n", e.line(), e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "run failed: {}\n", e.what());
    return kExitRunFailure;
  }
  return kExitOk;
}
