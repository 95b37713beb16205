#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bnn/baselines.hpp"
#include "bnn/config.hpp"
#include "bnn/datasets.hpp"
#include "bnn/metrics.hpp"
#include "bnn/samplers.hpp"
#include "bnn/vi.hpp"

namespace bnn {

// Every restart of an experiment aborted.
class RunFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RestartRecord {
  int index = 0;
  std::uint64_t seed = 0;
  double validation_loglik = 0.0;
  double elbo = 0.0;  // final smoothed ELBO (bbb only, NaN otherwise)
  std::string status = "ok";
};

struct RunArtifact {
  ExperimentConfig config;
  Dataset data;
  std::vector<RestartRecord> restarts;
  int selected = -1;

  PosteriorSamples samples;  // selected restart; dropout stores its single weight vector
  std::optional<ChainStats> chain;
  std::optional<VITrainingLog> vi_log;
  std::optional<EnsembleResult> ensemble;

  MetricsReport metrics;
  Vector grid_x;             // regression band grid
  IntervalBand band;
  Matrix raster_x;           // classification raster inputs
  Vector raster_mean;
  Vector raster_std;

  bool truncated = false;
  double wall_seconds = 0.0;
};

// Index of the largest finite score; ties go to the lowest index.
// Throws std::invalid_argument for an empty list or when no score is finite.
int select_best_restart(std::span<const double> scores);

// Generates the data, runs every restart, selects one and scores it.
// Restarts that throw are recorded; RunFailure is thrown only if all abort.
RunArtifact run_experiment(const ExperimentConfig& cfg);

// Writes dataset, restarts, samples, diagnostics, metrics, band/raster,
// plot and manifest.json into `dir`.
void write_artifact(const RunArtifact& artifact, const std::string& dir);

// Columns x, mean, low, high; one row per grid point.
void emit_band_csv(const IntervalBand& band, const Vector& grid_x, const std::string& path);
void emit_raster_csv(const Matrix& raster_x, const Vector& mean, const Vector& stddev,
                     const std::string& path);

// Aggregates runs by (dataset, method) into mean and sample s.d. over repeated
// runs. Writes CSV to `path` and a metrics-by-method text table to `path`.txt.
// All reports must share one task type.
void emit_report(const std::vector<MetricsReport>& reports, const std::string& path);
std::string format_report_table(const std::vector<MetricsReport>& reports);

ExperimentConfig config_from_manifest(const std::string& manifest_path);

struct ReplayResult {
  bool identical = true;
  std::vector<std::string> mismatched_files;
};

// Re-runs the experiment recorded in `manifest_path` into `out_dir` and
// compares metrics and band/raster files byte for byte with the originals.
ReplayResult replay(const std::string& manifest_path, const std::string& out_dir);

}  // namespace bnn
