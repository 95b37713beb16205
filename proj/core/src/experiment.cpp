#include "bnn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <utility>

#include <fmt/format.h>
#include <json.hpp>

#include "bnn/errors.hpp"
#include "bnn/parallel.hpp"
#include "bnn/plotting.hpp"
#include "bnn/random.hpp"

namespace bnn {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed streams derived from a restart seed.
constexpr std::uint64_t kStreamValidation = 1;
constexpr std::uint64_t kStreamWeights = 2;
constexpr std::uint64_t kStreamTest = 10;
constexpr std::uint64_t kStreamGrid = 12;
constexpr std::uint64_t kStreamRaster = 14;
constexpr std::uint64_t kStreamInitChain = 1000;

struct Fitted {
  PosteriorSamples samples;
  std::optional<WeightVector> dropout_weights;
  std::optional<ChainStats> chain;
  std::optional<VITrainingLog> vi_log;
  std::optional<EnsembleResult> ensemble;
  double elbo = kNaN;
  bool truncated = false;
};

struct Context {
  const ExperimentConfig& cfg;
  const Dataset& data;
  MlpSpec spec;
  LikelihoodModel model;
  Batch train;
  RunControl control;
  std::optional<Vector> vi_init_mean;
};

PredictiveSamples predict(const Context& ctx, const Fitted& fit, const Matrix& x,
                          std::uint64_t seed, bool include_noise) {
  if (fit.dropout_weights) {
    return dropout_predictive_samples(*fit.dropout_weights, ctx.spec, ctx.model, x,
                                      ctx.cfg.dropout.mc_samples, ctx.cfg.dropout.dropout_rate,
                                      seed, include_noise);
  }
  return predictive_from_weights(fit.samples, ctx.spec, ctx.model, x, seed, include_noise);
}

Fitted from_chain(ChainResult chain) {
  Fitted f;
  f.truncated = chain.stats.truncated;
  f.samples = std::move(chain.samples);
  f.chain = std::move(chain.stats);
  return f;
}

Fitted fit_restart(const Context& ctx, std::uint64_t seed) {
  const ExperimentConfig& cfg = ctx.cfg;
  const Eigen::Index s = cfg.predictive_samples;
  switch (cfg.method) {
    case Method::hmc:
      return from_chain(hmc_run(ctx.model, ctx.spec, ctx.train, cfg.hmc, seed, ctx.control));
    case Method::sgld:
      return from_chain(sgld_run(ctx.model, ctx.spec, ctx.train, cfg.sgld, seed, ctx.control));
    case Method::sghmc:
      return from_chain(sghmc_run(ctx.model, ctx.spec, ctx.train, cfg.sghmc, seed, ctx.control));
    case Method::moment_gaussian: {
      Fitted f = from_chain(hmc_run(ctx.model, ctx.spec, ctx.train, cfg.hmc, seed, ctx.control));
      const MomentGaussian q = gaussian_moment_fit(f.samples);
      f.samples = sample_weights(q, s, derive_seed(seed, kStreamWeights));
      return f;
    }
    case Method::bbb: {
      VIConfig vi = cfg.vi;
      if (vi.init == ViInit::hmc_mean) vi.init_mean = ctx.vi_init_mean;
      BbbResult r = bbb_fit(ctx.model, ctx.spec, ctx.train, vi, seed);
      Fitted f;
      f.samples = sample_weights(r.q, s, derive_seed(seed, kStreamWeights));
      f.elbo = r.final_smoothed_elbo;
      f.vi_log = std::move(r.log);
      return f;
    }
    case Method::dropout: {
      MapFit m = dropout_fit(ctx.model, ctx.spec, ctx.train, cfg.dropout, seed);
      Fitted f;
      f.samples.draws = m.weights.transpose();
      f.dropout_weights = std::move(m.weights);
      return f;
    }
    case Method::ensemble: {
      EnsembleResult e = ensemble_fit(ctx.model, ctx.spec, ctx.train, cfg.ensemble, seed);
      Fitted f;
      f.samples = e.as_samples();
      f.ensemble = std::move(e);
      return f;
    }
  }
  throw std::logic_error("unhandled method");
}

std::optional<Vector> hmc_init_mean(const Context& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  if (cfg.method != Method::bbb || cfg.vi.init != ViInit::hmc_mean) return std::nullopt;
  if (cfg.vi.init_mean) return cfg.vi.init_mean;
  PosteriorSamples samples;
  if (!cfg.vi_hmc_samples.empty()) {
    samples = read_samples_csv(cfg.vi_hmc_samples);
  } else {
    samples = hmc_run(ctx.model, ctx.spec, ctx.train, cfg.hmc,
                      derive_seed(cfg.seed, kStreamInitChain), ctx.control)
                  .samples;
  }
  if (samples.size() == 0) throw std::runtime_error("no HMC samples for the hmc_mean init");
  if (samples.dim() != ctx.spec.param_count()) {
    throw DimensionError("HMC samples do not match the network size");
  }
  return Vector(samples.draws.colwise().mean().transpose());
}

void score(const Context& ctx, const Fitted& fit, std::uint64_t seed, RunArtifact& out) {
  const ExperimentConfig& cfg = ctx.cfg;
  MetricsReport& m = out.metrics;
  m.method = to_string(cfg.method);
  m.dataset = cfg.dataset;
  m.regression = ctx.data.kind == TaskKind::regression;
  m.intervals_include_noise = cfg.include_noise;

  const Batch test = ctx.data.subset(Split::test);
  const Vector y_test = test.y.col(0);
  const std::uint64_t test_seed = derive_seed(seed, kStreamTest);
  const PredictiveSamples clean = predict(ctx, fit, test.x, test_seed, false);
  m.predictive_draws = clean.draws();
  m.avg_loglik = avg_test_loglik(clean, y_test, ctx.model);

  if (m.regression) {
    m.rmse = rmse(clean, y_test);
    const PredictiveSamples noisy = predict(ctx, fit, test.x, test_seed, cfg.include_noise);
    if (noisy.draws() < kMinDrawsForIntervals) {
      m.warnings.push_back(fmt::format("interval from {} draws (< {})", noisy.draws(),
                                       kMinDrawsForIntervals));
    }
    const IntervalBand test_band = interval_band(noisy);
    m.picp = picp(test_band, y_test);
    m.mpiw = mpiw(test_band);

    const Dataset grid = evenly_spaced_grid(cfg.dataset, cfg.grid_points);
    const std::uint64_t grid_seed = derive_seed(seed, kStreamGrid);
    const PredictiveSamples grid_clean = predict(ctx, fit, grid.x, grid_seed, false);
    m.grid_loglik = avg_test_loglik(grid_clean, grid.y.col(0), ctx.model);
    const PredictiveSamples grid_noisy = predict(ctx, fit, grid.x, grid_seed, cfg.include_noise);
    out.grid_x = grid.x.col(0);
    out.band = interval_band(grid_noisy);
  } else {
    m.accuracy = accuracy(clean, y_test);
    m.auc = auc(clean, y_test);
    const Dataset raster = evenly_spaced_grid(cfg.dataset, cfg.raster_points);
    const PredictiveSamples probs =
        predict(ctx, fit, raster.x, derive_seed(seed, kStreamRaster), false);
    out.raster_x = raster.x;
    out.raster_mean = probs.values.colwise().mean().transpose();
    const Matrix centered = probs.values.rowwise() - out.raster_mean.transpose();
    const double denom = std::max<Eigen::Index>(probs.draws() - 1, 1);
    out.raster_std = (centered.array().square().colwise().sum() / denom).sqrt().transpose();
  }
  if (out.truncated) m.warnings.push_back("time limit reached; results are partial");
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

int select_best_restart(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("no restart scores");
  int best = -1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) continue;
    if (best < 0 || scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  if (best < 0) throw std::invalid_argument("no finite restart score");
  return best;
}

RunArtifact run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();

  RunArtifact out;
  out.config = cfg;
  out.data = generate_dataset(cfg.dataset, cfg.data_seed);

  Context ctx{cfg, out.data, default_network(cfg.dataset), out.data.likelihood(),
              out.data.subset(Split::train), {}, std::nullopt};
  if (cfg.time_limit_seconds > 0) ctx.control = RunControl::with_budget(cfg.time_limit_seconds);
  ctx.vi_init_mean = hmc_init_mean(ctx);

  const Batch val = out.data.subset(Split::val);
  const auto n = static_cast<std::size_t>(cfg.n_restarts);
  std::vector<std::optional<Fitted>> fits(n);
  out.restarts.resize(n);

  auto run_one = [&](std::size_t r) {
    RestartRecord& rec = out.restarts[r];
    rec.index = static_cast<int>(r);
    rec.seed = derive_seed(cfg.seed, r);
    rec.validation_loglik = kNaN;
    rec.elbo = kNaN;
    if (ctx.control.expired()) {
      rec.status = "skipped: time limit";
      return;
    }
    try {
      Fitted f = fit_restart(ctx, rec.seed);
      rec.elbo = f.elbo;
      if (val.size() > 0) {
        const PredictiveSamples pred =
            predict(ctx, f, val.x, derive_seed(rec.seed, kStreamValidation), false);
        rec.validation_loglik = avg_test_loglik(pred, val.y.col(0), ctx.model);
      }
      if (f.truncated) rec.status = "truncated";
      fits[r] = std::move(f);
    } catch (const std::exception& e) {
      rec.status = fmt::format("aborted: {}", e.what());
    }
  };
  // Sampler chains and ensembles already use every core.
  const bool parallel_restarts = cfg.method == Method::bbb || cfg.method == Method::dropout;
  parallel_for(n, run_one, parallel_restarts ? 0u : 1u);

  std::vector<double> scores(n, kNaN);
  for (std::size_t r = 0; r < n; ++r) {
    if (!fits[r]) continue;
    scores[r] = cfg.selection == SelectionCriterion::elbo ? out.restarts[r].elbo
                                                          : out.restarts[r].validation_loglik;
    // Without a validation split every completed restart ties.
    if (!std::isfinite(scores[r]) && val.size() == 0) scores[r] = 0.0;
  }
  if (std::none_of(fits.begin(), fits.end(), [](const auto& f) { return f.has_value(); })) {
    std::string reason = out.restarts.empty() ? "no restarts" : out.restarts.front().status;
    throw RunFailure(fmt::format("all {} restarts failed ({})", n, reason));
  }
  try {
    out.selected = select_best_restart(scores);
  } catch (const std::invalid_argument&) {
    throw RunFailure("no restart produced a finite selection score");
  }

  Fitted& best = *fits[static_cast<std::size_t>(out.selected)];
  const std::uint64_t best_seed = out.restarts[static_cast<std::size_t>(out.selected)].seed;
  out.truncated = best.truncated ||
                  std::any_of(out.restarts.begin(), out.restarts.end(), [](const RestartRecord& r) {
                    return r.status == "skipped: time limit";
                  });

  score(ctx, best, best_seed, out);

  out.samples = std::move(best.samples);
  out.samples.method = to_string(cfg.method);
  out.samples.seed = best_seed;
  out.samples.config_digest = cfg.digest();
  out.samples.truncated = out.truncated;
  out.chain = std::move(best.chain);
  out.vi_log = std::move(best.vi_log);
  out.ensemble = std::move(best.ensemble);
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

void emit_band_csv(const IntervalBand& band, const Vector& grid_x, const std::string& path) {
  const Eigen::Index n = grid_x.size();
  if (band.low.size() != n || band.high.size() != n || band.mean.size() != n) {
    throw DimensionError("band and grid sizes differ");
  }
  for (Eigen::Index i = 1; i < n; ++i) {
    if (grid_x(i) < grid_x(i - 1)) throw std::invalid_argument("band grid is not sorted");
  }
  std::string text = "x,mean,low,high\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    text += fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", grid_x(i), band.mean(i), band.low(i),
                        band.high(i));
  }
  write_text_file(path, text);
}

void emit_raster_csv(const Matrix& raster_x, const Vector& mean, const Vector& stddev,
                     const std::string& path) {
  if (raster_x.rows() != mean.size() || mean.size() != stddev.size() || raster_x.cols() != 2) {
    throw DimensionError("raster sizes differ");
  }
  std::string text = "x0,x1,mean,std\n";
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    text += fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", raster_x(i, 0), raster_x(i, 1),
                        mean(i), stddev(i));
  }
  write_text_file(path, text);
}

namespace {

struct Group {
  std::string dataset;
  std::string method;
  std::vector<std::vector<double>> runs;
};

std::vector<Group> group_reports(const std::vector<MetricsReport>& reports,
                                 std::vector<std::string>& names) {
  if (reports.empty()) throw std::invalid_argument("no reports to aggregate");
  names = reports.front().metric_names();
  const bool regression = reports.front().regression;
  std::vector<Group> groups;
  for (const MetricsReport& r : reports) {
    if (r.regression != regression) {
      throw std::invalid_argument("reports mix regression and classification runs");
    }
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.dataset == r.dataset && g.method == r.method;
    });
    if (it == groups.end()) {
      groups.push_back({r.dataset, r.method, {}});
      it = std::prev(groups.end());
    }
    it->runs.push_back(r.metric_values());
  }
  return groups;
}

std::pair<double, double> mean_sd(const std::vector<std::vector<double>>& runs, std::size_t k) {
  double sum = 0.0;
  for (const auto& run : runs) sum += run[k];
  const double mean = sum / static_cast<double>(runs.size());
  if (runs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (const auto& run : runs) ss += (run[k] - mean) * (run[k] - mean);
  return {mean, std::sqrt(ss / static_cast<double>(runs.size() - 1))};
}

}  // namespace

std::string format_report_table(const std::vector<MetricsReport>& reports) {
  std::vector<std::string> names;
  const std::vector<Group> groups = group_reports(reports, names);
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"metric"};
  for (const Group& g : groups) header.push_back(fmt::format("{}/{}", g.dataset, g.method));
  cells.push_back(header);
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::vector<std::string> row{names[k]};
    for (const Group& g : groups) {
      const auto [mean, sd] = mean_sd(g.runs, k);
      row.push_back(fmt::format("{:.2f} ± {:.2f}", mean, sd));
    }
    cells.push_back(row);
  }
  std::vector<std::string> runs_row{"runs"};
  for (const Group& g : groups) runs_row.push_back(std::to_string(g.runs.size()));
  cells.push_back(runs_row);

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      // "±" is two bytes but one column
      const std::size_t w = row[c].size() - (row[c].find("±") != std::string::npos ? 1 : 0);
      width[c] = std::max(width[c], w);
    }
  }
  std::string out = "# mean ± s.d. over repeated runs\n";
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::size_t w = row[c].size() - (row[c].find("±") != std::string::npos ? 1 : 0);
      out += row[c];
      if (c + 1 < row.size()) out += std::string(width[c] - w + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

void emit_report(const std::vector<MetricsReport>& reports, const std::string& path) {
  std::vector<std::string> names;
  const std::vector<Group> groups = group_reports(reports, names);
  std::string csv = "dataset,method,runs";
  for (const auto& name : names) csv += fmt::format(",{0}_mean,{0}_sd", name);
  csv += '\n';
  for (const Group& g : groups) {
    csv += fmt::format("{},{},{}", g.dataset, g.method, g.runs.size());
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto [mean, sd] = mean_sd(g.runs, k);
      csv += fmt::format(",{:.17g},{:.17g}", mean, sd);
    }
    csv += '\n';
  }
  write_text_file(path, csv);
  write_text_file(path + ".txt", format_report_table(reports));
}

void write_artifact(const RunArtifact& a, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path root(dir);
  auto at = [&](const char* name) { return (root / name).string(); };
  std::vector<std::string> files;
  auto note = [&](const char* name) { files.emplace_back(name); };

  save_dataset(a.data, at("dataset.csv"));
  note("dataset.csv");

  std::string restarts = "index,seed,validation_loglik,elbo,status\n";
  for (const RestartRecord& r : a.restarts) {
    restarts += fmt::format("{},{},{},{},{}\n", r.index, r.seed, format_double(r.validation_loglik),
                            format_double(r.elbo), r.status);
  }
  write_text_file(at("restarts.csv"), restarts);
  note("restarts.csv");

  write_samples_csv(a.samples, at("samples.csv"));
  note("samples.csv");
  if (a.ensemble) {
    save_ensemble(*a.ensemble, at("ensemble"));
    note("ensemble");
  }
  if (a.chain) {
    write_chain_csv(*a.chain, at("chain.csv"));
    note("chain.csv");
  }
  if (a.vi_log) {
    write_vi_log_csv(*a.vi_log, at("bbb_log.csv"));
    note("bbb_log.csv");
  }

  write_text_file(at("metrics.txt"), a.metrics.to_key_value());
  write_text_file(at("metrics.csv"), a.metrics.csv_header() + "\n" + a.metrics.csv_row() + "\n");
  note("metrics.txt");
  note("metrics.csv");

  const Batch train = a.data.subset(Split::train);
  PlotOptions opts;
  opts.title = fmt::format("{} {}", a.config.dataset, to_string(a.config.method));
  if (a.metrics.regression) {
    emit_band_csv(a.band, a.grid_x, at("band.csv"));
    write_text_file(at("plot.svg"), render_band_svg(a.band, a.grid_x, train, opts));
    note("band.csv");
  } else {
    emit_raster_csv(a.raster_x, a.raster_mean, a.raster_std, at("raster.csv"));
    const double lo = a.raster_x.rows() > 0 ? a.raster_x.minCoeff() : -6.0;
    const double hi = a.raster_x.rows() > 0 ? a.raster_x.maxCoeff() : 6.0;
    write_text_file(at("plot.svg"), render_heatmap_svg(a.raster_mean, a.config.raster_points, lo,
                                                       hi, train, opts));
    note("raster.csv");
  }
  note("plot.svg");

  nlohmann::ordered_json m;
  m["dataset"] = a.config.dataset;
  m["data_seed"] = a.config.data_seed;
  m["method"] = to_string(a.config.method);
  m["seed"] = a.config.seed;
  m["config_digest"] = a.config.digest();
  m["config"] = a.config.to_text();
  std::vector<std::uint64_t> seeds;
  for (const RestartRecord& r : a.restarts) seeds.push_back(r.seed);
  m["restart_seeds"] = seeds;
  m["selected_restart"] = a.selected;
  m["truncated"] = a.truncated;
  m["wall_seconds"] = a.wall_seconds;
  m["files"] = files;
  write_text_file(at("manifest.json"), m.dump(2) + "\n");
}

ExperimentConfig config_from_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error(fmt::format("cannot open {}", manifest_path));
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("{}: {}", manifest_path, e.what()), 0);
  }
  if (!m.contains("config") || !m["config"].is_string()) {
    throw ConfigError(fmt::format("{}: manifest has no config", manifest_path));
  }
  ExperimentConfig cfg = parse_config(m["config"].get<std::string>());
  if (m.contains("config_digest") && m["config_digest"].get<std::string>() != cfg.digest()) {
    throw ConfigError(fmt::format("{}: config digest mismatch", manifest_path));
  }
  return cfg;
}

namespace {

std::optional<std::string> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ReplayResult replay(const std::string& manifest_path, const std::string& out_dir) {
  const ExperimentConfig cfg = config_from_manifest(manifest_path);
  const RunArtifact a = run_experiment(cfg);
  write_artifact(a, out_dir);

  const fs::path original = fs::path(manifest_path).parent_path();
  ReplayResult result;
  for (const char* name : {"metrics.txt", "metrics.csv", "band.csv", "raster.csv"}) {
    const auto before = slurp(original / name);
    const auto after = slurp(fs::path(out_dir) / name);
    if (!before && !after) continue;
    if (!before || !after || *before != *after) {
      result.identical = false;
      result.mismatched_files.emplace_back(name);
    }
  }
  return result;
}

}  // namespace bnn
