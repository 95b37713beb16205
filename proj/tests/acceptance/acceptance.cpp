// One PASS/FAIL line per acceptance criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "bnn/experiment.hpp"
#include "bnn/metrics.hpp"
#include "bnn/nn.hpp"
#include "bnn/random.hpp"
#include "bnn/samplers.hpp"
#include "bnn/vi.hpp"
#include "oracles.hpp"
#include "stats.hpp"
#include "targets.hpp"

using namespace bnn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [x]");
  }
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bnn_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool within(double got, double want, double tol) { return std::abs(got - want) <= tol; }

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) m.col(j) = standard_normal(rows, rng);
  return m;
}

Outcome gradient_correctness() {
  Outcome o;
  Rng rng(2024);
  std::uniform_int_distribution<int> width(1, 12), depth(0, 2), rows(1, 20);
  double worst = 0.0;
  int cases = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int c = 0; c < 100; ++c) {
    const bool cls = c % 2 == 1;
    std::vector<int> widths;
    if (c % 10 == 0) {
      widths = cls ? std::vector<int>{2, 10, 10, 1} : std::vector<int>{1, 50, 1};
    } else {
      widths.push_back(width(rng) % 3 + 1);
      for (int h = depth(rng); h >= 0; --h) widths.push_back(width(rng));
      widths.push_back(1);
    }
    const MlpSpec spec(widths);
    const auto model = cls ? LikelihoodModel::bernoulli() : LikelihoodModel::gaussian(0.1 + 0.05 * (c % 9));
    const Eigen::Index n = rows(rng);
    Batch data{normal_matrix(n, widths.front(), rng), Matrix(n, 1)};
    for (Eigen::Index i = 0; i < n; ++i) data.y(i, 0) = cls ? static_cast<double>(i % 2) : 2.0 * standard_normal(1, rng)(0);
    // keep pre-activations away from the ReLU kink so central differences are smooth
    WeightVector w;
    do {
      w = 0.8 * standard_normal(spec.param_count(), rng);
      const auto pre = oracle::naive_preactivations(widths, w, data.x);
      if (std::all_of(pre.begin(), pre.end(), [](double z) { return std::abs(z) > 1e-3; })) break;
    } while (true);
    const WeightVector g = grad_log_joint(model, spec, w, data);
    const WeightVector fd = oracle::central_difference(
        [&](const oracle::Vec& p) { return log_joint(model, spec, p, data); }, w);
    worst = std::max(worst, oracle::max_relative_error(g, fd));
    ++cases;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(cases == 100, fmt::format("{} cases", cases));
  o.require(worst < 1e-5, fmt::format("max rel err {:.2e} < 1e-5", worst));
  o.require(secs < 10.0, fmt::format("{:.1f} s < 10 s", secs));
  return o;
}

Outcome sampler_oracles() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  auto check = [&](const std::string& name, const Matrix& draws, const Vector& mean, const Matrix& cov, double tol) {
    const double z = stats::mean_z(draws, mean);
    const double rf = stats::relative_frobenius(stats::covariance(draws), cov);
    o.require(z < 3.0 && rf < tol, fmt::format("{} z={:.2f} cov={:.3f}", name, z, rf));
  };

  const targets::DiagGaussian gauss(Vector::Zero(2), Vector::Ones(2));
  const Matrix eye = Matrix::Identity(2, 2);
  {
    HmcConfig c;
    c.leapfrog_steps = 10;
    c.initial_step_size = 0.15;
    c.iterations = 21'000;
    c.burn_in = 1'000;
    c.thinning = 1;
    check("hmc/gauss", hmc_run(gauss, c, 101).samples.draws, Vector::Zero(2), eye, 0.10);
  }
  {
    SgldConfig c;
    c.step_size = 0.01;
    c.iterations = 420'000;
    c.burn_in = 20'000;
    c.thinning = 10;
    check("sgld/gauss", sgld_run(gauss, c, 102).samples.draws, Vector::Zero(2), eye, 0.15);
  }
  {
    SghmcConfig c;
    c.step_size = 0.01;
    c.leapfrog_steps = 20;
    c.iterations = 22'000;
    c.burn_in = 2'000;
    c.thinning = 1;
    check("sghmc/gauss", sghmc_run(gauss, c, 103).samples.draws, Vector::Zero(2), eye, 0.15);
  }

  // conjugate linear regression: 2 inputs, one linear output unit, N(0, I) prior, sigma = 1
  Rng rng(13);
  const Eigen::Index n = 20;
  Batch data{normal_matrix(n, 2, rng), Matrix(n, 1)};
  data.y.col(0) = 0.7 * data.x.col(0) - 0.4 * data.x.col(1) + Vector::Constant(n, 0.3) + standard_normal(n, rng);
  Matrix design(n, 3);
  design << data.x, Vector::Ones(n);
  const auto truth = oracle::linear_regression_posterior(design, data.y.col(0), 1.0);
  const BnnLogJoint linreg(LikelihoodModel::gaussian(1.0), MlpSpec({2, 1}), data);
  {
    HmcConfig c;
    c.leapfrog_steps = 10;
    c.initial_step_size = 0.05;
    c.iterations = 21'000;
    c.burn_in = 1'000;
    c.thinning = 1;
    check("hmc/linreg", hmc_run(linreg, c, 104).samples.draws, truth.mean, truth.cov, 0.10);
  }
  {
    SgldConfig c;
    c.step_size = 0.002;
    c.batch_size = 32;  // >= n: full batch
    c.iterations = 300'000;
    c.burn_in = 20'000;
    c.thinning = 20;
    check("sgld/linreg", sgld_run(linreg, c, 105).samples.draws, truth.mean, truth.cov, 0.15);
  }
  {
    SghmcConfig c;
    c.step_size = 0.01;
    c.leapfrog_steps = 20;
    c.batch_size = 32;
    c.iterations = 20'000;
    c.burn_in = 2'000;
    c.thinning = 1;
    check("sghmc/linreg", sghmc_run(linreg, c, 106).samples.draws, truth.mean, truth.cov, 0.15);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(secs < 120.0, fmt::format("{:.1f} s < 120 s", secs));
  return o;
}

Outcome retention() {
  Outcome o;
  const targets::Flat flat(2);
  HmcConfig h;
  h.leapfrog_steps = 1;
  const long nh = static_cast<long>(hmc_run(flat, h, 1).samples.size());
  o.require(h.iterations == 50'000 && h.burn_in == 40'000 && h.thinning == 20 && nh == 500,
            fmt::format("hmc 50K/40K/20 -> {}", nh));
  SghmcConfig sh;
  sh.leapfrog_steps = 1;
  const long nsh = static_cast<long>(sghmc_run(flat, sh, 1).samples.size());
  o.require(sh.iterations == 50'000 && sh.burn_in == 40'000 && sh.thinning == 20 && nsh == 500,
            fmt::format("sghmc 50K/40K/20 -> {}", nsh));
  SgldConfig sl;
  const long nsl = static_cast<long>(sgld_run(flat, sl, 1).samples.size());
  o.require(sl.iterations == 500'000 && sl.burn_in == 450'000 && sl.thinning == 100 && nsl == 500,
            fmt::format("sgld 500K/450K/100 -> {}", nsl));
  for (const char* p : {"reg1-hmc", "reg2-sghmc", "class1-sgld"}) {
    const ExperimentConfig c = preset_config(p);
    const long r = c.method == Method::sgld ? c.sgld.retained_count()
                   : c.method == Method::sghmc ? c.sghmc.retained_count()
                                               : c.hmc.retained_count();
    o.require(r == 500, fmt::format("{} -> {}", p, r));
  }
  return o;
}

RunArtifact run_preset(const std::string& name) {
  ExperimentConfig c = preset_config(name);
  return run_experiment(c);
}

Outcome reg_mismatched() {
  Outcome o;
  const RunArtifact a = run_preset("reg1-hmc");
  const MetricsReport& m = a.metrics;
  o.require(within(*m.picp, 1.00, 0.02), fmt::format("PICP {:.3f} (1.00 +- 0.02)", *m.picp));
  o.require(within(*m.grid_loglik, -0.42, 0.08), fmt::format("grid LL {:.3f} (-0.42 +- 0.08)", *m.grid_loglik));
  o.require(within(*m.mpiw, 3.09, 0.25 * 3.09), fmt::format("MPIW {:.3f} (3.09 +- 25%)", *m.mpiw));
  o.require(a.wall_seconds < 1800.0, fmt::format("{:.0f} s", a.wall_seconds));
  return o;
}

Outcome reg_matched() {
  Outcome o;
  const RunArtifact a = run_preset("reg2-hmc");
  const MetricsReport& m = a.metrics;
  o.require(within(*m.rmse, 0.85, 0.15), fmt::format("RMSE {:.3f} (0.85 +- 0.15)", *m.rmse));
  o.require(within(*m.picp, 0.86, 0.08), fmt::format("PICP {:.3f} (0.86 +- 0.08)", *m.picp));
  o.require(within(*m.mpiw, 1.79, 0.25 * 1.79), fmt::format("MPIW {:.3f} (1.79 +- 25%)", *m.mpiw));
  o.require(a.wall_seconds < 1800.0, fmt::format("{:.0f} s", a.wall_seconds));
  return o;
}

Outcome directional() {
  Outcome o;
  const double hmc = *run_preset("reg2-hmc").metrics.picp;
  const double bbb = *run_preset("reg2-bbb").metrics.picp;
  const double ens = *run_preset("reg2-ensemble").metrics.picp;
  o.require(bbb < hmc, fmt::format("BBB PICP {:.3f} < HMC PICP {:.3f}", bbb, hmc));
  o.require(std::abs(ens - hmc) <= 0.05, fmt::format("|Ensemble {:.3f} - HMC| <= 0.05", ens));
  return o;
}

Outcome class_matched() {
  Outcome o;
  const RunArtifact a = run_preset("class2-hmc");
  o.require(within(*a.metrics.accuracy, 0.83, 0.07), fmt::format("accuracy {:.3f} (0.83 +- 0.07)", *a.metrics.accuracy));
  o.require(within(*a.metrics.auc, 0.93, 0.05), fmt::format("AUC {:.3f} (0.93 +- 0.05)", *a.metrics.auc));
  return o;
}

PredictiveSamples regression_draws(Matrix v) {
  PredictiveSamples p;
  p.values = std::move(v);
  p.kind = PredictiveKind::regression_values;
  return p;
}

Outcome metrics_oracles() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 g(8);
  std::uniform_int_distribution<int> s_dist(1, 60), n_dist(2, 40), level(0, 12);
  std::normal_distribution<double> normal;
  int bad_interval = 0, bad_auc = 0, skipped_auc = 0;
  for (int c = 0; c < 1000; ++c) {
    const int s = s_dist(g), n = n_dist(g);
    Matrix v(s, n);
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < n; ++j) v(i, j) = std::round(normal(g) * 4.0) / 4.0;
    Vector y(n);
    for (int j = 0; j < n; ++j) y(j) = std::round(normal(g) * 4.0) / 4.0;
    double inside = 0.0, width = 0.0;
    for (int j = 0; j < n; ++j) {
      std::vector<double> col(v.col(j).data(), v.col(j).data() + s);
      const double lo = oracle::percentile7(col, 2.5), hi = oracle::percentile7(col, 97.5);
      if (y(j) >= lo && y(j) <= hi) inside += 1.0;
      width += hi - lo;
    }
    const PredictiveSamples p = regression_draws(v);
    if (picp(p, y) != inside / n || mpiw(p) != width / n) ++bad_interval;

    std::vector<double> score(static_cast<std::size_t>(n)), label(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      score[static_cast<std::size_t>(i)] = level(g) / 12.0;
      label[static_cast<std::size_t>(i)] = static_cast<double>(level(g) % 2);
    }
    if (std::count(label.begin(), label.end(), 1.0) % n == 0) {
      ++skipped_auc;
      label[0] = 1.0 - label[0];
    }
    if (auc(score, label) != oracle::pairwise_auc(score, label)) ++bad_auc;
  }
  o.require(bad_interval == 0, fmt::format("PICP/MPIW mismatches {}/1000", bad_interval));
  o.require(bad_auc == 0, fmt::format("AUC mismatches {}/1000", bad_auc));

  Rng rng(21);
  const auto model = LikelihoodModel::gaussian(0.7);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Matrix draws = normal_matrix(25, 15, rng);
    const Vector yt = standard_normal(15, rng);
    const double base = avg_test_loglik(regression_draws(draws), yt, model);
    Matrix dup(50, 15);
    dup << draws, draws;
    std::vector<Eigen::Index> perm(25);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix permuted(25, 15);
    for (Eigen::Index i = 0; i < 25; ++i) permuted.row(i) = draws.row(perm[static_cast<std::size_t>(i)]);
    worst = std::max({worst, std::abs(avg_test_loglik(regression_draws(dup), yt, model) - base),
                      std::abs(avg_test_loglik(regression_draws(permuted), yt, model) - base)});
  }
  o.require(worst < 1e-12, fmt::format("LL dup/perm drift {:.1e}", worst));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(secs < 30.0, fmt::format("{:.1f} s < 30 s", secs));
  return o;
}

Outcome calibrated() {
  Outcome o;
  Rng rng(31);
  const Eigen::Index n = 2000, s = 2000;
  const Vector mu = 3.0 * standard_normal(n, rng);
  const Vector sd = (0.5 * standard_normal(n, rng)).array().exp();
  const Vector y = mu.array() + sd.array() * standard_normal(n, rng).array();
  Matrix draws(s, n);
  for (Eigen::Index j = 0; j < n; ++j) draws.col(j) = mu(j) + sd(j) * standard_normal(s, rng).array();
  PredictiveSamples p = regression_draws(draws);
  p.includes_observation_noise = true;
  const double c = picp(p, y);
  o.require(within(c, 0.95, 0.02), fmt::format("PICP {:.4f} (0.95 +- 0.02)", c));
  return o;
}

Outcome vi_sanity() {
  Outcome o;
  VIConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.max_steps = 20'000;
  const BbbResult r = bbb_fit(LikelihoodModel::gaussian(0.5), MlpSpec({1, 50, 1}),
                              Batch{Matrix(0, 1), Matrix(0, 1)}, cfg, 3);
  const double mu_err = r.q.mu.cwiseAbs().maxCoeff();
  const double sd_err = (r.q.sigma().array() - 1.0).abs().maxCoeff();
  o.require(mu_err < 0.05 && sd_err < 0.05, fmt::format("|mu|inf {:.3f}, |sigma-1|inf {:.3f} < 0.05", mu_err, sd_err));

  Rng rng(4);
  const Eigen::Index p = 6;
  const MeanFieldGaussian q = MeanFieldGaussian::from_sigma(standard_normal(p, rng),
                                                            (0.3 * standard_normal(p, rng)).array().exp().matrix());
  const Vector sigma = q.sigma();
  std::normal_distribution<double> normal;
  const int n = 1'000'000;
  double sum = 0.0, sum_sq = 0.0;
  for (int s = 0; s < n; ++s) {
    double log_ratio = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
      const double w = q.mu(i) + sigma(i) * normal(rng);
      log_ratio += oracle::gaussian_logpdf(w, q.mu(i), sigma(i)) - oracle::gaussian_logpdf(w, 0.0, 1.0);
    }
    sum += log_ratio;
    sum_sq += log_ratio * log_ratio;
  }
  const double mc = sum / n;
  const double se = std::sqrt((sum_sq / n - mc * mc) / n);
  const double kl = kl_diag_gaussian(q);
  o.require(std::abs(mc - kl) < 3.0 * se, fmt::format("KL {:.5f} vs MC {:.5f} (3 se = {:.5f})", kl, mc, 3.0 * se));
  return o;
}

Outcome moment_probe() {
  Outcome o;
  Rng rng(41);
  const Eigen::Index p = 151, s = 5000;
  const Vector m = standard_normal(p, rng);
  const Matrix a = normal_matrix(p, p, rng);
  const Matrix cov = a * a.transpose() / static_cast<double>(p) + 0.1 * Matrix::Identity(p, p);
  const Matrix l = cov.llt().matrixL();
  PosteriorSamples draws;
  draws.draws = (l * normal_matrix(p, s, rng)).transpose().rowwise() + m.transpose();
  const MomentGaussian g = gaussian_moment_fit(draws);
  const double mean_err = (g.mean - m).norm() / m.norm();
  o.require(mean_err < 0.05, fmt::format("mean rel err {:.4f} < 0.05", mean_err));
  // entrywise error on the correlation scale: |C^_ij - C_ij| / sqrt(C_ii C_jj)
  const Vector sd = cov.diagonal().array().sqrt();
  const double cov_err = ((g.covariance - cov).array() / (sd * sd.transpose()).array()).abs().maxCoeff();
  const double frob = stats::relative_frobenius(g.covariance, cov);
  o.require(cov_err < 0.10, fmt::format("cov max scaled err {:.4f} < 0.10 (rel Frobenius {:.3f})", cov_err, frob));

  const fs::path dir = scratch("moment");
  const RunArtifact run = run_preset("reg1-moment-gaussian");
  write_artifact(run, dir.string());
  std::istringstream band(slurp(dir / "band.csv"));
  std::string header;
  std::getline(band, header);
  std::size_t rows = 0;
  bool ordered = true;
  for (std::string line; std::getline(band, line); ++rows) {
    double x, mean, lo, hi;
    char c;
    std::istringstream ls(line);
    ls >> x >> c >> mean >> c >> lo >> c >> hi;
    ordered = ordered && ls && lo <= hi;
  }
  o.require(header == "x,mean,low,high" && rows == run.config.grid_points && ordered,
            fmt::format("band.csv {} rows", rows));
  return o;
}

Outcome reproducibility() {
  Outcome o;
  std::vector<ExperimentConfig> configs;
  {
    ExperimentConfig c = preset_config("reg1-sgld");
    c.sgld.iterations = 60'000;
    c.sgld.burn_in = 50'000;
    configs.push_back(c);
  }
  {
    ExperimentConfig c = preset_config("reg2-bbb");
    c.n_restarts = 4;
    c.vi.max_steps = 3'000;
    configs.push_back(c);
  }
  {
    ExperimentConfig c = preset_config("class2-dropout");
    c.n_restarts = 3;
    c.dropout.training.max_steps = 2'000;
    configs.push_back(c);
  }
  {
    ExperimentConfig c = preset_config("reg1-ensemble");
    c.ensemble.n_members = 20;
    c.ensemble.training.max_steps = 2'000;
    configs.push_back(c);
  }
  for (const ExperimentConfig& c : configs) {
    const fs::path dir = scratch("replay_" + c.preset);
    write_artifact(run_experiment(c), (dir / "orig").string());
    const ReplayResult r = replay((dir / "orig" / "manifest.json").string(), (dir / "again").string());
    std::string files;
    for (const auto& f : r.mismatched_files) files += " " + f;
    o.require(r.identical, fmt::format("{} identical{}", c.preset, files));
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "criterion numbers to run")->check(CLI::Range(1, 12));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"sampler oracle suite", sampler_oracles},
      {"retention arithmetic", retention},
      {"mismatched regression pipeline (hmc)", reg_mismatched},
      {"matched regression pipeline (hmc)", reg_matched},
      {"bbb vs hmc vs ensemble coverage", directional},
      {"matched classification (hmc)", class_matched},
      {"metrics oracle equivalence", metrics_oracles},
      {"calibrated generator", calibrated},
      {"vi sanity", vi_sanity},
      {"moment-gaussian probe", moment_probe},
      {"replay reproducibility", reproducibility},
  };
  const std::set<int> chosen(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!chosen.empty() && !chosen.contains(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fmt::print("criterion {:2} {} {}: {} ({:.1f} s)\n", id, out.pass ? "PASS" : "FAIL", criteria[i].first,
               out.detail, secs);
    std::fflush(stdout);
    if (!out.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
