#include "bnn/vi.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

#include "bnn/adam.hpp"
#include "bnn/errors.hpp"
#include "bnn/random.hpp"

namespace bnn {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("inverse_softplus: argument must be > 0");
  // log(e^y - 1) = y + log(1 - e^-y)
  return y + std::log(-std::expm1(-y));
}

MeanFieldGaussian MeanFieldGaussian::from_sigma(Vector mu, const Vector& sigma) {
  if (mu.size() != sigma.size()) throw DimensionError("mean-field mu and sigma lengths differ");
  MeanFieldGaussian q{std::move(mu), Vector(sigma.size())};
  for (Eigen::Index i = 0; i < sigma.size(); ++i) q.rho[i] = inverse_softplus(sigma[i]);
  return q;
}

Vector MeanFieldGaussian::sigma() const { return rho.unaryExpr([](double r) { return softplus(r); }); }

void MeanFieldGaussian::validate() const {
  if (mu.size() != rho.size()) throw DimensionError("mean-field mu and rho lengths differ");
  if (!mu.allFinite() || !rho.allFinite()) {
    throw std::invalid_argument("mean-field parameters must be finite");
  }
}

void VIConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("VI learning rate must be > 0");
  if (max_steps < 1 || mc_samples < 1 || patience < 1 || smoothing_window < 1) {
    throw std::invalid_argument("VI step counts must be positive");
  }
  if (init == ViInit::hmc_mean && !init_mean.has_value()) {
    throw std::invalid_argument("VI hmc_mean init needs an initial mean");
  }
  if (!(init_sigma > 0.0)) throw std::invalid_argument("VI init_sigma must be > 0");
}

double kl_diag_gaussian(const MeanFieldGaussian& q) {
  q.validate();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.dim(); ++i) {
    const double s = softplus(q.rho[i]);
    kl += 0.5 * (s * s + q.mu[i] * q.mu[i] - 1.0 - 2.0 * std::log(s));
  }
  return kl;
}

namespace {

ElboGradient elbo_with_rng(const MeanFieldGaussian& q, const LikelihoodModel& model,
                           const MlpSpec& spec, const Batch& data, int n_mc, Rng& rng,
                           bool want_gradient) {
  q.validate();
  if (n_mc < 1) throw std::invalid_argument("ELBO needs at least one Monte Carlo sample");
  if (q.dim() != spec.param_count()) throw DimensionError("q has the wrong dimension");

  const Vector sigma = q.sigma();
  const Eigen::Index p = q.dim();
  ElboGradient out;
  if (want_gradient) {
    out.d_mu = Vector::Zero(p);
    out.d_rho = Vector::Zero(p);
  }
  Vector xi(p);
  Vector w(p);
  double loglik_sum = 0.0;
  for (int s = 0; s < n_mc; ++s) {
    fill_standard_normal(xi, rng);
    if (data.size() == 0) continue;
    w = q.mu + sigma.cwiseProduct(xi);
    if (want_gradient) {
      auto vg = log_likelihood_value_and_gradient(model, spec, w, data.x, data.y);
      loglik_sum += vg.value;
      out.d_mu += vg.gradient;
      out.d_rho += vg.gradient.cwiseProduct(xi);
    } else {
      loglik_sum += log_likelihood(model, spec, w, data.x, data.y);
    }
  }
  const double inv = 1.0 / static_cast<double>(n_mc);
  out.terms.expected_loglik = loglik_sum * inv;
  out.terms.kl = kl_diag_gaussian(q);
  out.terms.elbo = out.terms.expected_loglik - out.terms.kl;
  if (want_gradient) {
    // d sigma / d rho = logistic(rho); dKL/dmu = mu; dKL/dsigma = sigma - 1/sigma.
    for (Eigen::Index i = 0; i < p; ++i) {
      const double dsigma = sigmoid(q.rho[i]);
      out.d_mu[i] = out.d_mu[i] * inv - q.mu[i];
      out.d_rho[i] = (out.d_rho[i] * inv) * dsigma - (sigma[i] - 1.0 / sigma[i]) * dsigma;
    }
  }
  return out;
}

}  // namespace

ElboTerms elbo_estimate(const MeanFieldGaussian& q, const LikelihoodModel& model,
                        const MlpSpec& spec, const Batch& data, int n_mc, std::uint64_t seed) {
  Rng rng(seed);
  return elbo_with_rng(q, model, spec, data, n_mc, rng, false).terms;
}

ElboGradient elbo_gradient(const MeanFieldGaussian& q, const LikelihoodModel& model,
                           const MlpSpec& spec, const Batch& data, int n_mc, std::uint64_t seed) {
  Rng rng(seed);
  return elbo_with_rng(q, model, spec, data, n_mc, rng, true);
}

void write_vi_log_csv(const VITrainingLog& log, const std::string& path) {
  auto out = fmt::output_file(path);
  out.print("step,elbo,kl,loglik,smoothed_elbo\n");
  for (std::size_t i = 0; i < log.elbo.size(); ++i) {
    out.print("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", i, log.elbo[i], log.kl[i], log.loglik[i],
              log.smoothed_elbo[i]);
  }
}

BbbResult bbb_fit(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
                  const VIConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  model.check_compatible(spec);
  const Eigen::Index p = spec.param_count();
  Rng rng(seed);

  BbbResult result;
  Vector mu;
  if (cfg.init == ViInit::hmc_mean) {
    if (cfg.init_mean->size() != p) throw DimensionError("VI initial mean has the wrong length");
    mu = *cfg.init_mean;
  } else {
    mu = cfg.init_mean_scale * standard_normal(p, rng);
  }
  result.q = MeanFieldGaussian{std::move(mu), Vector::Constant(p, inverse_softplus(cfg.init_sigma))};

  // mu and rho are optimized jointly as one stacked parameter vector.
  Vector params(2 * p);
  params << result.q.mu, result.q.rho;
  AdamState adam(2 * p, AdamConfig{cfg.learning_rate});
  ConvergenceMonitor monitor(cfg.smoothing_window, cfg.tolerance, cfg.patience, cfg.max_steps);
  Vector direction(2 * p);

  while (true) {
    ElboGradient g = elbo_with_rng(result.q, model, spec, train, cfg.mc_samples, rng, true);
    if (!std::isfinite(g.terms.elbo) || !g.d_mu.allFinite() || !g.d_rho.allFinite()) {
      throw DivergenceError(fmt::format("BBB: non-finite ELBO at step {} (last smoothed {:.6g})",
                                        result.steps, monitor.smoothed()));
    }
    const bool done = monitor.record(g.terms.elbo);
    result.log.elbo.push_back(g.terms.elbo);
    result.log.kl.push_back(g.terms.kl);
    result.log.loglik.push_back(g.terms.expected_loglik);
    result.log.smoothed_elbo.push_back(monitor.smoothed());
    ++result.steps;
    if (done) break;
    direction << g.d_mu, g.d_rho;
    adam.step(params, direction);
    result.q.mu = params.head(p);
    result.q.rho = params.tail(p);
  }
  result.final_smoothed_elbo = monitor.smoothed();
  return result;
}

PosteriorSamples sample_weights(const MeanFieldGaussian& q, Eigen::Index count, std::uint64_t seed) {
  q.validate();
  if (count < 1) throw std::invalid_argument("sample_weights: need at least one sample");
  Rng rng(seed);
  const Vector sigma = q.sigma();
  PosteriorSamples out;
  out.draws.resize(count, q.dim());
  Vector xi(q.dim());
  for (Eigen::Index s = 0; s < count; ++s) {
    fill_standard_normal(xi, rng);
    out.draws.row(s) = (q.mu + sigma.cwiseProduct(xi)).transpose();
  }
  out.method = "mean-field";
  out.seed = seed;
  return out;
}

PosteriorSamples sample_weights(const MomentGaussian& q, Eigen::Index count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample_weights: need at least one sample");
  Rng rng(seed);
  PosteriorSamples out;
  out.draws.resize(count, q.dim());
  Vector xi(q.factor.cols());
  for (Eigen::Index s = 0; s < count; ++s) {
    fill_standard_normal(xi, rng);
    out.draws.row(s) = (q.mean + q.factor * xi).transpose();
  }
  out.method = "moment-gaussian";
  out.seed = seed;
  return out;
}

MomentGaussian gaussian_moment_fit(const PosteriorSamples& samples) {
  const Eigen::Index s = samples.size();
  if (s < 2) throw std::invalid_argument("gaussian_moment_fit: need at least two samples");
  MomentGaussian g;
  g.mean = samples.draws.colwise().mean().transpose();
  const Matrix centered = samples.draws.rowwise() - g.mean.transpose();
  g.covariance = (centered.transpose() * centered) / static_cast<double>(s - 1);
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(g.covariance);
  if (eig.info() != Eigen::Success) throw std::runtime_error("gaussian_moment_fit: eigensolver failed");
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  g.factor = eig.eigenvectors() * root.asDiagonal();
  return g;
}

}  // namespace bnn
