#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bnn/nn.hpp"
#include "bnn/posterior.hpp"

namespace bnn {

double softplus(double x);
double inverse_softplus(double y);

// Fully factorized Gaussian q(W) with sigma = softplus(rho).
struct MeanFieldGaussian {
  Vector mu;
  Vector rho;

  static MeanFieldGaussian from_sigma(Vector mu, const Vector& sigma);

  Vector sigma() const;
  Eigen::Index dim() const { return mu.size(); }
  void validate() const;
};

// Full-covariance Gaussian fitted to samples by moments.
struct MomentGaussian {
  Vector mean;
  Matrix covariance;  // unbiased, symmetric
  Matrix factor;      // F with F F^T = covariance with negative eigenvalues clamped to 0

  Eigen::Index dim() const { return mean.size(); }
};

enum class ViInit { standard, hmc_mean };

struct VIConfig {
  double learning_rate = 1e-3;
  int max_steps = 30'000;
  int mc_samples = 5;
  int patience = 500;
  double tolerance = 1e-3;
  int smoothing_window = 50;
  ViInit init = ViInit::standard;
  std::optional<Vector> init_mean;  // required for ViInit::hmc_mean
  double init_sigma = 0.05;
  double init_mean_scale = 0.1;

  void validate() const;
};

// Closed-form KL(q || N(0, I)).
double kl_diag_gaussian(const MeanFieldGaussian& q);

struct ElboTerms {
  double elbo = 0.0;
  double expected_loglik = 0.0;  // MC average of log p(D | w_s)
  double kl = 0.0;
};

struct ElboGradient {
  ElboTerms terms;
  Vector d_mu;
  Vector d_rho;
};

// Reparameterized estimate with w_s = mu + sigma * xi_s, xi_s ~ N(0, I) drawn from `seed`.
ElboTerms elbo_estimate(const MeanFieldGaussian& q, const LikelihoodModel& model,
                        const MlpSpec& spec, const Batch& data, int n_mc, std::uint64_t seed);

// Same draws as elbo_estimate for equal seeds, plus pathwise gradients.
ElboGradient elbo_gradient(const MeanFieldGaussian& q, const LikelihoodModel& model,
                           const MlpSpec& spec, const Batch& data, int n_mc, std::uint64_t seed);

struct VITrainingLog {
  std::vector<double> elbo;
  std::vector<double> kl;
  std::vector<double> loglik;
  std::vector<double> smoothed_elbo;
};

void write_vi_log_csv(const VITrainingLog& log, const std::string& path);

struct BbbResult {
  MeanFieldGaussian q;
  VITrainingLog log;
  double final_smoothed_elbo = 0.0;
  int steps = 0;
};

// Bayes by Backprop: Adam ascent of the reparameterized ELBO until the
// smoothed objective stops improving.
BbbResult bbb_fit(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
                  const VIConfig& cfg, std::uint64_t seed);

PosteriorSamples sample_weights(const MeanFieldGaussian& q, Eigen::Index count, std::uint64_t seed);
PosteriorSamples sample_weights(const MomentGaussian& q, Eigen::Index count, std::uint64_t seed);

// Empirical mean and unbiased covariance of the draws. Throws std::invalid_argument for S < 2.
MomentGaussian gaussian_moment_fit(const PosteriorSamples& samples);

}  // namespace bnn
