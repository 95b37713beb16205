#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bnn/nn.hpp"
#include "bnn/posterior.hpp"

namespace bnn {

enum class PredictiveKind { regression_values, class_probabilities };

// S x N draws from the posterior predictive at N inputs (one row per draw).
// For classification `values` holds probabilities and `logits` the matching
// pre-sigmoid outputs so log-likelihoods stay finite for extreme logits.
struct PredictiveSamples {
  Matrix values;
  Matrix logits;
  PredictiveKind kind = PredictiveKind::regression_values;
  bool includes_observation_noise = false;

  Eigen::Index draws() const { return values.rows(); }
  Eigen::Index points() const { return values.cols(); }
};

PredictiveSamples predictive_from_weights(const PosteriorSamples& samples, const MlpSpec& spec,
                                          const LikelihoodModel& model, const Matrix& x,
                                          std::uint64_t seed, bool include_noise);

// Type-7 (linear interpolation) sample percentile, q in [0, 100].
double percentile(std::span<const double> values, double q);

struct IntervalBand {
  Vector low;   // 2.5th percentile
  Vector high;  // 97.5th percentile
  Vector mean;
};

IntervalBand interval_band(const PredictiveSamples& pred, double low_q = 2.5, double high_q = 97.5);

// Mean over inputs of log[(1/S) sum_s p(y_n | x_n, W_s)], via log-sum-exp.
// Expects noise-free predictive draws (function values or probabilities).
double avg_test_loglik(const PredictiveSamples& pred, const Vector& y, const LikelihoodModel& model);
double avg_test_loglik(const PosteriorSamples& samples, const MlpSpec& spec,
                       const LikelihoodModel& model, const Batch& test);

double rmse(const PredictiveSamples& pred, const Vector& y);
double picp(const IntervalBand& band, const Vector& y);
double picp(const PredictiveSamples& pred, const Vector& y);
double mpiw(const IntervalBand& band);
double mpiw(const PredictiveSamples& pred);
double accuracy(const PredictiveSamples& pred, const Vector& labels, double threshold = 0.5);

// Mann-Whitney AUC of the scores against 0/1 labels, ties counted half.
// Throws std::domain_error when only one class is present.
double auc(std::span<const double> scores, std::span<const double> labels);
double auc(const PredictiveSamples& pred, const Vector& labels);

// PICP/MPIW percentiles are only meaningful with enough draws.
inline constexpr Eigen::Index kMinDrawsForIntervals = 40;

struct MetricsReport {
  std::string method;
  std::string dataset;
  bool regression = true;

  std::optional<double> rmse;
  std::optional<double> avg_loglik;
  std::optional<double> picp;
  std::optional<double> mpiw;
  std::optional<double> grid_loglik;  // evenly spaced grid, regression only
  std::optional<double> accuracy;
  std::optional<double> auc;

  Eigen::Index predictive_draws = 0;
  bool intervals_include_noise = true;
  std::vector<std::string> warnings;

  // Flat `key = value` record; keys in a fixed order, values at 17 significant digits.
  std::string to_key_value() const;
  static MetricsReport from_key_value(const std::string& text);

  std::vector<std::string> metric_names() const;
  std::vector<double> metric_values() const;
  std::string csv_header() const;
  std::string csv_row() const;
};

}  // namespace bnn
