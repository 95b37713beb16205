#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnn/metrics.hpp"
#include "bnn/nn.hpp"
#include "bnn/posterior.hpp"

namespace bnn {

// Reference variance v of the MAP penalty: the noise variance for regression,
// 1 for classification. With lambda = v the MAP objective is exactly
// -log p(D, W) up to a constant.
double penalty_reference(const LikelihoodModel& model);

// -log p(D | W) + lambda / (2 v) * ||W||^2  (to be minimized).
double map_objective(const LikelihoodModel& model, const MlpSpec& spec, const WeightVector& w,
                     const Batch& data, double lambda);

// Value and gradient (descent sense) of map_objective; optional dropout masks.
ValueAndGradient map_objective_value_and_gradient(const LikelihoodModel& model,
                                                  const MlpSpec& spec, const WeightVector& w,
                                                  const Batch& data, double lambda,
                                                  const HiddenMasks* masks = nullptr);

struct MapTrainingConfig {
  double learning_rate = 0.01;
  double lambda = 1.0;
  int max_steps = 20'000;
  int patience = 500;
  double tolerance = 1e-4;
  int smoothing_window = 50;
  double init_scale = 1.0;  // initial weights ~ N(0, init_scale^2 I)
};

struct DropoutConfig {
  double dropout_rate = 0.01;  // probability a hidden unit is dropped
  MapTrainingConfig training;
  Eigen::Index mc_samples = 500;

  void validate() const;
};

struct EnsembleConfig {
  int n_members = 500;
  MapTrainingConfig training;
  unsigned workers = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct MapFit {
  WeightVector weights;
  double final_loss = 0.0;  // smoothed objective at the last step
  int steps = 0;
};

// Adam on the MAP objective from a random start; the building block of both
// baselines. `dropout_rate` of 0 trains a plain MAP network.
MapFit map_fit(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
               const MapTrainingConfig& cfg, double dropout_rate, std::uint64_t seed);

MapFit dropout_fit(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
                   const DropoutConfig& cfg, std::uint64_t seed);

// S stochastic forward passes with independent inverted-dropout masks on the
// hidden units. Regression draws can include observation noise.
PredictiveSamples dropout_predictive_samples(const WeightVector& w, const MlpSpec& spec,
                                             const LikelihoodModel& model, const Matrix& x,
                                             Eigen::Index draws, double dropout_rate,
                                             std::uint64_t seed, bool include_noise);

struct MemberRecord {
  int index = 0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  bool resampled = false;
};

struct EnsembleResult {
  std::vector<WeightVector> members;
  std::vector<MemberRecord> records;

  PosteriorSamples as_samples() const;
};

// Member i trains from seed derive_seed(master_seed, i). A member that
// diverges is retried once with a fresh seed.
EnsembleResult ensemble_fit(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
                            const EnsembleConfig& cfg, std::uint64_t master_seed);

// `<dir>/members.csv` (one weight vector per row) and `<dir>/members_manifest.csv`.
void save_ensemble(const EnsembleResult& ensemble, const std::string& dir);
EnsembleResult load_ensemble(const std::string& dir);

}  // namespace bnn
