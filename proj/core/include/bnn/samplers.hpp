#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bnn/nn.hpp"
#include "bnn/posterior.hpp"

namespace bnn {

// Differentiable unnormalized log density over R^dim. Targets backed by data
// may also provide unbiased minibatch gradients for the stochastic-gradient
// samplers; the default falls back to the full gradient.
class LogDensity {
 public:
  virtual ~LogDensity() = default;

  virtual Eigen::Index dim() const = 0;
  virtual std::size_t data_size() const { return 0; }
  virtual double log_density(const Vector& w) const = 0;
  virtual double value_and_gradient(const Vector& w, Vector& grad) const = 0;
  virtual void stochastic_gradient(const Vector& w, std::span<const std::size_t> batch,
                                   Vector& grad) const;
};

// log p(D, W) of a Bayesian MLP on a fixed training set.
class BnnLogJoint final : public LogDensity {
 public:
  BnnLogJoint(LikelihoodModel model, MlpSpec spec, Batch data);

  Eigen::Index dim() const override { return spec_.param_count(); }
  std::size_t data_size() const override { return static_cast<std::size_t>(data_.size()); }
  double log_density(const Vector& w) const override;
  double value_and_gradient(const Vector& w, Vector& grad) const override;
  void stochastic_gradient(const Vector& w, std::span<const std::size_t> batch,
                           Vector& grad) const override;

  const MlpSpec& spec() const { return spec_; }
  const LikelihoodModel& model() const { return model_; }
  const Batch& data() const { return data_; }

 private:
  LikelihoodModel model_;
  MlpSpec spec_;
  Batch data_;
};

// Optional wall-clock budget. Samplers that run past the deadline stop early
// and mark their output as truncated.
struct RunControl {
  std::optional<std::chrono::steady_clock::time_point> deadline;

  static RunControl with_budget(double seconds);
  bool expired() const;
};

struct HmcConfig {
  int leapfrog_steps = 100;
  double initial_step_size = 2e-3;
  long iterations = 50'000;
  long burn_in = 40'000;
  long thinning = 20;
  int adaptation_window = 100;
  double adapt_high = 0.8;
  double adapt_low = 0.2;
  double step_up = 1.1;
  double step_down = 0.9;
  double init_scale = 0.1;             // initial position ~ N(0, init_scale^2 I)
  std::optional<Vector> initial_position;
  std::vector<Eigen::Index> trace_coordinates{0, 1, 2, 3};
  int max_consecutive_divergences = 1000;

  void validate() const;
  long retained_count() const { return (iterations - burn_in) / thinning; }
};

struct SgldConfig {
  double step_size = 1e-3;
  long iterations = 500'000;
  long burn_in = 450'000;
  long thinning = 100;
  std::size_t batch_size = 32;
  double init_scale = 0.1;
  std::optional<Vector> initial_position;
  std::vector<Eigen::Index> trace_coordinates{0, 1, 2, 3};

  void validate() const;
  long retained_count() const { return (iterations - burn_in) / thinning; }
};

struct SghmcConfig {
  double step_size = 2e-3;
  int leapfrog_steps = 100;
  double friction = 10.0;        // C = friction * I
  double noise_estimate = 0.0;   // B-hat
  long iterations = 50'000;
  long burn_in = 40'000;
  long thinning = 20;
  std::size_t batch_size = 32;
  double init_scale = 0.1;
  std::optional<Vector> initial_position;
  std::vector<Eigen::Index> trace_coordinates{0, 1, 2, 3};

  void validate() const;
  long retained_count() const { return (iterations - burn_in) / thinning; }
};

struct ChainStats {
  // One entry per adaptation window (HMC) / per `thinning` iterations (SG methods).
  std::vector<double> window_acceptance;
  std::vector<double> step_size_history;

  // Trace rows, recorded every `thinning` iterations over the whole run.
  std::vector<long> trace_iteration;
  std::vector<double> trace_log_joint;
  std::vector<double> trace_acceptance;
  std::vector<double> trace_step_size;
  std::vector<Eigen::Index> trace_coordinate_ids;
  std::vector<std::vector<double>> trace_coordinates;  // [row][coordinate]

  long divergent_transitions = 0;
  double final_step_size = 0.0;
  bool truncated = false;
};

struct ChainResult {
  PosteriorSamples samples;
  ChainStats stats;
};

struct LeapfrogState {
  Vector position;
  Vector momentum;
  Vector gradient;       // gradient of the log density at `position`
  double log_density = 0.0;
  bool finite = true;    // false signals a divergent trajectory
};

// L leapfrog steps of size eps with identity mass matrix, ascending the log density.
LeapfrogState leapfrog(const Vector& position, const Vector& momentum, double step_size,
                       int steps, const LogDensity& target);

ChainResult hmc_run(const LogDensity& target, const HmcConfig& cfg, std::uint64_t seed,
                    const RunControl& control = {});
ChainResult sgld_run(const LogDensity& target, const SgldConfig& cfg, std::uint64_t seed,
                     const RunControl& control = {});
ChainResult sghmc_run(const LogDensity& target, const SghmcConfig& cfg, std::uint64_t seed,
                      const RunControl& control = {});

// Convenience overloads sampling the BNN posterior given a training batch.
ChainResult hmc_run(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
                    const HmcConfig& cfg, std::uint64_t seed, const RunControl& control = {});
ChainResult sgld_run(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
                     const SgldConfig& cfg, std::uint64_t seed, const RunControl& control = {});
ChainResult sghmc_run(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
                      const SghmcConfig& cfg, std::uint64_t seed, const RunControl& control = {});

void write_chain_csv(const ChainStats& stats, const std::string& path);

}  // namespace bnn
