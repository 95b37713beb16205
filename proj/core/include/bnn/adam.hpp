#pragma once

#include <cstdint>

#include "bnn/nn.hpp"

namespace bnn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam that *maximizes* an objective: callers pass the ascent
// direction (the gradient of the quantity being increased).
class AdamState {
 public:
  AdamState(Eigen::Index dim, AdamConfig config);

  void step(Vector& params, const Vector& ascent_gradient);

  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }
  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  Vector m_;
  Vector v_;
  std::int64_t t_ = 0;
};

// Smoothed-objective stopping rule shared by every Adam-trained method:
// stop once the moving average over `window` steps has not improved by more
// than `tolerance` for `patience` consecutive steps, or at `max_steps`.
class ConvergenceMonitor {
 public:
  ConvergenceMonitor(int window, double tolerance, int patience, int max_steps);

  // Records one objective value (higher is better); returns true when training should stop.
  bool record(double objective);

  double smoothed() const { return smoothed_; }
  double best_smoothed() const { return best_; }
  int steps() const { return steps_; }

 private:
  int window_;
  double tolerance_;
  int patience_;
  int max_steps_;
  std::vector<double> recent_;
  double running_sum_ = 0.0;
  double smoothed_ = 0.0;
  double best_;
  int since_improvement_ = 0;
  int steps_ = 0;
};

}  // namespace bnn
