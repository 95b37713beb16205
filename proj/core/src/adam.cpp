#include "bnn/adam.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "bnn/errors.hpp"

namespace bnn {

AdamState::AdamState(Eigen::Index dim, AdamConfig config)
    : config_(config), m_(Vector::Zero(dim)), v_(Vector::Zero(dim)) {
  if (!(config.learning_rate > 0.0)) throw std::invalid_argument("Adam learning rate must be > 0");
}

void AdamState::step(Vector& params, const Vector& ascent_gradient) {
  if (params.size() != m_.size() || ascent_gradient.size() != m_.size()) {
    throw DimensionError("Adam: parameter and gradient lengths must match the state");
  }
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * ascent_gradient;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * ascent_gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  params.array() += config_.learning_rate * (m_.array() / c1) /
                    ((v_.array() / c2).sqrt() + config_.epsilon);
}

ConvergenceMonitor::ConvergenceMonitor(int window, double tolerance, int patience, int max_steps)
    : window_(window),
      tolerance_(tolerance),
      patience_(patience),
      max_steps_(max_steps),
      best_(-std::numeric_limits<double>::infinity()) {
  if (window < 1 || patience < 1 || max_steps < 1) {
    throw std::invalid_argument("ConvergenceMonitor: window, patience and max_steps must be >= 1");
  }
  recent_.reserve(static_cast<std::size_t>(window));
}

bool ConvergenceMonitor::record(double objective) {
  ++steps_;
  if (static_cast<int>(recent_.size()) < window_) {
    recent_.push_back(objective);
    running_sum_ += objective;
  } else {
    const auto slot = static_cast<std::size_t>(steps_ - 1) % recent_.size();
    running_sum_ += objective - recent_[slot];
    recent_[slot] = objective;
  }
  smoothed_ = running_sum_ / static_cast<double>(recent_.size());
  if (static_cast<int>(recent_.size()) == window_) {
    if (smoothed_ > best_ + tolerance_) {
      best_ = smoothed_;
      since_improvement_ = 0;
    } else {
      ++since_improvement_;
    }
  }
  return since_improvement_ >= patience_ || steps_ >= max_steps_;
}

}  // namespace bnn
