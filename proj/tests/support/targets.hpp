#pragma once

// Log-density stubs with known moments.

#include <cmath>

#include "bnn/samplers.hpp"

namespace targets {

// N(mean, diag(sd^2))
class DiagGaussian final : public bnn::LogDensity {
 public:
  DiagGaussian(bnn::Vector mean, bnn::Vector sd) : mean_(std::move(mean)), sd_(std::move(sd)) {}
  Eigen::Index dim() const override { return mean_.size(); }
  double log_density(const bnn::Vector& w) const override {
    return -0.5 * ((w - mean_).array() / sd_.array()).square().sum();
  }
  double value_and_gradient(const bnn::Vector& w, bnn::Vector& grad) const override {
    grad = -((w - mean_).array() / sd_.array().square()).matrix();
    return log_density(w);
  }

 private:
  bnn::Vector mean_;
  bnn::Vector sd_;
};

// Constant density: every HMC proposal is accepted.
class Flat final : public bnn::LogDensity {
 public:
  explicit Flat(Eigen::Index d) : d_(d) {}
  Eigen::Index dim() const override { return d_; }
  double log_density(const bnn::Vector&) const override { return 0.0; }
  double value_and_gradient(const bnn::Vector& w, bnn::Vector& grad) const override {
    grad = bnn::Vector::Zero(w.size());
    return 0.0;
  }

 private:
  Eigen::Index d_;
};

// Log density is -inf everywhere except the origin; every trajectory diverges.
class Cliff final : public bnn::LogDensity {
 public:
  Eigen::Index dim() const override { return 2; }
  double log_density(const bnn::Vector& w) const override {
    return w.isZero(0.0) ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  double value_and_gradient(const bnn::Vector& w, bnn::Vector& grad) const override {
    grad = bnn::Vector::Zero(2);
    return log_density(w);
  }
};

}  // namespace targets
