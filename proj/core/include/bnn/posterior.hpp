#pragma once

#include <cstdint>
#include <string>

#include "bnn/nn.hpp"

namespace bnn {

// S retained weight draws (one per row) standing in for an approximate posterior.
struct PosteriorSamples {
  Matrix draws;
  std::string method;
  std::uint64_t seed = 0;
  std::string config_digest;
  bool truncated = false;

  Eigen::Index size() const { return draws.rows(); }
  Eigen::Index dim() const { return draws.cols(); }
};

void write_samples_csv(const PosteriorSamples& samples, const std::string& path);
PosteriorSamples read_samples_csv(const std::string& path);

}  // namespace bnn
