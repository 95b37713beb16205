#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace bnn {

using Rng = std::mt19937_64;

// Independent stream seed for (master seed, stream index). SplitMix64 finalizer.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng);
void fill_standard_normal(Eigen::Ref<Eigen::VectorXd> out, Rng& rng);

// Random permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

// Hands out fixed-size minibatches drawn without replacement; the index order
// is reshuffled whenever fewer than batch_size indices remain in the epoch.
class EpochBatcher {
 public:
  EpochBatcher(std::size_t n, std::size_t batch_size, Rng& rng);

  const std::vector<std::size_t>& next();
  std::size_t batch_size() const { return batch_.size(); }

 private:
  void reshuffle();

  Rng& rng_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> batch_;
  std::size_t cursor_ = 0;
};

}  // namespace bnn
