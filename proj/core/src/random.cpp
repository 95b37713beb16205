#include "bnn/random.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace bnn {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd out(n);
  fill_standard_normal(out, rng);
  return out;
}

void fill_standard_normal(Eigen::Ref<Eigen::VectorXd> out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = normal(rng);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

EpochBatcher::EpochBatcher(std::size_t n, std::size_t batch_size, Rng& rng)
    : rng_(rng), order_(n), batch_(std::min(batch_size, n)) {
  if (n == 0 || batch_size == 0) {
    throw std::invalid_argument("EpochBatcher: empty data or zero batch size");
  }
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void EpochBatcher::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

const std::vector<std::size_t>& EpochBatcher::next() {
  if (cursor_ + batch_.size() > order_.size()) reshuffle();
  std::copy_n(order_.begin() + static_cast<std::ptrdiff_t>(cursor_), batch_.size(), batch_.begin());
  cursor_ += batch_.size();
  return batch_;
}

}  // namespace bnn
