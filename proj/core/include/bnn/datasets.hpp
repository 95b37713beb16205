#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bnn/nn.hpp"
#include "bnn/random.hpp"

namespace bnn {

enum class Split { train, val, test };
enum class TaskKind { regression, classification };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct Interval {
  double lo;
  double hi;
};

// One block of rows: `count` points of a split drawn from `region` (regression)
// or from the class-conditional Gaussians (classification).
struct SplitPart {
  Split split;
  std::size_t count;
  std::vector<Interval> region;   // regression inputs, uniform over the union
  bool observation_noise = true;  // regression: add eps to the targets
  bool truncated = false;         // classification: apply the per-class truncation
};

struct SplitSpec {
  std::vector<SplitPart> parts;

  std::size_t count(Split split) const;
};

SplitSpec reg_mismatched_splits();
SplitSpec reg_matched_splits();
SplitSpec class_mismatched_splits();
SplitSpec class_matched_splits();

struct Dataset {
  std::string generator;
  std::uint64_t seed = 0;
  TaskKind kind = TaskKind::regression;
  double noise_sigma = 0.0;  // regression only
  Matrix x;
  Matrix y;
  std::vector<Split> split;

  Eigen::Index size() const { return x.rows(); }
  std::size_t count(Split s) const;
  Batch subset(Split s) const;
  LikelihoodModel likelihood() const;

  friend bool operator==(const Dataset& a, const Dataset& b);
};

// Noise-free regression targets.
double reg_mismatched_mean(double x);  // 0.1 x^3
double reg_matched_mean(double x);     // -(1 + x) sin(1.2 x)

// Uniform draw from a union of intervals, choosing an interval with
// probability proportional to its length.
double sample_union_uniform(const std::vector<Interval>& region, Rng& rng);

// Rejection sampler for a 2D Gaussian N(mean, L L^T) restricted to `accept`.
// Throws std::runtime_error after `budget` rejected proposals.
Eigen::Vector2d sample_truncated_gaussian(const Eigen::Vector2d& mean, const Eigen::Matrix2d& chol,
                                          const std::function<bool(const Eigen::Vector2d&)>& accept,
                                          Rng& rng, std::size_t budget = 1'000'000);

Dataset gen_reg_mismatched(std::uint64_t seed, const SplitSpec& splits = reg_mismatched_splits());
Dataset gen_reg_matched(std::uint64_t seed, const SplitSpec& splits = reg_matched_splits());
Dataset gen_class_mismatched(std::uint64_t seed, const SplitSpec& splits = class_mismatched_splits());
Dataset gen_class_matched(std::uint64_t seed, const SplitSpec& splits = class_matched_splits());

// Dispatch on the short ids reg1, reg2, class1, class2.
Dataset generate_dataset(const std::string& id, std::uint64_t seed);
bool is_known_dataset(const std::string& id);
bool is_regression_dataset(const std::string& id);

// Network used for a task: 1-50-1 for regression, 2-10-10-1 for classification.
MlpSpec default_network(const std::string& id);

// Evenly spaced evaluation grid. Regression: `points` inputs across the test
// range with noise-free targets. Classification: a points x points raster over
// [-6, 6]^2 with zero labels (plotting only).
Dataset evenly_spaced_grid(const std::string& id, std::size_t points = 200);

// CSV with header x0[,x1],y,split and values at 17 significant digits, plus a
// one-line `<path>.manifest` sidecar holding generator id, seed, task and noise.
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace bnn
