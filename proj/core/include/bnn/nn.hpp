#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace bnn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Flattened network parameters. Layer l contributes its (in x out) weight
// block in row-major order followed by its bias.
using WeightVector = Eigen::VectorXd;

// Dense ReLU network: ReLU on every hidden layer, identity on the output.
class MlpSpec {
 public:
  explicit MlpSpec(std::vector<int> layer_widths);

  const std::vector<int>& layer_widths() const { return widths_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  std::size_t num_layers() const { return widths_.size() - 1; }
  Eigen::Index param_count() const { return param_count_; }

  // Offset of layer l's weight block inside a WeightVector; the bias follows it.
  Eigen::Index weight_offset(std::size_t layer) const { return offsets_[layer]; }
  Eigen::Index bias_offset(std::size_t layer) const;

  friend bool operator==(const MlpSpec& a, const MlpSpec& b) { return a.widths_ == b.widths_; }

 private:
  std::vector<int> widths_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index param_count_ = 0;
};

struct LayerParams {
  Matrix weight;  // in x out
  Vector bias;    // out

  friend bool operator==(const LayerParams& a, const LayerParams& b) {
    return a.weight == b.weight && a.bias == b.bias;
  }
};

WeightVector flatten(const MlpSpec& spec, const std::vector<LayerParams>& layers);
std::vector<LayerParams> unflatten(const MlpSpec& spec, const WeightVector& w);

class LikelihoodModel {
 public:
  enum class Kind { gaussian_regression, bernoulli_classification };

  static LikelihoodModel gaussian(double noise_sigma);
  static LikelihoodModel bernoulli();

  Kind kind() const { return kind_; }
  bool is_regression() const { return kind_ == Kind::gaussian_regression; }
  double noise_sigma() const { return noise_sigma_; }
  double noise_variance() const { return noise_sigma_ * noise_sigma_; }

  // Throws DimensionError when the likelihood cannot sit on top of `spec`.
  void check_compatible(const MlpSpec& spec) const;

  // log p(y | f) for a single output unit.
  double point_log_density(double y, double f) const;
  // d/df log p(y | f).
  double point_score(double y, double f) const;

 private:
  LikelihoodModel(Kind kind, double sigma) : kind_(kind), noise_sigma_(sigma) {}

  Kind kind_;
  double noise_sigma_;
};

// Rows are data points. Classification labels are stored as 0.0 / 1.0.
struct Batch {
  Matrix x;
  Matrix y;

  Eigen::Index size() const { return x.rows(); }
  Batch rows(std::span<const std::size_t> idx) const;
};

// Per hidden layer multiplicative masks (N x width), applied after the ReLU.
using HiddenMasks = std::vector<Matrix>;

// Records a forward pass so the gradient of any scalar loss that depends on
// the network output can be pulled back onto the weights.
class GradTape {
 public:
  GradTape(const MlpSpec& spec, const WeightVector& w, const Matrix& x,
           const HiddenMasks* masks = nullptr);

  const Matrix& output() const { return activations_.back(); }

  // Gradient w.r.t. the weights of sum_{n,k} d_output(n,k) * output(n,k).
  // `masks` passed at construction must still be alive here.
  WeightVector backward(const Matrix& d_output) const;

 private:
  MlpSpec spec_;
  WeightVector w_;
  const HiddenMasks* masks_;
  std::vector<Matrix> activations_;  // [0] = x, then post-activation per layer
  std::vector<Matrix> preacts_;
};

Matrix forward(const MlpSpec& spec, const WeightVector& w, const Matrix& x);
Matrix forward(const MlpSpec& spec, const WeightVector& w, const Matrix& x,
               const HiddenMasks& masks);

double log_prior(const WeightVector& w);

double log_likelihood(const LikelihoodModel& model, const MlpSpec& spec, const WeightVector& w,
                      const Matrix& x, const Matrix& y);

// Log-likelihood of each data point (summed over output units).
Vector pointwise_log_likelihood(const LikelihoodModel& model, const MlpSpec& spec,
                                const WeightVector& w, const Matrix& x, const Matrix& y);

double log_joint(const LikelihoodModel& model, const MlpSpec& spec, const WeightVector& w,
                 const Batch& data);

struct ValueAndGradient {
  double value;
  WeightVector gradient;
};

// log p(W) + scale * sum_{i in B} log p(y_i | x_i, W) with scale = N/|B|.
// An absent minibatch means the full dataset (scale 1).
ValueAndGradient log_joint_value_and_gradient(
    const LikelihoodModel& model, const MlpSpec& spec, const WeightVector& w, const Batch& data,
    std::optional<std::span<const std::size_t>> minibatch = std::nullopt);

WeightVector grad_log_joint(const LikelihoodModel& model, const MlpSpec& spec,
                            const WeightVector& w, const Batch& data,
                            std::optional<std::span<const std::size_t>> minibatch = std::nullopt);

// Likelihood term only, with the same optional masks used for dropout training.
ValueAndGradient log_likelihood_value_and_gradient(const LikelihoodModel& model,
                                                   const MlpSpec& spec, const WeightVector& w,
                                                   const Matrix& x, const Matrix& y,
                                                   const HiddenMasks* masks = nullptr);

double log_sigmoid(double z);
double sigmoid(double z);

}  // namespace bnn
