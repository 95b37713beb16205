#include "bnn/nn.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bnn/errors.hpp"

namespace bnn {

namespace {

using ConstLayerMap = Eigen::Map<const RowMajorMatrix>;

ConstLayerMap weight_block(const MlpSpec& spec, const WeightVector& w, std::size_t layer) {
  const auto& widths = spec.layer_widths();
  return ConstLayerMap(w.data() + spec.weight_offset(layer), widths[layer], widths[layer + 1]);
}

auto bias_block(const MlpSpec& spec, const WeightVector& w, std::size_t layer) {
  return w.segment(spec.bias_offset(layer), spec.layer_widths()[layer + 1]);
}

void check_weights(const MlpSpec& spec, const WeightVector& w) {
  if (w.size() != spec.param_count()) {
    throw DimensionError("weight vector has length " + std::to_string(w.size()) +
                         ", network expects " + std::to_string(spec.param_count()));
  }
}

void check_inputs(const MlpSpec& spec, const Matrix& x) {
  if (x.cols() != spec.input_dim()) {
    throw DimensionError("input has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(spec.input_dim()));
  }
}

void check_targets(const MlpSpec& spec, const Matrix& x, const Matrix& y) {
  if (y.rows() != x.rows() || y.cols() != spec.output_dim()) {
    throw DimensionError("targets are " + std::to_string(y.rows()) + "x" +
                         std::to_string(y.cols()) + ", expected " + std::to_string(x.rows()) +
                         "x" + std::to_string(spec.output_dim()));
  }
}

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

MlpSpec::MlpSpec(std::vector<int> layer_widths) : widths_(std::move(layer_widths)) {
  if (widths_.size() < 2) throw DimensionError("MlpSpec needs at least input and output widths");
  for (int width : widths_) {
    if (width <= 0) throw DimensionError("MlpSpec layer widths must be positive");
  }
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(param_count_);
    param_count_ += static_cast<Eigen::Index>(widths_[l]) * widths_[l + 1] + widths_[l + 1];
  }
}

Eigen::Index MlpSpec::bias_offset(std::size_t layer) const {
  return offsets_[layer] + static_cast<Eigen::Index>(widths_[layer]) * widths_[layer + 1];
}

WeightVector flatten(const MlpSpec& spec, const std::vector<LayerParams>& layers) {
  if (layers.size() != spec.num_layers()) throw DimensionError("flatten: wrong number of layers");
  WeightVector w(spec.param_count());
  const auto& widths = spec.layer_widths();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weight.rows() != widths[l] || layer.weight.cols() != widths[l + 1] ||
        layer.bias.size() != widths[l + 1]) {
      throw DimensionError("flatten: layer " + std::to_string(l) + " has the wrong shape");
    }
    Eigen::Map<RowMajorMatrix>(w.data() + spec.weight_offset(l), widths[l], widths[l + 1]) =
        layer.weight;
    w.segment(spec.bias_offset(l), widths[l + 1]) = layer.bias;
  }
  return w;
}

std::vector<LayerParams> unflatten(const MlpSpec& spec, const WeightVector& w) {
  check_weights(spec, w);
  std::vector<LayerParams> layers;
  layers.reserve(spec.num_layers());
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    layers.push_back({Matrix(weight_block(spec, w, l)), Vector(bias_block(spec, w, l))});
  }
  return layers;
}

LikelihoodModel LikelihoodModel::gaussian(double noise_sigma) {
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) {
    throw std::invalid_argument("noise_sigma must be a positive finite number");
  }
  return LikelihoodModel(Kind::gaussian_regression, noise_sigma);
}

LikelihoodModel LikelihoodModel::bernoulli() {
  return LikelihoodModel(Kind::bernoulli_classification, 0.0);
}

void LikelihoodModel::check_compatible(const MlpSpec& spec) const {
  if (kind_ == Kind::bernoulli_classification && spec.output_dim() != 1) {
    throw DimensionError("Bernoulli classification needs a single logit output");
  }
}

double log_sigmoid(double z) {
  // log(1 / (1 + e^-z)) = -log1p(e^-z), evaluated without overflow on either side.
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double LikelihoodModel::point_log_density(double y, double f) const {
  if (kind_ == Kind::gaussian_regression) {
    const double r = (y - f) / noise_sigma_;
    return -0.5 * (kLog2Pi + 2.0 * std::log(noise_sigma_) + r * r);
  }
  return y > 0.5 ? log_sigmoid(f) : log_sigmoid(-f);
}

double LikelihoodModel::point_score(double y, double f) const {
  if (kind_ == Kind::gaussian_regression) return (y - f) / noise_variance();
  return y - sigmoid(f);
}

Batch Batch::rows(std::span<const std::size_t> idx) const {
  Batch out{Matrix(static_cast<Eigen::Index>(idx.size()), x.cols()),
            Matrix(static_cast<Eigen::Index>(idx.size()), y.cols())};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(idx[i]);
    if (r >= x.rows()) throw DimensionError("minibatch index out of range");
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(r);
    out.y.row(static_cast<Eigen::Index>(i)) = y.row(r);
  }
  return out;
}

GradTape::GradTape(const MlpSpec& spec, const WeightVector& w, const Matrix& x,
                   const HiddenMasks* masks)
    : spec_(spec), w_(w), masks_(masks) {
  check_weights(spec, w);
  check_inputs(spec, x);
  const std::size_t layers = spec.num_layers();
  if (masks != nullptr && masks->size() != layers - 1) {
    throw DimensionError("need one dropout mask per hidden layer");
  }
  activations_.reserve(layers + 1);
  preacts_.reserve(layers);
  activations_.push_back(x);
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = activations_.back() * weight_block(spec, w, l);
    z.rowwise() += bias_block(spec, w, l).transpose();
    if (l + 1 == layers) {
      preacts_.push_back(Matrix());
      activations_.push_back(std::move(z));
      break;
    }
    Matrix a = z.cwiseMax(0.0);
    if (masks != nullptr) {
      const Matrix& m = (*masks)[l];
      if (m.rows() != a.rows() || m.cols() != a.cols()) {
        throw DimensionError("dropout mask shape does not match hidden layer");
      }
      a.array() *= m.array();
    }
    preacts_.push_back(std::move(z));
    activations_.push_back(std::move(a));
  }
}

WeightVector GradTape::backward(const Matrix& d_output) const {
  const std::size_t layers = spec_.num_layers();
  const auto& widths = spec_.layer_widths();
  if (d_output.rows() != output().rows() || d_output.cols() != output().cols()) {
    throw DimensionError("output gradient shape does not match network output");
  }
  WeightVector grad(spec_.param_count());
  Matrix delta = d_output;
  for (std::size_t l = layers; l-- > 0;) {
    Eigen::Map<RowMajorMatrix>(grad.data() + spec_.weight_offset(l), widths[l], widths[l + 1])
        .noalias() = activations_[l].transpose() * delta;
    grad.segment(spec_.bias_offset(l), widths[l + 1]) = delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix upstream = delta * weight_block(spec_, w_, l).transpose();
    // ReLU derivative is taken as 0 at exactly 0.
    upstream.array() *= (preacts_[l - 1].array() > 0.0).cast<double>();
    if (masks_ != nullptr) upstream.array() *= (*masks_)[l - 1].array();
    delta = std::move(upstream);
  }
  return grad;
}

Matrix forward(const MlpSpec& spec, const WeightVector& w, const Matrix& x) {
  check_weights(spec, w);
  check_inputs(spec, x);
  Matrix a = x;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    Matrix z = a * weight_block(spec, w, l);
    z.rowwise() += bias_block(spec, w, l).transpose();
    if (l + 1 < spec.num_layers()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Matrix forward(const MlpSpec& spec, const WeightVector& w, const Matrix& x,
               const HiddenMasks& masks) {
  return GradTape(spec, w, x, &masks).output();
}

double log_prior(const WeightVector& w) {
  if (!w.allFinite()) throw std::invalid_argument("log_prior: non-finite weights");
  return -0.5 * static_cast<double>(w.size()) * kLog2Pi - 0.5 * w.squaredNorm();
}

Vector pointwise_log_likelihood(const LikelihoodModel& model, const MlpSpec& spec,
                                const WeightVector& w, const Matrix& x, const Matrix& y) {
  model.check_compatible(spec);
  check_targets(spec, x, y);
  const Matrix f = forward(spec, w, x);
  Vector out = Vector::Zero(x.rows());
  for (Eigen::Index n = 0; n < f.rows(); ++n) {
    for (Eigen::Index k = 0; k < f.cols(); ++k) out[n] += model.point_log_density(y(n, k), f(n, k));
  }
  return out;
}

double log_likelihood(const LikelihoodModel& model, const MlpSpec& spec, const WeightVector& w,
                      const Matrix& x, const Matrix& y) {
  return pointwise_log_likelihood(model, spec, w, x, y).sum();
}

double log_joint(const LikelihoodModel& model, const MlpSpec& spec, const WeightVector& w,
                 const Batch& data) {
  double value = log_prior(w);
  if (data.size() > 0) value += log_likelihood(model, spec, w, data.x, data.y);
  return value;
}

ValueAndGradient log_likelihood_value_and_gradient(const LikelihoodModel& model,
                                                   const MlpSpec& spec, const WeightVector& w,
                                                   const Matrix& x, const Matrix& y,
                                                   const HiddenMasks* masks) {
  model.check_compatible(spec);
  check_targets(spec, x, y);
  GradTape tape(spec, w, x, masks);
  const Matrix& f = tape.output();
  Matrix score(f.rows(), f.cols());
  double value = 0.0;
  for (Eigen::Index n = 0; n < f.rows(); ++n) {
    for (Eigen::Index k = 0; k < f.cols(); ++k) {
      value += model.point_log_density(y(n, k), f(n, k));
      score(n, k) = model.point_score(y(n, k), f(n, k));
    }
  }
  return {value, tape.backward(score)};
}

ValueAndGradient log_joint_value_and_gradient(
    const LikelihoodModel& model, const MlpSpec& spec, const WeightVector& w, const Batch& data,
    std::optional<std::span<const std::size_t>> minibatch) {
  ValueAndGradient out{log_prior(w), -w};
  if (minibatch.has_value()) {
    if (minibatch->empty()) throw std::invalid_argument("grad_log_joint: empty minibatch");
    const Batch sub = data.rows(*minibatch);
    const double scale = static_cast<double>(data.size()) / static_cast<double>(minibatch->size());
    auto lik = log_likelihood_value_and_gradient(model, spec, w, sub.x, sub.y);
    out.value += scale * lik.value;
    out.gradient += scale * lik.gradient;
  } else if (data.size() > 0) {
    auto lik = log_likelihood_value_and_gradient(model, spec, w, data.x, data.y);
    out.value += lik.value;
    out.gradient += lik.gradient;
  } else {
    check_weights(spec, w);
  }
  return out;
}

WeightVector grad_log_joint(const LikelihoodModel& model, const MlpSpec& spec,
                            const WeightVector& w, const Batch& data,
                            std::optional<std::span<const std::size_t>> minibatch) {
  return log_joint_value_and_gradient(model, spec, w, data, minibatch).gradient;
}

}  // namespace bnn
