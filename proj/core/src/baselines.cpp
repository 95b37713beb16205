#include "bnn/baselines.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

#include "bnn/adam.hpp"
#include "bnn/errors.hpp"
#include "bnn/parallel.hpp"
#include "bnn/random.hpp"

namespace bnn {

namespace {

HiddenMasks draw_masks(const MlpSpec& spec, Eigen::Index rows, double dropout_rate, Rng& rng) {
  const double keep = 1.0 - dropout_rate;
  std::bernoulli_distribution keep_unit(keep);
  HiddenMasks masks;
  const auto& widths = spec.layer_widths();
  for (std::size_t l = 1; l + 1 < widths.size(); ++l) {
    Matrix m(rows, widths[l]);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep_unit(rng) ? 1.0 / keep : 0.0;
    masks.push_back(std::move(m));
  }
  return masks;
}

void check_training(const MapTrainingConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (cfg.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (cfg.max_steps < 1 || cfg.patience < 1 || cfg.smoothing_window < 1) {
    throw std::invalid_argument("training step counts must be positive");
  }
}

}  // namespace

double penalty_reference(const LikelihoodModel& model) {
  return model.is_regression() ? model.noise_variance() : 1.0;
}

double map_objective(const LikelihoodModel& model, const MlpSpec& spec, const WeightVector& w,
                     const Batch& data, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  const double nll = data.size() > 0 ? -log_likelihood(model, spec, w, data.x, data.y) : 0.0;
  return nll + lambda / (2.0 * penalty_reference(model)) * w.squaredNorm();
}

ValueAndGradient map_objective_value_and_gradient(const LikelihoodModel& model,
                                                  const MlpSpec& spec, const WeightVector& w,
                                                  const Batch& data, double lambda,
                                                  const HiddenMasks* masks) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  const double coef = lambda / penalty_reference(model);
  ValueAndGradient out{0.5 * coef * w.squaredNorm(), coef * w};
  if (data.size() > 0) {
    auto lik = log_likelihood_value_and_gradient(model, spec, w, data.x, data.y, masks);
    out.value -= lik.value;
    out.gradient -= lik.gradient;
  }
  return out;
}

void DropoutConfig::validate() const {
  if (!(dropout_rate > 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in (0, 1)");
  }
  if (mc_samples < 1) throw std::invalid_argument("dropout needs at least one MC sample");
  check_training(training);
}

void EnsembleConfig::validate() const {
  if (n_members < 1) throw std::invalid_argument("ensemble needs at least one member");
  check_training(training);
}

MapFit map_fit(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
               const MapTrainingConfig& cfg, double dropout_rate, std::uint64_t seed) {
  check_training(cfg);
  model.check_compatible(spec);
  Rng rng(seed);
  MapFit fit;
  fit.weights = cfg.init_scale * standard_normal(spec.param_count(), rng);
  AdamState adam(spec.param_count(), AdamConfig{cfg.learning_rate});
  ConvergenceMonitor monitor(cfg.smoothing_window, cfg.tolerance, cfg.patience, cfg.max_steps);
  Vector ascent(spec.param_count());

  while (true) {
    ValueAndGradient vg;
    if (dropout_rate > 0.0 && train.size() > 0) {
      const HiddenMasks masks = draw_masks(spec, train.size(), dropout_rate, rng);
      vg = map_objective_value_and_gradient(model, spec, fit.weights, train, cfg.lambda, &masks);
    } else {
      vg = map_objective_value_and_gradient(model, spec, fit.weights, train, cfg.lambda);
    }
    if (!std::isfinite(vg.value) || !vg.gradient.allFinite()) {
      throw DivergenceError(fmt::format("MAP training diverged at step {}", fit.steps));
    }
    ++fit.steps;
    if (monitor.record(-vg.value)) break;
    ascent = -vg.gradient;
    adam.step(fit.weights, ascent);
  }
  fit.final_loss = -monitor.smoothed();
  return fit;
}

MapFit dropout_fit(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
                   const DropoutConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return map_fit(model, spec, train, cfg.training, cfg.dropout_rate, seed);
}

PredictiveSamples dropout_predictive_samples(const WeightVector& w, const MlpSpec& spec,
                                             const LikelihoodModel& model, const Matrix& x,
                                             Eigen::Index draws, double dropout_rate,
                                             std::uint64_t seed, bool include_noise) {
  if (draws < 1) throw std::invalid_argument("dropout predictive needs at least one draw");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0, 1)");
  }
  if (spec.output_dim() != 1) throw DimensionError("predictive metrics need a scalar-output network");
  model.check_compatible(spec);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  PredictiveSamples pred;
  Matrix raw(draws, x.rows());
  for (Eigen::Index s = 0; s < draws; ++s) {
    const HiddenMasks masks = draw_masks(spec, x.rows(), dropout_rate, rng);
    raw.row(s) = forward(spec, w, x, masks).col(0).transpose();
  }
  if (model.is_regression()) {
    pred.kind = PredictiveKind::regression_values;
    pred.includes_observation_noise = include_noise;
    if (include_noise) {
      for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] += model.noise_sigma() * normal(rng);
    }
    pred.values = std::move(raw);
  } else {
    pred.kind = PredictiveKind::class_probabilities;
    pred.values = raw.unaryExpr([](double z) { return sigmoid(z); });
    pred.logits = std::move(raw);
  }
  return pred;
}

PosteriorSamples EnsembleResult::as_samples() const {
  PosteriorSamples samples;
  samples.method = "ensemble";
  if (members.empty()) return samples;
  samples.draws.resize(static_cast<Eigen::Index>(members.size()), members.front().size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    samples.draws.row(static_cast<Eigen::Index>(i)) = members[i].transpose();
  }
  return samples;
}

EnsembleResult ensemble_fit(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
                            const EnsembleConfig& cfg, std::uint64_t master_seed) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.n_members);
  EnsembleResult result;
  result.members.resize(n);
  result.records.resize(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        MemberRecord rec{static_cast<int>(i), derive_seed(master_seed, i), 0.0, false};
        MapFit fit;
        try {
          fit = map_fit(model, spec, train, cfg.training, 0.0, rec.seed);
        } catch (const DivergenceError&) {
          rec.seed = derive_seed(rec.seed, 1);
          rec.resampled = true;
          fit = map_fit(model, spec, train, cfg.training, 0.0, rec.seed);
        }
        rec.final_loss = fit.final_loss;
        result.members[i] = std::move(fit.weights);
        result.records[i] = rec;
      },
      cfg.workers);
  return result;
}

void save_ensemble(const EnsembleResult& ensemble, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_samples_csv(ensemble.as_samples(), dir + "/members.csv");
  auto manifest = fmt::output_file(dir + "/members_manifest.csv");
  manifest.print("member,seed,final_loss,resampled\n");
  for (const auto& r : ensemble.records) {
    manifest.print("{},{},{:.17g},{}\n", r.index, r.seed, r.final_loss, r.resampled ? 1 : 0);
  }
}

EnsembleResult load_ensemble(const std::string& dir) {
  EnsembleResult result;
  const PosteriorSamples samples = read_samples_csv(dir + "/members.csv");
  for (Eigen::Index s = 0; s < samples.size(); ++s) result.members.emplace_back(samples.draws.row(s).transpose());

  std::ifstream in(dir + "/members_manifest.csv");
  if (!in) throw std::runtime_error("cannot open " + dir + "/members_manifest.csv");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::istringstream cells(line);
    std::string index, seed, loss, resampled;
    if (!std::getline(cells, index, ',') || !std::getline(cells, seed, ',') ||
        !std::getline(cells, loss, ',') || !std::getline(cells, resampled, ',')) {
      throw ParseError("expected member,seed,final_loss,resampled", line_no);
    }
    result.records.push_back({std::stoi(index), std::stoull(seed), std::stod(loss), resampled == "1"});
  }
  if (result.records.size() != result.members.size()) {
    throw std::runtime_error("ensemble manifest and member file disagree on the member count");
  }
  return result;
}

}  // namespace bnn
