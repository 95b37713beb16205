#include "bnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "bnn/errors.hpp"
#include "bnn/random.hpp"

namespace bnn {

namespace {

double log_mean_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc / static_cast<double>(v.size()));
}

void check_points(const PredictiveSamples& pred, const Vector& y) {
  if (pred.draws() < 1) throw std::invalid_argument("predictive samples are empty");
  if (pred.points() != y.size()) {
    throw DimensionError(fmt::format("predictive has {} points but {} targets were given",
                                     pred.points(), y.size()));
  }
}

std::string format_value(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

PredictiveSamples predictive_from_weights(const PosteriorSamples& samples, const MlpSpec& spec,
                                          const LikelihoodModel& model, const Matrix& x,
                                          std::uint64_t seed, bool include_noise) {
  if (spec.output_dim() != 1) throw DimensionError("predictive metrics need a scalar-output network");
  if (samples.dim() != spec.param_count()) throw DimensionError("posterior draws have the wrong length");
  model.check_compatible(spec);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  PredictiveSamples pred;
  const Eigen::Index s_count = samples.size();
  pred.values.resize(s_count, x.rows());
  if (model.is_regression()) {
    pred.kind = PredictiveKind::regression_values;
    pred.includes_observation_noise = include_noise;
    for (Eigen::Index s = 0; s < s_count; ++s) {
      pred.values.row(s) = forward(spec, samples.draws.row(s).transpose(), x).col(0).transpose();
      if (include_noise) {
        for (Eigen::Index n = 0; n < x.rows(); ++n) pred.values(s, n) += model.noise_sigma() * normal(rng);
      }
    }
  } else {
    pred.kind = PredictiveKind::class_probabilities;
    pred.logits.resize(s_count, x.rows());
    for (Eigen::Index s = 0; s < s_count; ++s) {
      pred.logits.row(s) = forward(spec, samples.draws.row(s).transpose(), x).col(0).transpose();
    }
    pred.values = pred.logits.unaryExpr([](double z) { return sigmoid(z); });
  }
  return pred;
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw std::invalid_argument("percentile q must lie in [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = static_cast<double>(sorted.size() - 1) * q / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

IntervalBand interval_band(const PredictiveSamples& pred, double low_q, double high_q) {
  if (pred.draws() < 1) throw std::invalid_argument("predictive samples are empty");
  IntervalBand band{Vector(pred.points()), Vector(pred.points()), Vector(pred.points())};
  std::vector<double> column(static_cast<std::size_t>(pred.draws()));
  for (Eigen::Index n = 0; n < pred.points(); ++n) {
    for (Eigen::Index s = 0; s < pred.draws(); ++s) column[static_cast<std::size_t>(s)] = pred.values(s, n);
    band.low[n] = percentile(column, low_q);
    band.high[n] = percentile(column, high_q);
    band.mean[n] = pred.values.col(n).mean();
  }
  return band;
}

double avg_test_loglik(const PredictiveSamples& pred, const Vector& y, const LikelihoodModel& model) {
  check_points(pred, y);
  if (pred.includes_observation_noise) {
    throw std::invalid_argument("avg_test_loglik needs noise-free predictive draws");
  }
  const bool regression = pred.kind == PredictiveKind::regression_values;
  if (regression != model.is_regression()) {
    throw std::invalid_argument("predictive kind does not match the likelihood model");
  }
  const bool have_logits = pred.logits.rows() == pred.draws() && pred.logits.cols() == pred.points();
  std::vector<double> terms(static_cast<std::size_t>(pred.draws()));
  double total = 0.0;
  for (Eigen::Index n = 0; n < pred.points(); ++n) {
    for (Eigen::Index s = 0; s < pred.draws(); ++s) {
      double lp;
      if (regression || have_logits) {
        lp = model.point_log_density(y[n], regression ? pred.values(s, n) : pred.logits(s, n));
      } else {
        const double p = pred.values(s, n);
        lp = std::log(y[n] > 0.5 ? p : 1.0 - p);
      }
      terms[static_cast<std::size_t>(s)] = lp;
    }
    total += log_mean_exp(terms);
  }
  return total / static_cast<double>(pred.points());
}

double avg_test_loglik(const PosteriorSamples& samples, const MlpSpec& spec,
                       const LikelihoodModel& model, const Batch& test) {
  if (samples.size() < 1) throw std::invalid_argument("posterior samples are empty");
  Matrix lp(test.size(), samples.size());
  for (Eigen::Index s = 0; s < samples.size(); ++s) {
    lp.col(s) = pointwise_log_likelihood(model, spec, samples.draws.row(s).transpose(), test.x, test.y);
  }
  double total = 0.0;
  std::vector<double> terms(static_cast<std::size_t>(samples.size()));
  for (Eigen::Index n = 0; n < test.size(); ++n) {
    for (Eigen::Index s = 0; s < samples.size(); ++s) terms[static_cast<std::size_t>(s)] = lp(n, s);
    total += log_mean_exp(terms);
  }
  return total / static_cast<double>(test.size());
}

double rmse(const PredictiveSamples& pred, const Vector& y) {
  check_points(pred, y);
  const Vector mean = pred.values.colwise().mean().transpose();
  return std::sqrt((y - mean).squaredNorm() / static_cast<double>(y.size()));
}

double picp(const IntervalBand& band, const Vector& y) {
  if (band.low.size() != y.size()) throw DimensionError("band and targets differ in length");
  Eigen::Index inside = 0;
  for (Eigen::Index n = 0; n < y.size(); ++n) {
    if (y[n] <= band.high[n] && y[n] >= band.low[n]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(y.size());
}

double picp(const PredictiveSamples& pred, const Vector& y) {
  check_points(pred, y);
  return picp(interval_band(pred), y);
}

double mpiw(const IntervalBand& band) {
  if (band.low.size() != band.high.size() || band.low.size() == 0) throw DimensionError("band is empty or ragged");
  double total = 0.0;
  for (Eigen::Index n = 0; n < band.low.size(); ++n) total += band.high[n] - band.low[n];
  return total / static_cast<double>(band.low.size());
}

double mpiw(const PredictiveSamples& pred) { return mpiw(interval_band(pred)); }

double accuracy(const PredictiveSamples& pred, const Vector& labels, double threshold) {
  check_points(pred, labels);
  const Vector mean = pred.values.colwise().mean().transpose();
  Eigen::Index correct = 0;
  for (Eigen::Index n = 0; n < labels.size(); ++n) {
    const bool predicted = mean[n] >= threshold;
    if (predicted == (labels[n] > 0.5)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  double positives = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] > 0.5) {
        positive_rank_sum += mid_rank;
        positives += 1.0;
      }
    }
    i = j + 1;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw std::domain_error("auc is undefined when only one class is present");
  }
  return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double auc(const PredictiveSamples& pred, const Vector& labels) {
  check_points(pred, labels);
  const Vector mean = pred.values.colwise().mean().transpose();
  return auc(std::span<const double>(mean.data(), static_cast<std::size_t>(mean.size())),
             std::span<const double>(labels.data(), static_cast<std::size_t>(labels.size())));
}

std::vector<std::string> MetricsReport::metric_names() const {
  std::vector<std::string> names;
  if (regression) {
    names = {"rmse", "avg_loglik", "picp", "mpiw"};
    if (grid_loglik) names.emplace_back("grid_loglik");
  } else {
    names = {"accuracy", "avg_loglik", "auc"};
  }
  return names;
}

std::vector<double> MetricsReport::metric_values() const {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto v = [&](const std::optional<double>& o) { return o.value_or(nan); };
  if (regression) {
    std::vector<double> out{v(rmse), v(avg_loglik), v(picp), v(mpiw)};
    if (grid_loglik) out.push_back(*grid_loglik);
    return out;
  }
  return {v(accuracy), v(avg_loglik), v(auc)};
}

std::string MetricsReport::to_key_value() const {
  std::string out;
  out += fmt::format("method = {}\n", method);
  out += fmt::format("dataset = {}\n", dataset);
  out += fmt::format("task = {}\n", regression ? "regression" : "classification");
  out += fmt::format("predictive_draws = {}\n", predictive_draws);
  out += fmt::format("intervals_include_noise = {}\n", intervals_include_noise ? "true" : "false");
  const auto names = metric_names();
  const auto values = metric_values();
  for (std::size_t i = 0; i < names.size(); ++i) out += fmt::format("{} = {}\n", names[i], format_value(values[i]));
  std::string joined;
  for (const auto& w : warnings) joined += (joined.empty() ? "" : ";") + w;
  out += fmt::format("warnings = {}\n", joined);
  return out;
}

MetricsReport MetricsReport::from_key_value(const std::string& text) {
  MetricsReport r;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    auto number = [&]() -> double {
      try {
        return std::stod(value);
      } catch (const std::exception&) {
        if (value == "nan") return std::numeric_limits<double>::quiet_NaN();
        throw ParseError("bad number for " + key, line_no);
      }
    };
    if (key == "method") r.method = value;
    else if (key == "dataset") r.dataset = value;
    else if (key == "task") r.regression = value == "regression";
    else if (key == "predictive_draws") r.predictive_draws = static_cast<Eigen::Index>(number());
    else if (key == "intervals_include_noise") r.intervals_include_noise = value == "true";
    else if (key == "rmse") r.rmse = number();
    else if (key == "avg_loglik") r.avg_loglik = number();
    else if (key == "picp") r.picp = number();
    else if (key == "mpiw") r.mpiw = number();
    else if (key == "grid_loglik") r.grid_loglik = number();
    else if (key == "accuracy") r.accuracy = number();
    else if (key == "auc") r.auc = number();
    else if (key == "warnings") {
      std::istringstream parts(value);
      std::string w;
      while (std::getline(parts, w, ';')) {
        if (!w.empty()) r.warnings.push_back(w);
      }
    } else {
      throw ParseError("unknown key " + key, line_no);
    }
  }
  return r;
}

std::string MetricsReport::csv_header() const {
  std::string out = "method,dataset";
  for (const auto& n : metric_names()) out += "," + n;
  return out;
}

std::string MetricsReport::csv_row() const {
  std::string out = method + "," + dataset;
  for (double v : metric_values()) out += "," + format_value(v);
  return out;
}

}  // namespace bnn
