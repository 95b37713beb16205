#include "bnn/samplers.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

#include "bnn/errors.hpp"
#include "bnn/random.hpp"

namespace bnn {

void LogDensity::stochastic_gradient(const Vector& w, std::span<const std::size_t>,
                                     Vector& grad) const {
  value_and_gradient(w, grad);
}

BnnLogJoint::BnnLogJoint(LikelihoodModel model, MlpSpec spec, Batch data)
    : model_(model), spec_(std::move(spec)), data_(std::move(data)) {
  model_.check_compatible(spec_);
  if (data_.size() > 0 && (data_.x.cols() != spec_.input_dim() || data_.y.cols() != spec_.output_dim() ||
                           data_.y.rows() != data_.x.rows())) {
    throw DimensionError("training data does not match the network shape");
  }
}

double BnnLogJoint::log_density(const Vector& w) const { return log_joint(model_, spec_, w, data_); }

double BnnLogJoint::value_and_gradient(const Vector& w, Vector& grad) const {
  auto vg = log_joint_value_and_gradient(model_, spec_, w, data_);
  grad = std::move(vg.gradient);
  return vg.value;
}

void BnnLogJoint::stochastic_gradient(const Vector& w, std::span<const std::size_t> batch,
                                      Vector& grad) const {
  grad = log_joint_value_and_gradient(model_, spec_, w, data_, batch).gradient;
}

RunControl RunControl::with_budget(double seconds) {
  RunControl control;
  if (seconds > 0.0) {
    control.deadline = std::chrono::steady_clock::now() +
                       std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                           std::chrono::duration<double>(seconds));
  }
  return control;
}

bool RunControl::expired() const {
  return deadline.has_value() && std::chrono::steady_clock::now() >= *deadline;
}

namespace {

void check_schedule(long iterations, long burn_in, long thinning) {
  if (iterations <= 0 || burn_in < 0 || thinning < 1) {
    throw std::invalid_argument("chain schedule needs iterations > 0, burn_in >= 0, thinning >= 1");
  }
  if (burn_in >= iterations) throw std::invalid_argument("burn_in must be smaller than iterations");
}

bool is_retained(long it, long burn_in, long thinning) {
  return it >= burn_in && (it - burn_in + 1) % thinning == 0;
}

Vector initial_state(const std::optional<Vector>& given, double scale, Eigen::Index dim, Rng& rng) {
  if (given.has_value()) {
    if (given->size() != dim) throw DimensionError("initial position has the wrong length");
    return *given;
  }
  return scale * standard_normal(dim, rng);
}

// Bookkeeping shared by all three samplers.
class ChainRecorder {
 public:
  ChainRecorder(Eigen::Index dim, long retained, const std::vector<Eigen::Index>& coords,
                std::string method, std::uint64_t seed)
      : draws_(retained, dim) {
    for (Eigen::Index c : coords) {
      if (c >= 0 && c < dim) stats_.trace_coordinate_ids.push_back(c);
    }
    method_ = std::move(method);
    seed_ = seed;
  }

  void retain(const Vector& w) {
    if (kept_ < draws_.rows()) draws_.row(kept_++) = w.transpose();
  }

  void trace(long it, double log_joint, double acceptance, double step_size, const Vector& w) {
    stats_.trace_iteration.push_back(it);
    stats_.trace_log_joint.push_back(log_joint);
    stats_.trace_acceptance.push_back(acceptance);
    stats_.trace_step_size.push_back(step_size);
    std::vector<double> row;
    row.reserve(stats_.trace_coordinate_ids.size());
    for (Eigen::Index c : stats_.trace_coordinate_ids) row.push_back(w[c]);
    stats_.trace_coordinates.push_back(std::move(row));
  }

  ChainStats& stats() { return stats_; }

  ChainResult finish(double step_size, bool truncated) {
    stats_.final_step_size = step_size;
    stats_.truncated = truncated;
    PosteriorSamples samples;
    samples.draws = draws_.topRows(kept_);
    samples.method = method_;
    samples.seed = seed_;
    samples.truncated = truncated;
    return {std::move(samples), std::move(stats_)};
  }

 private:
  Matrix draws_;
  Eigen::Index kept_ = 0;
  ChainStats stats_;
  std::string method_;
  std::uint64_t seed_ = 0;
};

LeapfrogState leapfrog_from(Vector position, Vector momentum, Vector gradient, double step_size,
                            int steps, const LogDensity& target) {
  LeapfrogState out;
  momentum += 0.5 * step_size * gradient;
  for (int l = 0; l < steps; ++l) {
    position += step_size * momentum;
    out.log_density = target.value_and_gradient(position, gradient);
    if (!std::isfinite(out.log_density) || !gradient.allFinite()) {
      out.finite = false;
      break;
    }
    momentum += (l + 1 == steps ? 0.5 : 1.0) * step_size * gradient;
  }
  out.position = std::move(position);
  out.momentum = std::move(momentum);
  out.gradient = std::move(gradient);
  if (out.finite && !out.momentum.allFinite()) out.finite = false;
  return out;
}

// Stochastic-gradient samplers tolerate isolated non-finite updates (the
// update is dropped) but give up after this many in a row.
constexpr int kMaxConsecutiveNonFinite = 10;

class MinibatchSource {
 public:
  MinibatchSource(const LogDensity& target, std::size_t batch_size, Rng& rng) : target_(target) {
    const std::size_t n = target.data_size();
    if (n > 0 && batch_size < n) batcher_.emplace(n, batch_size, rng);
  }

  void gradient(const Vector& w, Vector& grad) {
    if (batcher_.has_value()) {
      target_.stochastic_gradient(w, batcher_->next(), grad);
    } else {
      target_.value_and_gradient(w, grad);
    }
  }

 private:
  const LogDensity& target_;
  std::optional<EpochBatcher> batcher_;
};

}  // namespace

void HmcConfig::validate() const {
  check_schedule(iterations, burn_in, thinning);
  if (leapfrog_steps < 1) throw std::invalid_argument("HMC needs at least one leapfrog step");
  if (!(initial_step_size > 0.0)) throw std::invalid_argument("HMC step size must be > 0");
  if (adaptation_window < 1) throw std::invalid_argument("HMC adaptation window must be >= 1");
  if (!(adapt_low < adapt_high)) throw std::invalid_argument("HMC needs adapt_low < adapt_high");
  if (!(step_up > 0.0) || !(step_down > 0.0)) {
    throw std::invalid_argument("HMC step multipliers must be > 0");
  }
}

void SgldConfig::validate() const {
  check_schedule(iterations, burn_in, thinning);
  if (!(step_size > 0.0)) throw std::invalid_argument("SGLD step size must be > 0");
  if (batch_size < 1) throw std::invalid_argument("SGLD batch size must be >= 1");
}

void SghmcConfig::validate() const {
  check_schedule(iterations, burn_in, thinning);
  if (!(step_size > 0.0)) throw std::invalid_argument("SGHMC step size must be > 0");
  if (leapfrog_steps < 1) throw std::invalid_argument("SGHMC needs at least one inner step");
  if (!(friction > 0.0)) throw std::invalid_argument("SGHMC friction must be > 0");
  if (noise_estimate < 0.0) throw std::invalid_argument("SGHMC noise estimate must be >= 0");
  if (noise_estimate > friction) {
    throw std::invalid_argument("SGHMC noise estimate must not exceed the friction");
  }
  if (batch_size < 1) throw std::invalid_argument("SGHMC batch size must be >= 1");
}

LeapfrogState leapfrog(const Vector& position, const Vector& momentum, double step_size, int steps,
                       const LogDensity& target) {
  if (position.size() != momentum.size()) throw DimensionError("leapfrog: position/momentum mismatch");
  if (!position.allFinite() || !momentum.allFinite()) {
    throw std::invalid_argument("leapfrog: non-finite start point");
  }
  Vector gradient;
  const double start = target.value_and_gradient(position, gradient);
  if (!std::isfinite(start) || !gradient.allFinite()) {
    LeapfrogState out{position, momentum, gradient, start, false};
    return out;
  }
  return leapfrog_from(position, momentum, std::move(gradient), step_size, steps, target);
}

ChainResult hmc_run(const LogDensity& target, const HmcConfig& cfg, std::uint64_t seed,
                    const RunControl& control) {
  cfg.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const Eigen::Index dim = target.dim();

  Vector w = initial_state(cfg.initial_position, cfg.init_scale, dim, rng);
  Vector grad;
  double logp = target.value_and_gradient(w, grad);
  if (!std::isfinite(logp) || !grad.allFinite()) {
    throw DivergenceError("HMC: log density is not finite at the initial position");
  }

  ChainRecorder rec(dim, cfg.retained_count(), cfg.trace_coordinates, "hmc", seed);
  double step_size = cfg.initial_step_size;
  long window_accepts = 0;
  long window_len = 0;
  int consecutive_divergent = 0;
  bool truncated = false;
  Vector momentum(dim);

  for (long it = 0; it < cfg.iterations; ++it) {
    fill_standard_normal(momentum, rng);
    const double h0 = -logp + 0.5 * momentum.squaredNorm();
    LeapfrogState prop = leapfrog_from(w, momentum, grad, step_size, cfg.leapfrog_steps, target);

    bool accepted = false;
    if (prop.finite) {
      const double h1 = -prop.log_density + 0.5 * prop.momentum.squaredNorm();
      consecutive_divergent = 0;
      if (std::isfinite(h1) && std::log(uniform(rng)) < h0 - h1) accepted = true;
    } else {
      ++rec.stats().divergent_transitions;
      if (++consecutive_divergent >= cfg.max_consecutive_divergences) {
        throw DivergenceError(fmt::format(
            "HMC: {} consecutive divergent trajectories at iteration {} (step size {:.3g})",
            consecutive_divergent, it, step_size));
      }
    }
    if (accepted) {
      w = std::move(prop.position);
      grad = std::move(prop.gradient);
      logp = prop.log_density;
      ++window_accepts;
    }
    ++window_len;

    if (window_len == cfg.adaptation_window) {
      const double rate = static_cast<double>(window_accepts) / static_cast<double>(window_len);
      // Adapt only while the window lies entirely inside burn-in.
      if (it + 1 <= cfg.burn_in) {
        if (rate > cfg.adapt_high) {
          step_size *= cfg.step_up;
        } else if (rate < cfg.adapt_low) {
          step_size *= cfg.step_down;
        }
      }
      rec.stats().window_acceptance.push_back(rate);
      rec.stats().step_size_history.push_back(step_size);
      window_accepts = 0;
      window_len = 0;
    }

    if ((it + 1) % cfg.thinning == 0) {
      const auto& acc = rec.stats().window_acceptance;
      rec.trace(it, logp, acc.empty() ? (accepted ? 1.0 : 0.0) : acc.back(), step_size, w);
    }
    if (is_retained(it, cfg.burn_in, cfg.thinning)) rec.retain(w);

    if ((it & 63) == 0 && control.expired()) {
      truncated = true;
      break;
    }
  }
  return rec.finish(step_size, truncated);
}

ChainResult sgld_run(const LogDensity& target, const SgldConfig& cfg, std::uint64_t seed,
                     const RunControl& control) {
  cfg.validate();
  Rng rng(seed);
  const Eigen::Index dim = target.dim();
  Vector w = initial_state(cfg.initial_position, cfg.init_scale, dim, rng);
  ChainRecorder rec(dim, cfg.retained_count(), cfg.trace_coordinates, "sgld", seed);
  MinibatchSource source(target, cfg.batch_size, rng);

  const double noise_scale = std::sqrt(cfg.step_size);
  Vector grad(dim), noise(dim), next(dim);
  int consecutive_bad = 0;
  long accepted_in_window = 0;
  bool truncated = false;

  for (long it = 0; it < cfg.iterations; ++it) {
    source.gradient(w, grad);
    fill_standard_normal(noise, rng);
    next = w + 0.5 * cfg.step_size * grad + noise_scale * noise;
    if (next.allFinite()) {
      w.swap(next);
      consecutive_bad = 0;
      ++accepted_in_window;
    } else {
      ++rec.stats().divergent_transitions;
      if (++consecutive_bad >= kMaxConsecutiveNonFinite) {
        throw DivergenceError(fmt::format("SGLD: non-finite state at iteration {}", it));
      }
    }
    if ((it + 1) % cfg.thinning == 0) {
      const double rate = static_cast<double>(accepted_in_window) / static_cast<double>(cfg.thinning);
      rec.stats().window_acceptance.push_back(rate);
      rec.stats().step_size_history.push_back(cfg.step_size);
      rec.trace(it, target.log_density(w), rate, cfg.step_size, w);
      accepted_in_window = 0;
    }
    if (is_retained(it, cfg.burn_in, cfg.thinning)) rec.retain(w);
    if ((it & 1023) == 0 && control.expired()) {
      truncated = true;
      break;
    }
  }
  return rec.finish(cfg.step_size, truncated);
}

ChainResult sghmc_run(const LogDensity& target, const SghmcConfig& cfg, std::uint64_t seed,
                      const RunControl& control) {
  cfg.validate();
  Rng rng(seed);
  const Eigen::Index dim = target.dim();
  Vector w = initial_state(cfg.initial_position, cfg.init_scale, dim, rng);
  ChainRecorder rec(dim, cfg.retained_count(), cfg.trace_coordinates, "sghmc", seed);
  MinibatchSource source(target, cfg.batch_size, rng);

  const double eps = cfg.step_size;
  const double damping = 1.0 - eps * cfg.friction;
  const double noise_scale = std::sqrt(2.0 * (cfg.friction - cfg.noise_estimate) * eps);
  Vector r(dim), grad(dim), noise(dim), w_next(dim), r_next(dim);
  int consecutive_bad = 0;
  long good_in_window = 0;
  bool truncated = false;

  for (long it = 0; it < cfg.iterations; ++it) {
    fill_standard_normal(r, rng);
    bool iteration_ok = true;
    for (int l = 0; l < cfg.leapfrog_steps; ++l) {
      w_next = w + eps * r;
      source.gradient(w_next, grad);
      fill_standard_normal(noise, rng);
      r_next = damping * r + eps * grad + noise_scale * noise;
      if (!w_next.allFinite() || !r_next.allFinite()) {
        iteration_ok = false;
        break;
      }
      w.swap(w_next);
      r.swap(r_next);
    }
    if (iteration_ok) {
      consecutive_bad = 0;
      ++good_in_window;
    } else {
      ++rec.stats().divergent_transitions;
      if (++consecutive_bad >= kMaxConsecutiveNonFinite) {
        throw DivergenceError(fmt::format("SGHMC: non-finite state at iteration {}", it));
      }
    }
    if ((it + 1) % cfg.thinning == 0) {
      const double rate = static_cast<double>(good_in_window) / static_cast<double>(cfg.thinning);
      rec.stats().window_acceptance.push_back(rate);
      rec.stats().step_size_history.push_back(eps);
      rec.trace(it, target.log_density(w), rate, eps, w);
      good_in_window = 0;
    }
    if (is_retained(it, cfg.burn_in, cfg.thinning)) rec.retain(w);
    if ((it & 63) == 0 && control.expired()) {
      truncated = true;
      break;
    }
  }
  return rec.finish(eps, truncated);
}

ChainResult hmc_run(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
                    const HmcConfig& cfg, std::uint64_t seed, const RunControl& control) {
  if (train.size() == 0) throw std::invalid_argument("hmc_run: empty training set");
  return hmc_run(BnnLogJoint(model, spec, train), cfg, seed, control);
}

ChainResult sgld_run(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
                     const SgldConfig& cfg, std::uint64_t seed, const RunControl& control) {
  return sgld_run(BnnLogJoint(model, spec, train), cfg, seed, control);
}

ChainResult sghmc_run(const LikelihoodModel& model, const MlpSpec& spec, const Batch& train,
                      const SghmcConfig& cfg, std::uint64_t seed, const RunControl& control) {
  return sghmc_run(BnnLogJoint(model, spec, train), cfg, seed, control);
}

void write_chain_csv(const ChainStats& stats, const std::string& path) {
  auto out = fmt::output_file(path);
  out.print("iteration,log_joint,acceptance,step_size");
  for (Eigen::Index c : stats.trace_coordinate_ids) out.print(",w{}", c);
  out.print("\n");
  for (std::size_t i = 0; i < stats.trace_iteration.size(); ++i) {
    out.print("{},{:.17g},{:.17g},{:.17g}", stats.trace_iteration[i], stats.trace_log_joint[i],
              stats.trace_acceptance[i], stats.trace_step_size[i]);
    for (double v : stats.trace_coordinates[i]) out.print(",{:.17g}", v);
    out.print("\n");
  }
}

}  // namespace bnn
