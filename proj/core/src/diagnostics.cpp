#include "bnn/diagnostics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace bnn {

namespace {

struct Centered {
  std::vector<double> values;
  double variance = 0.0;  // c0, biased
};

Centered center(std::span<const double> trace) {
  const double n = static_cast<double>(trace.size());
  const double mean = std::accumulate(trace.begin(), trace.end(), 0.0) / n;
  Centered out;
  out.values.reserve(trace.size());
  for (double v : trace) out.values.push_back(v - mean);
  for (double v : out.values) out.variance += v * v;
  out.variance /= n;
  return out;
}

double lag_autocovariance(const std::vector<double>& c, std::size_t k) {
  double acc = 0.0;
  for (std::size_t t = 0; t + k < c.size(); ++t) acc += c[t] * c[t + k];
  return acc / static_cast<double>(c.size());
}

bool is_constant(std::span<const double> trace) {
  return std::all_of(trace.begin(), trace.end(), [&](double v) { return v == trace.front(); });
}

}  // namespace

Autocorrelation autocorrelation(std::span<const double> trace, std::size_t max_lag) {
  if (trace.size() <= max_lag) {
    throw std::invalid_argument("autocorrelation: trace must be longer than max_lag");
  }
  Autocorrelation out;
  out.values.assign(max_lag + 1, 0.0);
  out.values[0] = 1.0;
  if (is_constant(trace)) {
    out.degenerate = true;
    return out;
  }
  const Centered c = center(trace);
  for (std::size_t k = 1; k <= max_lag; ++k) {
    out.values[k] = std::clamp(lag_autocovariance(c.values, k) / c.variance, -1.0, 1.0);
  }
  return out;
}

double effective_sample_size(std::span<const double> trace) {
  if (trace.size() < 2) throw std::invalid_argument("effective_sample_size: need >= 2 draws");
  if (is_constant(trace)) {
    throw std::domain_error("effective_sample_size: undefined for a constant trace");
  }
  const Centered c = center(trace);
  const std::size_t n = trace.size();
  auto rho = [&](std::size_t k) { return lag_autocovariance(c.values, k) / c.variance; };

  // tau = -1 + 2 * sum_m (rho_{2m} + rho_{2m+1}) over the initial positive pairs.
  double pair_sum = 0.0;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    const double pair = rho(2 * m) + rho(2 * m + 1);
    if (pair <= 0.0) break;
    pair_sum += pair;
  }
  const double tau = -1.0 + 2.0 * pair_sum;
  const double cap = 1.05 * static_cast<double>(n);
  if (tau <= 0.0) return cap;
  return std::min(static_cast<double>(n) / tau, cap);
}

}  // namespace bnn
