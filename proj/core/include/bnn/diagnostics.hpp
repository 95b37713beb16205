#pragma once

#include <span>
#include <vector>

namespace bnn {

struct Autocorrelation {
  std::vector<double> values;  // values[k] = ACF at lag k, values[0] == 1
  bool degenerate = false;     // constant trace; ACF(k > 0) reported as 0
};

// Biased (1/S) sample autocorrelation for lags 0..max_lag.
Autocorrelation autocorrelation(std::span<const double> trace, std::size_t max_lag);

// S / (1 + 2 sum_k ACF(k)), truncated with Geyer's initial positive sequence.
// Antithetic traces would report ESS > S; the result is capped at 1.05 * S.
// Throws std::domain_error for a constant trace.
double effective_sample_size(std::span<const double> trace);

}  // namespace bnn
