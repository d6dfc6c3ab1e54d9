#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace fluid_exit {

// Monte Carlo estimate with its standard error. Same (seed, n, model, query)
// reproduces the mean bit-for-bit regardless of worker count: paths draw from
// per-index derived streams and the reduction is fixed-order pairwise.
struct EstimateWithCI {
  double mean = 0.0;
  double std_error = 0.0;
  long long n = 0;
  std::uint64_t seed = 0;
  double horizon = 0.0;
  // Upper bound on the mass censored by the finite horizon.
  double truncation_bias = 0.0;
  std::string warning;  // set when the censoring bound exceeds the target
};

struct McParams {
  long long paths = 100000;
  std::uint64_t seed = 1;
  // Simulation cutoff; NaN picks the smallest horizon whose censoring bound
  // stays below bias_target * ||payoff||.
  double horizon = std::numeric_limits<double>::quiet_NaN();
  long long inner_paths = 1000;  // budget of nested estimators
  int threads = 0;               // 0: FLUID_EXIT_THREADS env or hardware
  double bias_target = 1e-4;
};

}  // namespace fluid_exit
