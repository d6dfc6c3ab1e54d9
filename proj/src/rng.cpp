#include "fluid_exit/rng.hpp"

namespace fluid_exit {

namespace {

double pairwise_block(const double* xs, std::size_t n) {
  if (n <= 32) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += xs[k];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_block(xs, half) + pairwise_block(xs + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
  return pairwise_block(values.data(), values.size());
}

MeanStderr mean_stderr(std::span<const double> values) {
  MeanStderr out;
  const std::size_t n = values.size();
  if (n == 0) return out;
  // A constant sample has an exact mean and zero spread; skip the division
  // noise entirely (degenerate queries rely on this being exact).
  bool constant = true;
  for (std::size_t k = 1; k < n && constant; ++k) constant = values[k] == values[0];
  if (constant) {
    out.mean = values[0];
    return out;
  }
  out.mean = pairwise_sum(values) / static_cast<double>(n);
  if (n < 2) return out;
  std::vector<double> sq(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double d = values[k] - out.mean;
    sq[k] = d * d;
  }
  const double ss = pairwise_sum(sq);
  out.stderror = std::sqrt(ss / (static_cast<double>(n - 1) * static_cast<double>(n)));
  return out;
}

}  // namespace fluid_exit
