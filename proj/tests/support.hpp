#pragma once

#include <string>
#include <vector>

#include "fluid_exit/model.hpp"
#include "fluid_exit/rng.hpp"

namespace fluid_exit::testing {

// Two-state model with unit killing in every row; the scalar factor oracles
// J+ = 2 - sqrt(3), Q+ = -sqrt(3) live on this one.
inline ModelSpec killed_two_state() {
  ModelSpec spec;
  spec.states = {"u", "d"};
  spec.velocities = {1.0, -1.0};
  spec.generator.matrices.push_back(DenseMatrix{{-2.0, 1.0}, {1.0, -2.0}});
  return spec;
}

// Conservative symmetric two-state model (zero drift, no killing).
inline ModelSpec conservative_two_state() {
  ModelSpec spec;
  spec.states = {"u", "d"};
  spec.velocities = {1.0, -1.0};
  spec.generator.matrices.push_back(DenseMatrix{{-1.0, 1.0}, {1.0, -1.0}});
  return spec;
}

// Down-state is absorbing within E: from d the chain never moves again.
inline ModelSpec absorbing_down_two_state() {
  ModelSpec spec;
  spec.states = {"u", "d"};
  spec.velocities = {1.0, -1.0};
  spec.generator.matrices.push_back(DenseMatrix{{-1.0, 1.0}, {0.0, 0.0}});
  return spec;
}

// Conservative before t = 1, killed afterwards.
inline ModelSpec two_segment_switch() {
  ModelSpec spec;
  spec.states = {"u", "d"};
  spec.velocities = {1.0, -1.0};
  spec.generator.breakpoints = {1.0};
  spec.generator.matrices.push_back(DenseMatrix{{-1.0, 1.0}, {1.0, -1.0}});
  spec.generator.matrices.push_back(DenseMatrix{{-3.0, 1.0}, {1.0, -3.0}});
  return spec;
}

struct RandomModelOptions {
  int max_dim = 5;
  double kill_lo = 0.5;
  double kill_hi = 2.0;
  double vel_lo = 0.5;
  double vel_hi = 2.0;
  double rate_hi = 2.0;
};

// Random homogeneous model with both velocity signs and a strictly positive
// killing floor (every row carries a deficit in [kill_lo, kill_hi]).
inline ModelSpec random_killed_model(Xoshiro256pp& rng, const RandomModelOptions& opt = {}) {
  const int m = 2 + static_cast<int>(rng.next() % static_cast<std::uint64_t>(opt.max_dim - 1));
  const int m_plus = 1 + static_cast<int>(rng.next() % static_cast<std::uint64_t>(m - 1));
  ModelSpec spec;
  for (int i = 0; i < m; ++i) spec.states.push_back("s" + std::to_string(i));
  for (int i = 0; i < m; ++i) {
    const double mag = opt.vel_lo + rng.uniform() * (opt.vel_hi - opt.vel_lo);
    spec.velocities.push_back(i < m_plus ? mag : -mag);
  }
  DenseMatrix gen(m, m);
  for (int i = 0; i < m; ++i) {
    double out_rate = 0.0;
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      gen(i, j) = rng.uniform() * opt.rate_hi;
      out_rate += gen(i, j);
    }
    const double kill = opt.kill_lo + rng.uniform() * (opt.kill_hi - opt.kill_lo);
    gen(i, i) = -(out_rate + kill);
  }
  spec.generator.matrices.push_back(std::move(gen));
  return spec;
}

// Same synthesis, but with the states listed in a shuffled order so the
// validated model's internal permutation is nontrivial.
inline ModelSpec random_killed_model_shuffled(Xoshiro256pp& rng,
                                              const RandomModelOptions& opt = {}) {
  ModelSpec spec = random_killed_model(rng, opt);
  const int m = static_cast<int>(spec.states.size());
  std::vector<int> order(m);
  for (int i = 0; i < m; ++i) order[i] = i;
  for (int i = m - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  ModelSpec shuffled;
  shuffled.generator.breakpoints = spec.generator.breakpoints;
  for (int i = 0; i < m; ++i) {
    shuffled.states.push_back(spec.states[order[i]]);
    shuffled.velocities.push_back(spec.velocities[order[i]]);
  }
  for (const DenseMatrix& g : spec.generator.matrices) {
    DenseMatrix p(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) p(i, j) = g(order[i], order[j]);
    shuffled.generator.matrices.push_back(std::move(p));
  }
  return shuffled;
}

}  // namespace fluid_exit::testing
