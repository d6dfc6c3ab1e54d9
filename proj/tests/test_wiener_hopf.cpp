#include <doctest.h>

#include <cmath>

#include "fluid_exit/errors.hpp"
#include "fluid_exit/mc_engine.hpp"
#include "fluid_exit/wiener_hopf.hpp"
#include "support.hpp"

using namespace fluid_exit;

namespace {

const double kRoot3 = std::sqrt(3.0);

WienerHopfFactors factor_spec(const ModelSpec& spec, double tilt = 0.0,
                              const FactorizeOptions& opt = {}) {
  return tilt_factorize(ValidatedModel::validate(spec), tilt, opt);
}

void check_sub_markovian_factors(const WienerHopfFactors& f) {
  for (const DenseMatrix* j : {&f.Jplus, &f.Jminus}) {
    for (int r = 0; r < j->rows(); ++r) {
      double row = 0.0;
      for (int c = 0; c < j->cols(); ++c) {
        CHECK((*j)(r, c) >= -1e-9);
        CHECK((*j)(r, c) <= 1.0 + 1e-9);
        row += (*j)(r, c);
      }
      CHECK(row <= 1.0 + 1e-9);
    }
  }
  for (const DenseMatrix* q : {&f.Qplus, &f.Qminus}) {
    for (int r = 0; r < q->rows(); ++r) {
      double row = 0.0;
      for (int c = 0; c < q->cols(); ++c) {
        if (r != c) CHECK((*q)(r, c) >= -1e-9);
        row += (*q)(r, c);
      }
      CHECK(row <= 1e-9);
    }
  }
}

}  // namespace

TEST_CASE("killed two-state factors match the scalar quadratic roots") {
  const WienerHopfFactors f = factor_spec(testing::killed_two_state());
  CHECK(std::abs(f.Jplus(0, 0) - (2.0 - kRoot3)) < 1e-9);
  CHECK(std::abs(f.Qplus(0, 0) + kRoot3) < 1e-9);
  CHECK(std::abs(f.Jminus(0, 0) - (2.0 - kRoot3)) < 1e-9);
  CHECK(std::abs(f.Qminus(0, 0) + kRoot3) < 1e-9);
  CHECK(f.residual_norm <= 1e-10);
  check_sub_markovian_factors(f);
}

TEST_CASE("conservative two-state factors approach the unit fixed point") {
  FactorizeOptions opt;
  opt.tol = 1e-9;
  opt.residual_tol = 1e-7;
  opt.max_iter = 200000;
  const WienerHopfFactors f = factor_spec(testing::conservative_two_state(), 0.0, opt);
  CHECK(std::abs(f.Jplus(0, 0) - 1.0) < 1e-4);
  CHECK(std::abs(f.Qplus(0, 0)) < 1e-4);
  CHECK(std::abs(f.Jminus(0, 0) - 1.0) < 1e-4);
  check_sub_markovian_factors(f);
}

TEST_CASE("an absorbing down-state kills the upward passage") {
  const WienerHopfFactors f = factor_spec(testing::absorbing_down_two_state());
  CHECK(std::abs(f.Jplus(0, 0)) < 1e-12);
  CHECK(std::abs(f.Qplus(0, 0) + 1.0) < 1e-12);
}

TEST_CASE("tilting equals factorizing the killed generator") {
  const WienerHopfFactors plain = factor_spec(testing::killed_two_state());
  const WienerHopfFactors tilted = factor_spec(testing::conservative_two_state(), 1.0);
  CHECK(tilted.tilt == 1.0);
  CHECK(std::abs(tilted.Jplus(0, 0) - plain.Jplus(0, 0)) < 1e-10);
  CHECK(std::abs(tilted.Qplus(0, 0) - plain.Qplus(0, 0)) < 1e-10);

  const WienerHopfFactors zero_tilt = factor_spec(testing::killed_two_state(), 0.0);
  CHECK(zero_tilt.Jplus(0, 0) == plain.Jplus(0, 0));

  // J+ of the killed model tilted by one more unit: root of J^2 - 6J + 1.
  const WienerHopfFactors deeper = factor_spec(testing::killed_two_state(), 1.0);
  CHECK(std::abs(deeper.Jplus(0, 0) - (3.0 - 2.0 * std::sqrt(2.0))) < 1e-9);
}

TEST_CASE("residual certifies factors and flags corruption") {
  const ModelSpec spec = testing::killed_two_state();
  const ValidatedModel model = ValidatedModel::validate(spec);
  const std::vector<double> vel{1.0, -1.0};
  WienerHopfFactors f = tilt_factorize(model, 0.0);
  CHECK(residual(f, model.generator_at(0.0), vel) <= 1e-10);

  WienerHopfFactors corrupted = f;
  corrupted.Jplus(0, 0) += 0.1;
  CHECK(residual(corrupted, model.generator_at(0.0), vel) >= 0.05);

  WienerHopfFactors wrong_shape = f;
  wrong_shape.Jplus = DenseMatrix(2, 2);
  try {
    residual(wrong_shape, model.generator_at(0.0), vel);
    FAIL("expected ShapeMismatch");
  } catch (const FluidError& e) {
    CHECK(e.code() == Errc::ShapeMismatch);
  }
}

TEST_CASE("factorize reports NoConvergence when the budget is too small") {
  FactorizeOptions opt;
  opt.max_iter = 3;
  opt.tol = 1e-10;
  try {
    factor_spec(testing::killed_two_state(), 0.0, opt);
    FAIL("expected NoConvergence");
  } catch (const FluidError& e) {
    CHECK(e.code() == Errc::NoConvergence);
  }
}

TEST_CASE("random killed models: invariants and the passage norm bound") {
  Xoshiro256pp rng(2024);
  for (int trial = 0; trial < 6; ++trial) {
    const ModelSpec spec = testing::random_killed_model(rng);
    const ValidatedModel model = ValidatedModel::validate(spec);
    const WienerHopfFactors f = tilt_factorize(model, 0.0);
    CHECK(f.residual_norm <= 1e-10);
    check_sub_markovian_factors(f);

    const double level = 0.25 + 2.0 * rng.uniform();
    const double bound =
        std::exp(-model.killing_floor() * level / model.max_abs_velocity());
    CHECK(matrix_exp(f.Qplus * level).inf_norm() <= bound + 1e-9);
    CHECK(matrix_exp(f.Qminus * level).inf_norm() <= bound + 1e-9);
  }
}

TEST_CASE("more uniform killing shrinks the passage matrix entrywise") {
  const ModelSpec spec = testing::killed_two_state();
  const double level = 0.7;
  const WienerHopfFactors low = factor_spec(spec, 0.3);
  const WienerHopfFactors high = factor_spec(spec, 0.7);
  const DenseMatrix p_low = matrix_exp(low.Qplus * level);
  const DenseMatrix p_high = matrix_exp(high.Qplus * level);
  for (int i = 0; i < p_low.rows(); ++i)
    for (int j = 0; j < p_low.cols(); ++j) CHECK(p_high(i, j) <= p_low(i, j) + 1e-12);
}

TEST_CASE("passage probabilities agree with simulation on a random model") {
  Xoshiro256pp rng(91);
  const ModelSpec spec = testing::random_killed_model(rng, {.max_dim = 4});
  const ValidatedModel model = ValidatedModel::validate(spec);
  const WienerHopfFactors f = tilt_factorize(model, 0.0);
  const double level = 0.8;
  const DenseMatrix analytic = matrix_exp(f.Qplus * level);

  // P(tau^+_level finite and alive, landing in each k) per start state.
  McParams params;
  params.paths = 100000;
  for (int i = 0; i < model.plus_dim(); ++i) {
    for (int k = 0; k < model.plus_dim(); ++k) {
      ExpDecayFunction g;
      g.decay = 0.0;
      g.side = Side::Plus;
      g.values.assign(model.plus_dim(), 0.0);
      g.values[k] = 1.0;
      params.seed = derive_stream_key(555, i * 16 + k);
      const EstimateWithCI est = estimate(
          model, OneSidedQuery{Side::Plus, level, g},
          0.0, model.original_index(i), params);
      const double tol = 3.0 * est.std_error + est.truncation_bias + 1e-12;
      CHECK(std::abs(est.mean - analytic(i, k)) <= tol);
    }
  }
}
