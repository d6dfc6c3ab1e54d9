#include "fluid_exit/exit_operators.hpp"

#include <algorithm>
#include <cmath>

#include "fluid_exit/errors.hpp"

namespace fluid_exit {

namespace {

void check_payoff(const ValidatedModel& model, const ExpDecayFunction& g, Side expected) {
  if (g.side != expected) raise(Errc::SideMismatch, "payoff lives on the wrong velocity side");
  if (static_cast<int>(g.values.size()) != model.side_dim(expected))
    raise(Errc::ShapeMismatch, "payoff length does not match the side dimension");
  if (!(g.decay >= 0.0)) raise(Errc::PreconditionViolated, "decay rate must be >= 0");
}

void check_decay_usable(const ValidatedModel& model, double decay) {
  if (!(decay > 0.0) && !(model.killing_floor() > 0.0))
    raise(Errc::PreconditionViolated,
          "decay 0 requires a strictly positive killing floor");
}

double max_abs_value(std::span<const double> xs) {
  double best = 0.0;
  for (double x : xs) best = std::max(best, std::abs(x));
  return best;
}

}  // namespace

double contraction_constant(double K, double c) {
  if (!(K > 0.0) || !(c > 0.0))
    raise(Errc::NonPositiveArgument, "contraction constant needs K > 0 and c > 0");
  const double a = K / c;
  return 1.0 - 2.0 / (a + 1.0) + 1.0 / (2.0 * a + 1.0);
}

DenseMatrix stacked_passage(const ValidatedModel& model, const WienerHopfFactors& factors,
                            Side side, double level) {
  if (!(level >= 0.0)) raise(Errc::PreconditionViolated, "level must be >= 0");
  const int m = model.dim();
  const int mp = model.plus_dim();
  DenseMatrix out(m, model.side_dim(side));
  if (side == Side::Plus) {
    const DenseMatrix prop = matrix_exp(factors.Qplus * level);
    out.set_block(0, 0, prop);
    out.set_block(mp, 0, factors.Jplus * prop);
  } else {
    const DenseMatrix prop = matrix_exp(factors.Qminus * level);
    out.set_block(0, 0, factors.Jminus * prop);
    out.set_block(mp, 0, prop);
  }
  return out;
}

DenseMatrix composite_cycle(const WienerHopfFactors& factors, Side side, double level_sum) {
  if (!(level_sum >= 0.0)) raise(Errc::PreconditionViolated, "level sum must be >= 0");
  const DenseMatrix up = matrix_exp(factors.Qplus * level_sum);
  const DenseMatrix down = matrix_exp(factors.Qminus * level_sum);
  if (side == Side::Plus) return factors.Jminus * down * factors.Jplus * up;
  return factors.Jplus * up * factors.Jminus * down;
}

std::vector<double> one_sided(const ValidatedModel& model, const ExpDecayFunction& g, Side side,
                              double level, double s, const FactorizeOptions& options) {
  check_payoff(model, g, side);
  check_decay_usable(model, g.decay);
  if (!(s >= 0.0)) raise(Errc::NegativeTime, "start time must be >= 0");

  WienerHopfFactors factors = [&] {
    try {
      return tilt_factorize(model, g.decay, options);
    } catch (const FluidError& e) {
      if (e.code() == Errc::NoConvergence || e.code() == Errc::SylvesterSingular)
        raise(Errc::FactorizationFailed, e.what());
      throw;
    }
  }();
  const DenseMatrix stacked = stacked_passage(model, factors, side, level);
  std::vector<double> out = stacked.apply(g.values);
  const double scale = std::exp(-g.decay * s);
  for (double& v : out) v *= scale;
  return model.to_original_order(out);
}

NeumannResult neumann_apply(const DenseMatrix& composite, std::span<const double> f, double K,
                            double c, const NeumannOptions& options) {
  if (!composite.square() || composite.rows() != static_cast<int>(f.size()))
    raise(Errc::ShapeMismatch, "composite matrix does not match payoff length");
  const double ratio = contraction_constant(K, c);
  const double f_norm = max_abs_value(f);

  long long terms = options.terms;
  if (terms < 0) {
    // Smallest N with ratio^{N+1}/(1-ratio) * ||f|| <= tolerance.
    if (!(options.tolerance > 0.0))
      raise(Errc::PreconditionViolated, "truncation tolerance must be > 0");
    terms = 0;
    double tail = ratio / (1.0 - ratio) * f_norm;
    while (tail > options.tolerance) {
      tail *= ratio;
      ++terms;
    }
  }

  NeumannResult result;
  result.terms = terms;
  result.tail_bound = std::pow(ratio, static_cast<double>(terms + 1)) / (1.0 - ratio) * f_norm;
  result.value.assign(f.begin(), f.end());
  std::vector<double> term(f.begin(), f.end());
  double envelope = f_norm;
  for (long long n = 1; n <= terms; ++n) {
    term = composite.apply(term);
    envelope *= ratio;
    if (max_abs_value(term) > envelope * (1.0 + 1e-9) + 1e-300)
      raise(Errc::DivergenceDetected,
            "Neumann term escaped the geometric envelope at n = " + std::to_string(n));
    for (std::size_t k = 0; k < result.value.size(); ++k) result.value[k] += term[k];
  }
  return result;
}

TwoSidedResult two_sided(const ValidatedModel& model, const ExpDecayFunction& gplus,
                         const ExpDecayFunction& gminus, double lminus, double lplus, double s,
                         TwoSidedMethod method, const FactorizeOptions& factorize_options,
                         const NeumannOptions& neumann_options) {
  check_payoff(model, gplus, Side::Plus);
  check_payoff(model, gminus, Side::Minus);
  if (gplus.decay != gminus.decay)
    raise(Errc::PreconditionViolated, "g+ and g- must share one decay rate");
  check_decay_usable(model, gplus.decay);
  if (!(lminus >= 0.0) || !(lplus >= 0.0))
    raise(Errc::PreconditionViolated, "exit levels must be >= 0");
  if (!(s >= 0.0)) raise(Errc::NegativeTime, "start time must be >= 0");

  const double decay = gplus.decay;
  WienerHopfFactors factors = [&] {
    try {
      return tilt_factorize(model, decay, factorize_options);
    } catch (const FluidError& e) {
      if (e.code() == Errc::NoConvergence || e.code() == Errc::SylvesterSingular)
        raise(Errc::FactorizationFailed, e.what());
      throw;
    }
  }();

  const double level_sum = lminus + lplus;
  const DenseMatrix up_l = matrix_exp(factors.Qplus * lplus);
  const DenseMatrix down_l = matrix_exp(factors.Qminus * lminus);
  const DenseMatrix up_sum = matrix_exp(factors.Qplus * level_sum);
  const DenseMatrix down_sum = matrix_exp(factors.Qminus * level_sum);

  const DenseMatrix front_plus = stacked_passage(model, factors, Side::Plus, lplus);
  const DenseMatrix front_minus = stacked_passage(model, factors, Side::Minus, lminus);
  const DenseMatrix shift_plus = front_minus * (factors.Jplus * up_sum);
  const DenseMatrix shift_minus = front_plus * (factors.Jminus * down_sum);
  const DenseMatrix a_plus = front_plus - shift_plus;
  const DenseMatrix a_minus = front_minus - shift_minus;

  const DenseMatrix cycle_plus = factors.Jminus * down_sum * factors.Jplus * up_sum;
  const DenseMatrix cycle_minus = factors.Jplus * up_sum * factors.Jminus * down_sum;

  TwoSidedResult result;
  result.method = method;
  std::vector<double> sum_plus, sum_minus;
  if (method == TwoSidedMethod::Resolvent) {
    const DenseMatrix res_plus = DenseMatrix::identity(cycle_plus.rows()) - cycle_plus;
    const DenseMatrix res_minus = DenseMatrix::identity(cycle_minus.rows()) - cycle_minus;
    sum_plus = solve_linear(res_plus, gplus.values);
    sum_minus = solve_linear(res_minus, gminus.values);
  } else {
    const double effective_decay = decay + model.killing_floor();
    const double rate_bound = std::max(model.uniform_bound(), 1e-300);
    NeumannResult np =
        neumann_apply(cycle_plus, gplus.values, rate_bound, effective_decay, neumann_options);
    NeumannResult nm =
        neumann_apply(cycle_minus, gminus.values, rate_bound, effective_decay, neumann_options);
    sum_plus = std::move(np.value);
    sum_minus = std::move(nm.value);
    result.neumann_terms = std::max(np.terms, nm.terms);
    result.truncation_bound =
        a_plus.inf_norm() * np.tail_bound + a_minus.inf_norm() * nm.tail_bound;
  }

  std::vector<double> xi_plus = a_plus.apply(sum_plus);
  std::vector<double> xi_minus = a_minus.apply(sum_minus);
  const double scale = std::exp(-decay * s);
  std::vector<double> joint(model.dim());
  for (int i = 0; i < model.dim(); ++i) {
    xi_plus[i] *= scale;
    xi_minus[i] *= scale;
    joint[i] = xi_plus[i] + xi_minus[i];
  }
  result.xi_plus = model.to_original_order(xi_plus);
  result.xi_minus = model.to_original_order(xi_minus);
  result.joint = model.to_original_order(joint);
  return result;
}

DenseMatrix evolution_operator(const ValidatedModel& model, double s, double t) {
  if (!model.homogeneous())
    raise(Errc::PreconditionViolated, "evolution operator requires a constant schedule");
  if (!(s >= 0.0)) raise(Errc::NegativeTime, "start time must be >= 0");
  if (!(t >= s)) raise(Errc::BadTimeOrder, "need s <= t");
  const DenseMatrix prop = matrix_exp(model.generator_at(0.0) * (t - s));
  DenseMatrix out(model.dim(), model.dim());
  for (int i = 0; i < model.dim(); ++i)
    for (int j = 0; j < model.dim(); ++j)
      out(model.original_index(i), model.original_index(j)) = prop(i, j);
  return out;
}

}  // namespace fluid_exit
