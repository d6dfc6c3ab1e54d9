// Acceptance battery: one check per numbered criterion, each printing a
// single [PASS]/[FAIL] line. The process exit code is the failure count.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "fluid_exit/dense_matrix.hpp"
#include "fluid_exit/exit_operators.hpp"
#include "fluid_exit/mc_engine.hpp"
#include "fluid_exit/model.hpp"
#include "fluid_exit/rng.hpp"
#include "fluid_exit/wiener_hopf.hpp"
#include "support.hpp"

using namespace fluid_exit;

namespace {

const double kRoot3 = std::sqrt(3.0);

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

double quadrature(const std::function<double(double)>& f, double a, double b, double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 60);
}

ExpDecayFunction flat_payoff(const ValidatedModel& model, Side side, double decay = 0.0) {
  ExpDecayFunction g;
  g.decay = decay;
  g.side = side;
  g.values.assign(model.side_dim(side), 1.0);
  return g;
}

std::string fmt(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// 1. Closed-form factor oracle on the killed two-state model.
Outcome criterion1() {
  Outcome out;
  FactorizeOptions opt;
  opt.tol = 1e-12;
  opt.residual_tol = 1e-10;
  const WienerHopfFactors f =
      tilt_factorize(ValidatedModel::validate(testing::killed_two_state()), 0.0, opt);
  const double j_err = std::abs(f.Jplus(0, 0) - (2.0 - kRoot3));
  const double q_err = std::abs(f.Qplus(0, 0) + kRoot3);
  out.require(j_err <= 1e-9, "|J+ - (2-sqrt3)| = " + fmt(j_err));
  out.require(q_err <= 1e-9, "|Q+ + sqrt3| = " + fmt(q_err));
  out.require(f.residual_norm <= 1e-10, "residual = " + fmt(f.residual_norm));
  out.detail = "J+ err " + fmt(j_err) + ", residual " + fmt(f.residual_norm);
  return out;
}

// 2. Zero-drift conservative fixed point. The iterate error after n steps is
// exactly 1/(n+1) here, so reaching 1e-6 needs ~1.5e6 iterations; the change
// threshold 5e-13 stops at |J - 1| ~ 7e-7.
Outcome criterion2() {
  Outcome out;
  FactorizeOptions opt;
  opt.tol = 5e-13;
  opt.residual_tol = 1e-10;
  opt.max_iter = 3000000;
  const WienerHopfFactors f =
      tilt_factorize(ValidatedModel::validate(testing::conservative_two_state()), 0.0, opt);
  for (double err : {std::abs(f.Jplus(0, 0) - 1.0), std::abs(f.Jminus(0, 0) - 1.0),
                     std::abs(f.Qplus(0, 0)), std::abs(f.Qminus(0, 0))})
    out.require(err <= 1e-6, "factor error " + fmt(err));
  out.detail = "|J+ - 1| = " + fmt(std::abs(f.Jplus(0, 0) - 1.0)) + " after " +
               std::to_string(f.iterations) + " iterations";
  return out;
}

// 3. One-sided Monte Carlo against e^{-sqrt3}.
Outcome criterion3() {
  Outcome out;
  const ValidatedModel model = ValidatedModel::validate(testing::killed_two_state());
  McParams params;
  params.paths = 100000;
  params.seed = 0xFE11C0DE;
  const EstimateWithCI est = estimate(
      model, McQuery{OneSidedQuery{Side::Plus, 1.0, flat_payoff(model, Side::Plus)}}, 0.0, 0,
      params);
  const double target = std::exp(-kRoot3);
  const double gap = std::abs(est.mean - target);
  const double band = 3.0 * est.std_error + est.truncation_bias;
  out.require(gap <= band, "gap " + fmt(gap) + " > band " + fmt(band));
  out.detail = "mc " + fmt(est.mean) + " vs " + fmt(target) + ", 3se " + fmt(3.0 * est.std_error);
  return out;
}

// 4. Matrix decomposition identity and method agreement on random models.
Outcome criterion4() {
  Outcome out;
  Xoshiro256pp rng(20240811);
  double worst_identity = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const ValidatedModel model =
        ValidatedModel::validate(testing::random_killed_model(rng, {.max_dim = 5}));
    const double lminus = rng.uniform();  // (0, 1]
    const double lplus = rng.uniform();
    const double level_sum = lminus + lplus;
    const WienerHopfFactors f = tilt_factorize(model, 0.0);

    ExpDecayFunction zero_plus = flat_payoff(model, Side::Plus);
    ExpDecayFunction zero_minus = flat_payoff(model, Side::Minus);
    for (double& v : zero_plus.values) v = 0.0;
    for (double& v : zero_minus.values) v = 0.0;

    ExpDecayFunction gp = flat_payoff(model, Side::Plus);
    for (double& v : gp.values) v = rng.uniform();
    const auto lhs_plus =
        model.to_original_order(stacked_passage(model, f, Side::Plus, lplus).apply(gp.values));
    ExpDecayFunction shift_minus;
    shift_minus.decay = 0.0;
    shift_minus.side = Side::Minus;
    shift_minus.values = (f.Jplus * matrix_exp(f.Qplus * level_sum)).apply(gp.values);
    const TwoSidedResult xi_plus = two_sided(model, gp, zero_minus, lminus, lplus, 0.0);
    const TwoSidedResult xi_cont = two_sided(model, zero_plus, shift_minus, lminus, lplus, 0.0);
    for (int i = 0; i < model.dim(); ++i)
      worst_identity = std::max(worst_identity,
                                std::abs(lhs_plus[i] - xi_plus.joint[i] - xi_cont.joint[i]));

    ExpDecayFunction gm = flat_payoff(model, Side::Minus);
    for (double& v : gm.values) v = rng.uniform();
    const auto lhs_minus =
        model.to_original_order(stacked_passage(model, f, Side::Minus, lminus).apply(gm.values));
    ExpDecayFunction shift_plus;
    shift_plus.decay = 0.0;
    shift_plus.side = Side::Plus;
    shift_plus.values = (f.Jminus * matrix_exp(f.Qminus * level_sum)).apply(gm.values);
    const TwoSidedResult xi_minus = two_sided(model, zero_plus, gm, lminus, lplus, 0.0);
    const TwoSidedResult xi_mirror = two_sided(model, shift_plus, zero_minus, lminus, lplus, 0.0);
    for (int i = 0; i < model.dim(); ++i)
      worst_identity = std::max(worst_identity,
                                std::abs(lhs_minus[i] - xi_minus.joint[i] - xi_mirror.joint[i]));

    const auto ones_p = flat_payoff(model, Side::Plus);
    const auto ones_m = flat_payoff(model, Side::Minus);
    const TwoSidedResult via_resolvent =
        two_sided(model, ones_p, ones_m, lminus, lplus, 0.0, TwoSidedMethod::Resolvent);
    const TwoSidedResult via_series = two_sided(model, ones_p, ones_m, lminus, lplus, 0.0,
                                                TwoSidedMethod::Neumann, {}, {.tolerance = 1e-9});
    for (int i = 0; i < model.dim(); ++i) {
      const double gap = std::abs(via_series.joint[i] - via_resolvent.joint[i]);
      out.require(gap <= via_series.truncation_bound + 1e-13,
                  "method gap " + fmt(gap) + " > tail " + fmt(via_series.truncation_bound));
    }
  }
  out.require(worst_identity <= 1e-8, "identity residual " + fmt(worst_identity));
  out.detail = "worst identity residual " + fmt(worst_identity);
  return out;
}

// 5. Two-sided Monte Carlo agreement with the analytic joint value.
Outcome criterion5() {
  Outcome out;
  const ValidatedModel model = ValidatedModel::validate(testing::killed_two_state());
  const TwoSidedResult analytic = two_sided(model, flat_payoff(model, Side::Plus),
                                            flat_payoff(model, Side::Minus), 0.5, 0.5, 0.0);
  McParams params;
  params.paths = 100000;
  params.seed = 0x70D05EED;
  const EstimateWithCI est =
      estimate(model,
               McQuery{JointExitQuery{0.5, 0.5, flat_payoff(model, Side::Plus),
                                      flat_payoff(model, Side::Minus)}},
               0.0, 0, params);
  const double z = std::abs(est.mean - analytic.joint[0]) /
                   std::max(est.std_error, 1e-300);
  out.require(z <= 3.0 + est.truncation_bias / std::max(est.std_error, 1e-300),
              "|z| = " + fmt(z));
  out.detail = "analytic " + fmt(analytic.joint[0]) + ", mc " + fmt(est.mean) + ", |z| " + fmt(z);
  return out;
}

// 6. Contraction constant: closed form, quadrature, and the series tail.
Outcome criterion6() {
  Outcome out;
  out.require(contraction_constant(1.0, 1.0) == 1.0 / 3.0, "C(K=c) != 1/3 exactly");
  out.require(contraction_constant(7.25, 7.25) == 1.0 / 3.0, "C(K=c) != 1/3 exactly");

  Xoshiro256pp rng(606);
  double worst_quadrature = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const double K = 0.25 + 4.0 * rng.uniform();
    const double c = 0.25 + 4.0 * rng.uniform();
    const double a = K / c;
    const double numeric = quadrature(
        [a](double x) {
          const double base = 1.0 - std::pow(1.0 - x, a);
          return base * base;
        },
        0.0, 1.0, 1e-13);
    worst_quadrature = std::max(worst_quadrature, std::abs(contraction_constant(K, c) - numeric));
  }
  out.require(worst_quadrature <= 1e-10, "quadrature gap " + fmt(worst_quadrature));

  // Tail envelope of the killed two-state composite at L = 1 (f = 1).
  const WienerHopfFactors f =
      tilt_factorize(ValidatedModel::validate(testing::killed_two_state()), 0.0);
  const double cycle = composite_cycle(f, Side::Plus, 1.0)(0, 0);
  const double full = 1.0 / (1.0 - cycle);
  const double ratio = contraction_constant(2.0, 1.0);  // K = 2, effective decay 1
  double partial = 0.0, term = 1.0;
  for (int n = 0; n <= 30; ++n) {
    partial += term;
    term *= cycle;
    const double tail = full - partial;
    const double envelope = std::pow(ratio, n + 1) / (1.0 - ratio);
    out.require(tail <= envelope + 1e-15,
                "tail " + fmt(tail) + " > envelope " + fmt(envelope) + " at N=" + std::to_string(n));
  }
  out.detail = "worst quadrature gap " + fmt(worst_quadrature) + ", C(2,1) = " + fmt(ratio);
  return out;
}

// 7. Double-jump window bound, nested estimator on both stock models.
Outcome criterion7() {
  Outcome out;
  for (const ModelSpec& spec : {testing::killed_two_state(), testing::conservative_two_state()}) {
    const ValidatedModel model = ValidatedModel::validate(spec);
    const EstimateWithCI est =
        composite_cycle_estimate(model, 1.0, 0.2, 0.2, 0.0, 0, 10000, 100, 0xAB5EED);
    const double K = model.uniform_bound();
    const double bound = (1.0 - std::exp(-K)) * (1.0 - std::exp(-K));
    out.require(est.mean <= bound + 3.0 * est.std_error,
                "estimate " + fmt(est.mean) + " > bound " + fmt(bound) + " + 3se");
    if (!out.detail.empty()) out.detail += "; ";
    out.detail += "K=" + fmt(K) + ": " + fmt(est.mean) + " <= " + fmt(bound) + " + " +
                  fmt(3.0 * est.std_error);
  }
  return out;
}

// 8. Decomposition identity on the inhomogeneous two-segment schedule.
Outcome criterion8() {
  Outcome out;
  const ValidatedModel model = ValidatedModel::validate(testing::two_segment_switch());
  const DecompositionReport rep =
      verify_decomposition(model, 0.5, 0.4, 0.4, 0.0, 0, 100000, 1000, 0x1A2B3C);
  out.require(std::abs(rep.z) <= 3.0, "|z| = " + fmt(std::abs(rep.z)));
  out.detail = "lhs " + fmt(rep.lhs.mean) + ", rhs " + fmt(rep.rhs.mean) + ", z " + fmt(rep.z);
  return out;
}

// 9. Pre-exit law: hybrid vs direct, and the complement identity.
Outcome criterion9() {
  Outcome out;
  const ValidatedModel model = ValidatedModel::validate(testing::killed_two_state());
  const std::vector<double> h{1.0, 0.0};
  McParams params;
  params.paths = 100000;
  params.seed = 0x9E9E9E;
  const PreExitResult hybrid = pre_exit_law(model, h, 2.0, 0.5, 0.5, 0.0, 0, params);

  PreExitQuery direct;
  direct.h = h;
  direct.T = 2.0;
  direct.lminus = 0.5;
  direct.lplus = 0.5;
  McParams direct_params = params;
  direct_params.seed = 0xD12EC7;
  const EstimateWithCI direct_est = estimate(model, McQuery{direct}, 0.0, 0, direct_params);
  const double pooled = std::hypot(hybrid.restricted.std_error, direct_est.std_error);
  const double z = std::abs(hybrid.restricted.mean - direct_est.mean) / std::max(pooled, 1e-300);
  out.require(z <= 3.0, "hybrid-vs-direct |z| = " + fmt(z));

  direct.complement = true;
  direct_params.seed = 0xC0815;
  const EstimateWithCI comp = estimate(model, McQuery{direct}, 0.0, 0, direct_params);
  const double reconstruction = hybrid.restricted.mean + comp.mean;
  const double pooled2 = std::hypot(hybrid.restricted.std_error, comp.std_error);
  const double gap = std::abs(reconstruction - hybrid.evolution_value);
  out.require(gap <= 3.0 * pooled2, "complement gap " + fmt(gap) + " > " + fmt(3.0 * pooled2));
  out.detail = "hybrid " + fmt(hybrid.restricted.mean) + ", direct " + fmt(direct_est.mean) +
               ", U reconstruction gap " + fmt(gap);
  return out;
}

// 10. Structural battery: exit-state inclusion and outcome partition over one
// million paths, sub-Markovian bounds on every emitted matrix, and the
// passage-norm bounds on random killed models.
Outcome criterion10() {
  Outcome out;

  const ValidatedModel killed = ValidatedModel::validate(testing::killed_two_state());
  Xoshiro256pp rng(0xBA77E2);
  const ValidatedModel random4 = ValidatedModel::validate(
      testing::random_killed_model(rng, {.max_dim = 4, .kill_lo = 0.75, .kill_hi = 1.5}));
  long long total = 0;
  for (const ValidatedModel* model : {&killed, &random4}) {
    const long long n = 500000;
    const OutcomeCounts counts = outcome_battery(*model, 0.0, 0, 0.5, 0.5, 9.5, n, 0xC0C0A);
    out.require(counts.up + counts.down + counts.neither == n, "partition counts do not sum to N");
    out.require(counts.side_violations == 0,
                std::to_string(counts.side_violations) + " side violations");
    total += n;
  }

  // Factor matrices stay sub-Markovian across random draws.
  double worst_row_excess = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const ValidatedModel model =
        ValidatedModel::validate(testing::random_killed_model(rng, {.max_dim = 5}));
    const WienerHopfFactors f = tilt_factorize(model, 0.0);
    for (const DenseMatrix* j : {&f.Jplus, &f.Jminus}) {
      for (int r = 0; r < j->rows(); ++r) {
        double row = 0.0;
        for (int c = 0; c < j->cols(); ++c) {
          out.require((*j)(r, c) >= -1e-9 && (*j)(r, c) <= 1.0 + 1e-9, "J entry out of [0,1]");
          row += (*j)(r, c);
        }
        worst_row_excess = std::max(worst_row_excess, row - 1.0);
      }
    }
    for (const DenseMatrix* q : {&f.Qplus, &f.Qminus}) {
      for (int r = 0; r < q->rows(); ++r) {
        double row = 0.0;
        for (int c = 0; c < q->cols(); ++c) {
          if (r != c) out.require((*q)(r, c) >= -1e-9, "Q off-diagonal negative");
          row += (*q)(r, c);
        }
        out.require(row <= 1e-9, "Q row sum positive");
      }
    }
  }
  out.require(worst_row_excess <= 1e-9, "J row sum exceeds 1 by " + fmt(worst_row_excess));

  // Passage-norm bounds on 20 random killed models. The level and killing
  // draws keep c_min * l / ||v|| >= 0.75 > ln 2, where the complementary
  // form below is implied by the survival bound; at smaller arguments only
  // the survival bound holds.
  double worst_margin = 1.0;
  for (int trial = 0; trial < 20; ++trial) {
    const ValidatedModel model = ValidatedModel::validate(testing::random_killed_model(
        rng, {.max_dim = 5, .kill_lo = 1.0, .kill_hi = 2.0, .vel_lo = 0.5, .vel_hi = 1.0}));
    const WienerHopfFactors f = tilt_factorize(model, 0.0);
    const double level = 0.75 + 1.25 * rng.uniform();
    const double x = model.killing_floor() * level / model.max_abs_velocity();
    const double survival_bound = std::exp(-x);
    const double complementary_bound = 1.0 - std::exp(-x);
    for (const DenseMatrix* q : {&f.Qplus, &f.Qminus}) {
      const double norm = matrix_exp(*q * level).inf_norm();
      out.require(norm <= survival_bound + 1e-9,
                  "norm " + fmt(norm) + " > e^{-c l / |v|} = " + fmt(survival_bound));
      out.require(norm <= complementary_bound + 1e-9,
                  "norm " + fmt(norm) + " > 1 - e^{-c l / |v|} = " + fmt(complementary_bound));
      worst_margin = std::min(worst_margin, complementary_bound - norm);
    }
  }
  out.detail = std::to_string(total) + " paths, worst norm margin " + fmt(worst_margin);
  return out;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    double budget_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "Wiener-Hopf closed-form oracle", 1.0, criterion1},
      {2, "zero-drift conservative oracle", 5.0, criterion2},
      {3, "analytic-vs-MC one-sided passage", 30.0, criterion3},
      {4, "two-sided matrix identity + method agreement", 10.0, criterion4},
      {5, "two-sided MC agreement", 60.0, criterion5},
      {6, "contraction constant and series tail", 5.0, criterion6},
      {7, "double-jump window bound", 120.0, criterion7},
      {8, "inhomogeneous decomposition", 600.0, criterion8},
      {9, "pre-exit law and complement identity", 60.0, criterion9},
      {10, "structural invariants battery", 300.0, criterion10},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criterion.run();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > criterion.budget_seconds) {
      outcome.pass = false;
      outcome.detail += (outcome.detail.empty() ? "" : "; ") + std::string("over time budget ") +
                        fmt(criterion.budget_seconds) + " s";
    }
    if (!outcome.pass) ++failures;
    std::printf("[%s] criterion %d: %s (%s) [%.2f s]\n", outcome.pass ? "PASS" : "FAIL",
                criterion.id, criterion.title, outcome.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures;
}
