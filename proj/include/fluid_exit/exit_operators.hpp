#pragma once

#include <span>
#include <vector>

#include "fluid_exit/dense_matrix.hpp"
#include "fluid_exit/estimates.hpp"
#include "fluid_exit/model.hpp"
#include "fluid_exit/wiener_hopf.hpp"

namespace fluid_exit {

// Payoff g(t, j) = e^{-c t} f(j) on one velocity side. This class is closed
// under every operator here (the decay turns into a uniform tilt of the
// generator), which keeps the whole analytic path finite-dimensional.
struct ExpDecayFunction {
  double decay = 0.0;          // c >= 0
  std::vector<double> values;  // f, indexed by the side's states
  Side side = Side::Plus;
};

// Closed form of int_0^1 (1 - (1-x)^{K/c})^2 dx; the geometric ratio
// certifying convergence of the exit Neumann series. Strictly inside (0, 1).
double contraction_constant(double K, double c);

// m x m_side passage matrix: rows on the g-side hold e^{l Q}, rows on the
// opposite side hold J e^{l Q} (first passage must cross level 0 first).
DenseMatrix stacked_passage(const ValidatedModel& model, const WienerHopfFactors& factors,
                            Side side, double level);

// Composite one-cycle matrix J^- e^{L Q^-} J^+ e^{L Q^+} acting on the given
// side's payoffs (mirrored for Side::Minus), with L = lminus + lplus.
DenseMatrix composite_cycle(const WienerHopfFactors& factors, Side side, double level_sum);

// E_{s,i}[ g(tau^{side}_level, X) ] for every start state i, evaluated
// through the tilted factors. Returned in original state order.
std::vector<double> one_sided(const ValidatedModel& model, const ExpDecayFunction& g, Side side,
                              double level, double s, const FactorizeOptions& options = {});

struct NeumannOptions {
  long long terms = -1;      // >= 0: fixed truncation; < 0: bound-driven
  double tolerance = 1e-10;  // tail-bound target for bound-driven truncation
};

struct NeumannResult {
  std::vector<double> value;  // sum_{n=0}^{N} M^n f
  long long terms = 0;        // N
  double tail_bound = 0.0;    // C^{N+1}/(1-C) * ||f||_inf
};

// Truncated Neumann sum with the certified geometric tail; K and c are the
// uniform rate bound and the effective decay fixing the contraction constant.
// Throws DivergenceDetected when partial terms escape the geometric envelope
// (a violated precondition upstream).
NeumannResult neumann_apply(const DenseMatrix& composite, std::span<const double> f, double K,
                            double c, const NeumannOptions& options = {});

enum class TwoSidedMethod { Neumann, Resolvent };

struct TwoSidedResult {
  std::vector<double> xi_plus;   // E_{s,.}[g+ at the up-exit], original order
  std::vector<double> xi_minus;  // E_{s,.}[g- at the down-exit]
  std::vector<double> joint;     // xi_plus + xi_minus
  TwoSidedMethod method = TwoSidedMethod::Resolvent;
  long long neumann_terms = 0;
  double truncation_bound = 0.0;  // 0 for the resolvent path
};

// Two-sided exit expectations for the corridor (-lminus, lplus): the value of
// the up-exit and down-exit operators applied to g+ and g-, plus their sum
// (the exit-time expectation of the glued payoff). Requires a homogeneous
// model and a common decay rate; decay 0 needs a strictly positive killing
// floor (the resolvent stays contractive through the killing alone).
TwoSidedResult two_sided(const ValidatedModel& model, const ExpDecayFunction& gplus,
                         const ExpDecayFunction& gminus, double lminus, double lplus, double s,
                         TwoSidedMethod method = TwoSidedMethod::Resolvent,
                         const FactorizeOptions& factorize_options = {},
                         const NeumannOptions& neumann_options = {});

// e^{(t-s) Lambda} in original state order: the transition matrix of the
// homogeneous chain with killed mass routed to the coffin (row-sum deficit).
DenseMatrix evolution_operator(const ValidatedModel& model, double s, double t);

struct PreExitResult {
  EstimateWithCI restricted;       // E_{s,i}[ h(X_T) 1{exit <= T} ]
  double evolution_value = 0.0;    // (U_{s,T} h)(i)
  double evolution_std_error = 0;  // 0 when computed analytically
  double complement_value = 0.0;   // evolution_value - restricted.mean
};

// Hybrid estimator of the pre-exit law: simulate to the two-sided exit and,
// on {exit time <= T}, accumulate the analytically propagated inner value
// E_{exit}[h(X_T)] (nested Monte Carlo when the schedule is not constant).
// h is indexed in original state order; start_state is an original index.
PreExitResult pre_exit_law(const ValidatedModel& model, std::span<const double> h, double T,
                           double lminus, double lplus, double s, int start_state,
                           const McParams& params);

}  // namespace fluid_exit
