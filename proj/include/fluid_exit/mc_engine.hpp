#pragma once

#include <variant>
#include <vector>

#include "fluid_exit/estimates.hpp"
#include "fluid_exit/exit_operators.hpp"
#include "fluid_exit/model.hpp"
#include "fluid_exit/rng.hpp"

namespace fluid_exit {

// One simulated trajectory. states[k] is the state entered at epochs[k]; the
// start state occupies [start_time, epochs[0]). A killed path carries no
// epochs after kill_time. State indices are original (label) indices.
struct PathSample {
  double start_time = 0.0;
  int start_state = 0;
  std::vector<double> epochs;
  std::vector<int> states;
  bool killed = false;
  double kill_time = 0.0;  // meaningful when killed
  double horizon = 0.0;
};

// Exact-event simulation of the (possibly inhomogeneous) chain by thinning
// against the uniform rate bound K: propose at rate K, accept a change out of
// state j at time u with probability -Lambda_u(j,j)/K, then pick the target
// from the off-diagonal row (the row-sum deficit routes to the coffin).
PathSample sample_path(const ValidatedModel& model, double s, int start_state, double horizon,
                       Xoshiro256pp& rng);

struct CrossingResult {
  enum class Kind { UpExit, DownExit, Neither };
  Kind kind = Kind::Neither;
  double time = 0.0;  // exact crossing time when kind != Neither
  int state = -1;     // original index of the state occupied at the crossing
};

// First strict exit of the piecewise-linear level path from (-lminus, lplus),
// solved in closed form inside the crossing segment. Either level may be
// +infinity to disable that barrier. A level that is only touched at a jump
// into an opposing-velocity state does not count as crossed.
CrossingResult crossing(const PathSample& path, const ValidatedModel& model, double lminus,
                        double lplus);

// Per-path functionals.
struct OneSidedQuery {
  Side side = Side::Plus;
  double level = 0.0;
  ExpDecayFunction g;
};
struct TwoSidedXiQuery {
  Side side = Side::Plus;
  double lminus = 0.0, lplus = 0.0;
  ExpDecayFunction g;
};
struct JointExitQuery {
  double lminus = 0.0, lplus = 0.0;
  ExpDecayFunction gplus, gminus;
};
// Direct estimator of E[h(X_T) 1{exit <= T}] (or of the complementary
// E[h(X_T) 1{exit > T}]): simulate through T and read off both the exit flag
// and the terminal state. h is indexed in original state order.
struct PreExitQuery {
  std::vector<double> h;
  double T = 0.0;
  double lminus = 0.0, lplus = 0.0;
  bool complement = false;
};

using McQuery = std::variant<OneSidedQuery, TwoSidedXiQuery, JointExitQuery, PreExitQuery>;

struct PathRecord {
  long long index = 0;
  CrossingResult::Kind kind = CrossingResult::Kind::Neither;
  double exit_time = 0.0;
  int exit_state = -1;  // original index, -1 when no exit
  double payoff = 0.0;
};

// N independent paths on derived streams; exactly one of the exit outcomes
// holds per path and stopping times beyond the horizon count as no-exit (the
// induced censoring bound is reported). start_state is an original index.
EstimateWithCI estimate(const ValidatedModel& model, const McQuery& query, double s,
                        int start_state, const McParams& params,
                        std::vector<PathRecord>* records = nullptr);

struct DecompositionReport {
  EstimateWithCI lhs;  // direct one-sided expectation
  EstimateWithCI rhs;  // up-exit part + nested continuation after a down-exit
  double z = 0.0;
};

// Statistical check of the first-passage decomposition with g+ = e^{-c t}:
// the one-sided up-passage expectation must match the up-exit contribution
// plus the nested continuation value collected at the down-exit. Valid for
// any schedule; the inner estimator is unbiased and enters linearly.
DecompositionReport verify_decomposition(const ValidatedModel& model, double decay, double lminus,
                                         double lplus, double s, int start_state, long long n_outer,
                                         long long n_inner, std::uint64_t seed, int threads = 0);

// Nested two-stage estimator of the one-cycle composite applied to the time
// window indicator 1_{[0,T]}: outer paths run to the down-passage of
// lminus+lplus, inner paths continue to the matching up-passage. start_state
// must be an up-state.
EstimateWithCI composite_cycle_estimate(const ValidatedModel& model, double T, double lminus,
                                        double lplus, double s, int start_state, long long n_outer,
                                        long long n_inner, std::uint64_t seed, int threads = 0);

struct OutcomeCounts {
  long long up = 0, down = 0, neither = 0;
  long long side_violations = 0;  // exits landing on the wrong velocity side
};

// Batch outcome tally via sample_path + crossing (used by the structural
// battery: partition counts and the exit-state side inclusion).
OutcomeCounts outcome_battery(const ValidatedModel& model, double s, int start_state,
                              double lminus, double lplus, double horizon, long long n,
                              std::uint64_t seed, int threads = 0);

}  // namespace fluid_exit
