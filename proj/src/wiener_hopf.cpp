#include "fluid_exit/wiener_hopf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fluid_exit/errors.hpp"

namespace fluid_exit {

namespace {

struct Blocks {
  int m_plus = 0, m_minus = 0;
  DenseMatrix app, apm, amp, amm;   // generator blocks
  DenseMatrix vp_inv, wm_inv;       // V+^{-1} and |V-|^{-1}
};

Blocks split_blocks(const DenseMatrix& gen, std::span<const double> vel) {
  const int m = gen.rows();
  if (!gen.square()) raise(Errc::ShapeMismatch, "generator must be square");
  if (static_cast<int>(vel.size()) != m)
    raise(Errc::ShapeMismatch, "velocity length does not match generator");

  int m_plus = 0;
  while (m_plus < m && vel[m_plus] > 0.0) ++m_plus;
  for (int i = m_plus; i < m; ++i)
    if (!(vel[i] < 0.0))
      raise(Errc::PreconditionViolated,
            "velocities must be nonzero and ordered positive-first");
  if (m_plus == 0 || m_plus == m)
    raise(Errc::PreconditionViolated, "both velocity signs are required");

  Blocks b;
  b.m_plus = m_plus;
  b.m_minus = m - m_plus;
  b.app = gen.block(0, 0, m_plus, m_plus);
  b.apm = gen.block(0, m_plus, m_plus, b.m_minus);
  b.amp = gen.block(m_plus, 0, b.m_minus, m_plus);
  b.amm = gen.block(m_plus, m_plus, b.m_minus, b.m_minus);
  b.vp_inv = DenseMatrix(m_plus, m_plus);
  for (int i = 0; i < m_plus; ++i) b.vp_inv(i, i) = 1.0 / vel[i];
  b.wm_inv = DenseMatrix(b.m_minus, b.m_minus);
  for (int i = 0; i < b.m_minus; ++i) b.wm_inv(i, i) = -1.0 / vel[m_plus + i];
  return b;
}

// One-sided fixed point: iterates J <- X where X solves X Q(J) + B X = C.
// Monotone from J = 0 for this class; stalls are caught by the residual gate.
struct SideState {
  DenseMatrix j, q;
  long long iterations = 0;
  double last_delta = 0.0;
};

void iterate_side(SideState& state, const DenseMatrix& a_own, const DenseMatrix& a_own_cross,
                  const DenseMatrix& a_other_cross, const DenseMatrix& a_other_own,
                  const DenseMatrix& v_own_inv, const DenseMatrix& v_other_inv, double tol,
                  long long max_iter) {
  const DenseMatrix b = v_other_inv * a_other_own;
  DenseMatrix c = v_other_inv * a_other_cross;
  c *= -1.0;

  for (long long it = 1; it <= max_iter; ++it) {
    state.q = v_own_inv * (a_own + a_own_cross * state.j);
    DenseMatrix next = [&] {
      try {
        return solve_sylvester(b, state.q, c);
      } catch (const FluidError& e) {
        if (e.code() == Errc::SingularMatrix)
          raise(Errc::SylvesterSingular, "inner Sylvester solve is singular");
        throw;
      }
    }();
    state.last_delta = (next - state.j).max_abs();
    state.j = std::move(next);
    ++state.iterations;
    if (state.last_delta <= tol) break;
  }
  state.q = v_own_inv * (a_own + a_own_cross * state.j);
}

std::string compact(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

}  // namespace

WienerHopfFactors factorize(const DenseMatrix& generator, std::span<const double> velocities,
                            const FactorizeOptions& options) {
  if (!(options.tol > 0.0) || options.tol > 1e-6)
    raise(Errc::PreconditionViolated, "tol must lie in (0, 1e-6]");
  if (options.max_iter < 1) raise(Errc::PreconditionViolated, "maxIter must be >= 1");

  const Blocks b = split_blocks(generator, velocities);
  const double slack = 1e-12 * std::max(1.0, generator.max_abs());
  for (int i = 0; i < generator.rows(); ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < generator.cols(); ++j) {
      if (i != j && generator(i, j) < 0.0)
        raise(Errc::PreconditionViolated, "generator has a negative off-diagonal entry");
      row_sum += generator(i, j);
    }
    if (row_sum > slack)
      raise(Errc::PreconditionViolated, "generator has a positive row sum");
  }

  SideState plus, minus;
  plus.j = DenseMatrix(b.m_minus, b.m_plus);
  minus.j = DenseMatrix(b.m_plus, b.m_minus);

  // Iterate until both the iterate change and the equation residual pass;
  // near-critical models need a few extra sweeps at a tighter change
  // threshold before the residual follows.
  const double residual_tol = options.effective_residual_tol();
  WienerHopfFactors factors;
  factors.tilt = 0.0;
  double tol = options.tol;
  while (true) {
    const long long budget = options.max_iter - std::max(plus.iterations, minus.iterations);
    if (budget > 0) {
      iterate_side(plus, b.app, b.apm, b.amp, b.amm, b.vp_inv, b.wm_inv, tol, budget);
      iterate_side(minus, b.amm, b.amp, b.apm, b.app, b.wm_inv, b.vp_inv, tol, budget);
    }
    factors.Qplus = plus.q;
    factors.Jplus = plus.j;
    factors.Qminus = minus.q;
    factors.Jminus = minus.j;
    factors.iterations = std::max(plus.iterations, minus.iterations);
    factors.residual_norm = residual(factors, generator, velocities);
    const double max_delta = std::max(plus.last_delta, minus.last_delta);
    if (max_delta <= options.tol && factors.residual_norm <= residual_tol) break;
    if (budget <= 0 || tol < 1e-306)
      raise(Errc::NoConvergence,
            "no convergence after " + std::to_string(factors.iterations) + " iterations (delta " +
                compact(max_delta) + ", residual " + compact(factors.residual_norm) + ")");
    tol *= 1e-2;  // push the fixed point further before rechecking
  }
  return factors;
}

WienerHopfFactors tilt_factorize(const DenseMatrix& generator, std::span<const double> velocities,
                                 double decay, const FactorizeOptions& options) {
  if (!(decay >= 0.0)) raise(Errc::PreconditionViolated, "decay rate must be >= 0");
  DenseMatrix killed = generator;
  for (int i = 0; i < killed.rows(); ++i) killed(i, i) -= decay;
  WienerHopfFactors factors = factorize(killed, velocities, options);
  factors.tilt = decay;
  return factors;
}

WienerHopfFactors tilt_factorize(const ValidatedModel& model, double decay,
                                 const FactorizeOptions& options) {
  if (!model.homogeneous())
    raise(Errc::PreconditionViolated, "analytic path requires a constant schedule");
  std::vector<double> vel(model.dim());
  for (int i = 0; i < model.dim(); ++i) vel[i] = model.velocity(i);
  return tilt_factorize(model.generator_at(0.0), vel, decay, options);
}

double residual(const WienerHopfFactors& factors, const DenseMatrix& generator,
                std::span<const double> velocities) {
  DenseMatrix tilted = generator;
  for (int i = 0; i < tilted.rows(); ++i) tilted(i, i) -= factors.tilt;
  const Blocks b = split_blocks(tilted, velocities);
  if (factors.Qplus.rows() != b.m_plus || factors.Qplus.cols() != b.m_plus ||
      factors.Qminus.rows() != b.m_minus || factors.Qminus.cols() != b.m_minus ||
      factors.Jplus.rows() != b.m_minus || factors.Jplus.cols() != b.m_plus ||
      factors.Jminus.rows() != b.m_plus || factors.Jminus.cols() != b.m_minus)
    raise(Errc::ShapeMismatch, "factor shapes do not match the generator partition");

  const DenseMatrix r1 = factors.Qplus - b.vp_inv * (b.app + b.apm * factors.Jplus);
  const DenseMatrix r2 =
      factors.Jplus * factors.Qplus + b.wm_inv * (b.amm * factors.Jplus) + b.wm_inv * b.amp;
  const DenseMatrix r3 = factors.Qminus - b.wm_inv * (b.amp * factors.Jminus + b.amm);
  const DenseMatrix r4 =
      factors.Jminus * factors.Qminus + b.vp_inv * (b.app * factors.Jminus) + b.vp_inv * b.apm;
  return std::max(std::max(r1.max_abs(), r2.max_abs()), std::max(r3.max_abs(), r4.max_abs()));
}

}  // namespace fluid_exit
