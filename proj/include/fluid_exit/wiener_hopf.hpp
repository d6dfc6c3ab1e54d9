#pragma once

#include <span>

#include "fluid_exit/dense_matrix.hpp"
#include "fluid_exit/model.hpp"

namespace fluid_exit {

// First-passage factors of a homogeneous model. With the block partition
// L = [L++ L+-; L-+ L--] and V+ = diag(v on E+), |V-| = diag(-v on E-), the
// factors solve the coupled equations
//   Q+ = V+^{-1} (L++ + L+- J+),   J+ Q+ + |V-|^{-1} L-- J+ + |V-|^{-1} L-+ = 0
// and the mirrored pair for (Q-, J-). J+(i,k) is the probability that the
// level process started at 0 from i in E- first passes 0 upward alive in
// state k; e^{l Q+} propagates passage probabilities across level l.
struct WienerHopfFactors {
  DenseMatrix Qplus;   // m+ x m+ sub-generator (per unit level)
  DenseMatrix Qminus;  // m- x m- sub-generator
  DenseMatrix Jplus;   // m- x m+ passage probabilities at level 0
  DenseMatrix Jminus;  // m+ x m-
  double tilt = 0.0;   // uniform killing rate subtracted from the generator
  double residual_norm = 0.0;
  long long iterations = 0;
};

struct FactorizeOptions {
  double tol = 1e-10;          // successive-iterate change threshold
  long long max_iter = 10000;
  // Residual acceptance threshold; non-positive means "same as tol". Kept
  // separate because near a defective fixed point the final residual sits at
  // the same order as the iterate change.
  double residual_tol = 0.0;

  double effective_residual_tol() const { return residual_tol > 0.0 ? residual_tol : tol; }
};

// Fixed-point factorization: J starts at zero and alternates with a Sylvester
// solve for the coupled equation until the iterates settle and the residual
// passes. Requires velocities ordered positive-first (the validated model's
// internal order) with both signs present. Throws NoConvergence or
// SylvesterSingular.
WienerHopfFactors factorize(const DenseMatrix& generator, std::span<const double> velocities,
                            const FactorizeOptions& options = {});

// Factorization of the uniformly killed generator L - c I, recording the
// tilt. For payoffs e^{-c t} f(j) the one-sided expectations of the original
// model reduce to matrix algebra in these tilted factors.
WienerHopfFactors tilt_factorize(const DenseMatrix& generator, std::span<const double> velocities,
                                 double decay, const FactorizeOptions& options = {});

// Convenience overload for a homogeneous validated model (internal order).
WienerHopfFactors tilt_factorize(const ValidatedModel& model, double decay,
                                 const FactorizeOptions& options = {});

// Max-norm over the four block-equation residuals of the given factors
// against L - tilt I. Throws ShapeMismatch on inconsistent dimensions.
double residual(const WienerHopfFactors& factors, const DenseMatrix& generator,
                std::span<const double> velocities);

}  // namespace fluid_exit
