#pragma once

#include <stdexcept>
#include <string>

namespace fluid_exit {

// Error codes carried by every exception thrown from this library. The CLI
// maps categories to process exit codes (model -> 2, parameter -> 3, io -> 1).
enum class Errc {
  // model validation
  ZeroVelocity,
  EmptySidePartition,
  NegativeOffDiagonal,
  PositiveRowSum,
  BadBreakpoints,
  BadModelFile,
  // argument / state checks
  NegativeTime,
  BadTimeOrder,
  ShapeMismatch,
  NonPositiveArgument,
  PreconditionViolated,
  SideMismatch,
  // dense kernels
  Overflow,
  SingularMatrix,
  // factorization
  NoConvergence,
  SylvesterSingular,
  FactorizationFailed,
  // operator algebra / Monte Carlo
  DivergenceDetected,
  HorizonTooSmall,
  // file handling
  IoFailure,
};

const char* errc_name(Errc code);

class FluidError : public std::runtime_error {
 public:
  FluidError(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
  throw FluidError(code, message);
}

}  // namespace fluid_exit
