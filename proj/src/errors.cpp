#include "fluid_exit/errors.hpp"

namespace fluid_exit {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::ZeroVelocity:
      return "ZeroVelocity";
    case Errc::EmptySidePartition:
      return "EmptySidePartition";
    case Errc::NegativeOffDiagonal:
      return "NegativeOffDiagonal";
    case Errc::PositiveRowSum:
      return "PositiveRowSum";
    case Errc::BadBreakpoints:
      return "BadBreakpoints";
    case Errc::BadModelFile:
      return "BadModelFile";
    case Errc::NegativeTime:
      return "NegativeTime";
    case Errc::BadTimeOrder:
      return "BadTimeOrder";
    case Errc::ShapeMismatch:
      return "ShapeMismatch";
    case Errc::NonPositiveArgument:
      return "NonPositiveArgument";
    case Errc::PreconditionViolated:
      return "PreconditionViolated";
    case Errc::SideMismatch:
      return "SideMismatch";
    case Errc::Overflow:
      return "Overflow";
    case Errc::SingularMatrix:
      return "SingularMatrix";
    case Errc::NoConvergence:
      return "NoConvergence";
    case Errc::SylvesterSingular:
      return "SylvesterSingular";
    case Errc::FactorizationFailed:
      return "FactorizationFailed";
    case Errc::DivergenceDetected:
      return "DivergenceDetected";
    case Errc::HorizonTooSmall:
      return "HorizonTooSmall";
    case Errc::IoFailure:
      return "IoFailure";
  }
  return "UnknownError";
}

}  // namespace fluid_exit
