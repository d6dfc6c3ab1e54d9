#pragma once

#include <string>

#include "fluid_exit/model.hpp"

namespace fluid_exit {

// Parses a model description of the form
//   {"states": ["u","d"], "velocities": [1.0,-1.0],
//    "generator": {"type": "constant", "matrix": [[-1,1],[1,-1]]}}
// or, for a piecewise-constant schedule,
//   "generator": {"type": "piecewise", "breakpoints": [1.0],
//                 "matrices": [[[...]], [[...]]]}
// Unknown keys are rejected. Throws BadModelFile / BadBreakpoints on schema
// violations and IoFailure when the file cannot be read.
ModelSpec parse_model_json(const std::string& text);
ModelSpec load_model_file(const std::string& path);

}  // namespace fluid_exit
