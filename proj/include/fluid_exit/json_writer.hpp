#pragma once

#include <string>

#include <json.hpp>

namespace fluid_exit {

// Serializes a JSON document with every floating-point number rendered at 17
// significant digits, so emitted values round-trip bit-exactly.
std::string dump_json17(const nlohmann::json& doc, int indent = 2);

// %.17g rendering of a single double (also used for CSV cells).
std::string format_double17(double value);

}  // namespace fluid_exit
