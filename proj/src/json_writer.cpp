#include "fluid_exit/json_writer.hpp"

#include <cmath>
#include <cstdio>

namespace fluid_exit {

namespace {

using nlohmann::json;

void write_value(const json& v, int indent, int depth, std::string& out);

void write_indent(int indent, int depth, std::string& out) {
  if (indent <= 0) return;
  out.push_back('\n');
  out.append(static_cast<std::size_t>(indent) * depth, ' ');
}

void write_composite(const json& v, int indent, int depth, std::string& out) {
  const bool is_object = v.is_object();
  out.push_back(is_object ? '{' : '[');
  bool first = true;
  for (const auto& item : v.items()) {
    if (!first) out.push_back(',');
    first = false;
    write_indent(indent, depth + 1, out);
    if (is_object) {
      out += json(item.key()).dump();
      out += indent > 0 ? ": " : ":";
    }
    write_value(item.value(), indent, depth + 1, out);
  }
  if (!first) write_indent(indent, depth, out);
  out.push_back(is_object ? '}' : ']');
}

void write_value(const json& v, int indent, int depth, std::string& out) {
  if (v.is_number_float())
    out += format_double17(v.get<double>());
  else if (v.is_object() || v.is_array())
    write_composite(v, indent, depth, out);
  else
    out += v.dump();
}

}  // namespace

std::string format_double17(double value) {
  if (!std::isfinite(value)) return "null";  // JSON has no inf/nan
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string dump_json17(const json& doc, int indent) {
  std::string out;
  write_value(doc, indent, 0, out);
  return out;
}

}  // namespace fluid_exit
