#include "fluid_exit/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fluid_exit/errors.hpp"

namespace fluid_exit {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const char* where) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) known = true;
    if (!known)
      raise(Errc::BadModelFile, std::string("unknown key \"") + item.key() + "\" in " + where);
  }
}

DenseMatrix parse_matrix(const json& rows, const char* where) {
  if (!rows.is_array() || rows.empty())
    raise(Errc::BadModelFile, std::string(where) + ": matrix must be a nonempty array of rows");
  const int m = static_cast<int>(rows.size());
  DenseMatrix out(m, m);
  for (int i = 0; i < m; ++i) {
    const json& row = rows[i];
    if (!row.is_array() || static_cast<int>(row.size()) != m)
      raise(Errc::BadModelFile, std::string(where) + ": matrix must be square");
    for (int j = 0; j < m; ++j) {
      if (!row[j].is_number())
        raise(Errc::BadModelFile, std::string(where) + ": matrix entries must be numbers");
      out(i, j) = row[j].get<double>();
    }
  }
  return out;
}

}  // namespace

ModelSpec parse_model_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    raise(Errc::BadModelFile, std::string("JSON parse error: ") + e.what());
  }
  if (!doc.is_object()) raise(Errc::BadModelFile, "model file must hold a JSON object");
  reject_unknown_keys(doc, {"states", "velocities", "generator"}, "model");
  for (const char* key : {"states", "velocities", "generator"})
    if (!doc.contains(key)) raise(Errc::BadModelFile, std::string("missing key \"") + key + "\"");

  ModelSpec spec;
  if (!doc["states"].is_array()) raise(Errc::BadModelFile, "\"states\" must be an array");
  for (const auto& s : doc["states"]) {
    if (!s.is_string()) raise(Errc::BadModelFile, "state labels must be strings");
    spec.states.push_back(s.get<std::string>());
  }
  if (!doc["velocities"].is_array()) raise(Errc::BadModelFile, "\"velocities\" must be an array");
  for (const auto& v : doc["velocities"]) {
    if (!v.is_number()) raise(Errc::BadModelFile, "velocities must be numbers");
    spec.velocities.push_back(v.get<double>());
  }

  const json& gen = doc["generator"];
  if (!gen.is_object() || !gen.contains("type"))
    raise(Errc::BadModelFile, "\"generator\" must be an object with a \"type\"");
  const std::string type = gen["type"].is_string() ? gen["type"].get<std::string>() : "";
  if (type == "constant") {
    reject_unknown_keys(gen, {"type", "matrix"}, "generator");
    if (!gen.contains("matrix")) raise(Errc::BadModelFile, "constant generator needs \"matrix\"");
    spec.generator.matrices.push_back(parse_matrix(gen["matrix"], "generator"));
  } else if (type == "piecewise") {
    reject_unknown_keys(gen, {"type", "breakpoints", "matrices"}, "generator");
    if (!gen.contains("breakpoints") || !gen.contains("matrices"))
      raise(Errc::BadModelFile, "piecewise generator needs \"breakpoints\" and \"matrices\"");
    if (!gen["breakpoints"].is_array() || !gen["matrices"].is_array())
      raise(Errc::BadModelFile, "\"breakpoints\" and \"matrices\" must be arrays");
    for (const auto& t : gen["breakpoints"]) {
      if (!t.is_number()) raise(Errc::BadBreakpoints, "breakpoints must be numbers");
      spec.generator.breakpoints.push_back(t.get<double>());
    }
    for (const auto& m : gen["matrices"])
      spec.generator.matrices.push_back(parse_matrix(m, "generator"));
  } else {
    raise(Errc::BadModelFile, "generator type must be \"constant\" or \"piecewise\"");
  }
  return spec;
}

ModelSpec load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::IoFailure, "cannot open model file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) raise(Errc::IoFailure, "read error on model file: " + path);
  return parse_model_json(buf.str());
}

}  // namespace fluid_exit
