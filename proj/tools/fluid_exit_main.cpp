#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fluid_exit/errors.hpp"
#include "fluid_exit/estimates.hpp"
#include "fluid_exit/exit_operators.hpp"
#include "fluid_exit/json_writer.hpp"
#include "fluid_exit/mc_engine.hpp"
#include "fluid_exit/model.hpp"
#include "fluid_exit/model_io.hpp"
#include "fluid_exit/wiener_hopf.hpp"

namespace {

using namespace fluid_exit;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitModel = 2;
constexpr int kExitParameter = 3;
constexpr int kExitVerification = 4;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::IoFailure:
      return kExitIo;
    case Errc::ZeroVelocity:
    case Errc::EmptySidePartition:
    case Errc::NegativeOffDiagonal:
    case Errc::PositiveRowSum:
    case Errc::BadBreakpoints:
    case Errc::BadModelFile:
      return kExitModel;
    default:
      return kExitParameter;
  }
}

json matrix_to_json(const DenseMatrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

// Inline JSON array or @file indirection for payoff vectors.
std::vector<double> parse_vector_arg(const std::string& arg, const char* name) {
  std::string text = arg;
  if (!arg.empty() && arg[0] == '@') {
    std::ifstream in(arg.substr(1), std::ios::binary);
    if (!in) raise(Errc::IoFailure, std::string("cannot open ") + name + " file " + arg.substr(1));
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error&) {
    raise(Errc::PreconditionViolated, std::string(name) + " must be a JSON array of numbers");
  }
  if (!doc.is_array()) raise(Errc::PreconditionViolated, std::string(name) + " must be a JSON array");
  std::vector<double> out;
  for (const auto& v : doc) {
    if (!v.is_number()) raise(Errc::PreconditionViolated, std::string(name) + " entries must be numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

struct CommonArgs {
  std::string model_path;
  std::string format = "json";
};

ValidatedModel load_model(const CommonArgs& args) {
  return ValidatedModel::validate(load_model_file(args.model_path));
}

void require_homogeneous(const ValidatedModel& model) {
  if (!model.homogeneous())
    raise(Errc::BadModelFile, "analytic path requires constant schedule");
}

double default_decay(const ValidatedModel& model, const std::optional<double>& decay) {
  if (decay) {
    if (*decay < 0.0) raise(Errc::PreconditionViolated, "--decay must be >= 0");
    return *decay;
  }
  if (model.killing_floor() > 0.0) return 0.0;
  raise(Errc::PreconditionViolated,
        "--decay is required when the model has no killing floor");
}

ExpDecayFunction make_payoff(const ValidatedModel& model, Side side, double decay,
                             const std::optional<std::string>& arg, const char* name) {
  ExpDecayFunction g;
  g.decay = decay;
  g.side = side;
  if (arg) {
    g.values = parse_vector_arg(*arg, name);
    if (static_cast<int>(g.values.size()) != model.side_dim(side))
      raise(Errc::PreconditionViolated,
            std::string(name) + " must have one entry per state on its side");
  } else {
    g.values.assign(model.side_dim(side), 1.0);
  }
  return g;
}

void emit(const json& doc) { std::cout << dump_json17(doc) << "\n"; }

json estimate_to_json(const EstimateWithCI& est) {
  json out{{"mean", est.mean},  {"stderr", est.std_error},          {"n", est.n},
           {"seed", est.seed},  {"horizon", est.horizon},           {"truncationBias", est.truncation_bias}};
  if (!est.warning.empty()) out["warning"] = est.warning;
  return out;
}

const char* kind_name(CrossingResult::Kind kind) {
  switch (kind) {
    case CrossingResult::Kind::UpExit:
      return "up";
    case CrossingResult::Kind::DownExit:
      return "down";
    default:
      return "neither";
  }
}

// ---------------------------------------------------------------- validate
int cmd_validate(const CommonArgs& common) {
  const ValidatedModel model = load_model(common);
  json doc;
  doc["m"] = model.dim();
  doc["plusStates"] = model.plus_labels();
  doc["minusStates"] = model.minus_labels();
  doc["uniformBound"] = model.uniform_bound();
  doc["killingFloor"] = model.killing_floor();
  doc["homogeneous"] = model.homogeneous();
  emit(doc);
  return kExitOk;
}

// --------------------------------------------------------------- factorize
int cmd_factorize(const CommonArgs& common, std::optional<double> decay, double tol,
                  long long max_iter) {
  const ValidatedModel model = load_model(common);
  require_homogeneous(model);
  FactorizeOptions options;
  options.tol = tol;
  options.max_iter = max_iter;
  const double tilt = decay.value_or(0.0);
  if (tilt < 0.0) raise(Errc::PreconditionViolated, "--decay must be >= 0");
  const WienerHopfFactors factors = tilt_factorize(model, tilt, options);
  json doc;
  doc["tilt"] = factors.tilt;
  doc["plusStates"] = model.plus_labels();
  doc["minusStates"] = model.minus_labels();
  doc["Qplus"] = matrix_to_json(factors.Qplus);
  doc["Qminus"] = matrix_to_json(factors.Qminus);
  doc["Jplus"] = matrix_to_json(factors.Jplus);
  doc["Jminus"] = matrix_to_json(factors.Jminus);
  doc["residualNorm"] = factors.residual_norm;
  doc["iterations"] = factors.iterations;
  emit(doc);
  return kExitOk;
}

// -------------------------------------------------------------------- exit
int cmd_exit(const CommonArgs& common, double lminus, double lplus,
             std::optional<double> decay_arg, const std::optional<std::string>& fplus,
             const std::optional<std::string>& fminus, double s,
             const std::optional<std::string>& state, const std::string& method_name, double tol) {
  const ValidatedModel model = load_model(common);
  require_homogeneous(model);
  const double decay = default_decay(model, decay_arg);
  const ExpDecayFunction gplus = make_payoff(model, Side::Plus, decay, fplus, "--fplus");
  const ExpDecayFunction gminus = make_payoff(model, Side::Minus, decay, fminus, "--fminus");
  const TwoSidedMethod method =
      method_name == "neumann" ? TwoSidedMethod::Neumann : TwoSidedMethod::Resolvent;
  FactorizeOptions options;
  options.tol = tol;
  NeumannOptions neumann;
  neumann.tolerance = tol;
  const TwoSidedResult res =
      two_sided(model, gplus, gminus, lminus, lplus, s, method, options, neumann);

  json doc;
  doc["lminus"] = lminus;
  doc["lplus"] = lplus;
  doc["decay"] = decay;
  doc["time"] = s;
  doc["method"] = method == TwoSidedMethod::Neumann ? "neumann" : "resolvent";
  if (method == TwoSidedMethod::Neumann) {
    doc["neumannTerms"] = res.neumann_terms;
    doc["truncationBound"] = res.truncation_bound;
  }
  if (state) {
    const int internal = model.internal_index(*state);
    const int original = model.original_index(internal);
    doc["state"] = *state;
    doc["xiPlus"] = res.xi_plus[original];
    doc["xiMinus"] = res.xi_minus[original];
    doc["joint"] = res.joint[original];
  } else {
    json labels = json::array();
    for (int i = 0; i < model.dim(); ++i)
      labels.push_back(model.label(model.internal_index(i)));
    doc["states"] = labels;
    doc["xiPlus"] = res.xi_plus;
    doc["xiMinus"] = res.xi_minus;
    doc["joint"] = res.joint;
  }
  emit(doc);
  return kExitOk;
}

// ---------------------------------------------------------------- simulate
int cmd_simulate(const CommonArgs& common, const std::string& query_name,
                 const std::string& side_name, std::optional<double> lminus,
                 std::optional<double> lplus, std::optional<double> decay_arg,
                 const std::optional<std::string>& fplus, const std::optional<std::string>& fminus,
                 const std::optional<std::string>& h_arg, double s, const std::string& state,
                 std::optional<double> horizon, long long paths, std::uint64_t seed, bool complement) {
  const ValidatedModel model = load_model(common);
  const int start = model.original_index(model.internal_index(state));
  McParams params;
  params.paths = paths;
  params.seed = seed;
  if (horizon) params.horizon = *horizon;

  const Side side = side_name == "minus" ? Side::Minus : Side::Plus;
  McQuery query;
  if (query_name == "one-sided") {
    const double decay = default_decay(model, decay_arg);
    const double level = side == Side::Plus ? lplus.value_or(-1.0) : lminus.value_or(-1.0);
    if (level < 0.0)
      raise(Errc::PreconditionViolated, "one-sided needs the level flag for its side");
    query = OneSidedQuery{side, level,
                          make_payoff(model, side, decay, side == Side::Plus ? fplus : fminus,
                                      "payoff")};
  } else if (query_name == "two-sided-xi") {
    const double decay = default_decay(model, decay_arg);
    if (!lminus || !lplus)
      raise(Errc::PreconditionViolated, "two-sided-xi needs --lminus and --lplus");
    query = TwoSidedXiQuery{side, *lminus, *lplus,
                            make_payoff(model, side, decay, side == Side::Plus ? fplus : fminus,
                                        "payoff")};
  } else if (query_name == "joint") {
    const double decay = default_decay(model, decay_arg);
    if (!lminus || !lplus) raise(Errc::PreconditionViolated, "joint needs --lminus and --lplus");
    query = JointExitQuery{*lminus, *lplus, make_payoff(model, Side::Plus, decay, fplus, "--fplus"),
                           make_payoff(model, Side::Minus, decay, fminus, "--fminus")};
  } else if (query_name == "pre-exit") {
    if (!horizon) raise(Errc::PreconditionViolated, "pre-exit needs --horizon as the time window");
    if (!lminus || !lplus) raise(Errc::PreconditionViolated, "pre-exit needs --lminus and --lplus");
    if (!h_arg) raise(Errc::PreconditionViolated, "pre-exit needs --h");
    PreExitQuery pre;
    pre.h = parse_vector_arg(*h_arg, "--h");
    pre.T = *horizon;
    pre.lminus = *lminus;
    pre.lplus = *lplus;
    pre.complement = complement;
    params.horizon = std::numeric_limits<double>::quiet_NaN();
    query = std::move(pre);
  } else {
    raise(Errc::PreconditionViolated, "unknown query: " + query_name);
  }

  std::vector<PathRecord> records;
  const bool want_csv = common.format == "csv";
  const EstimateWithCI est =
      estimate(model, query, s, start, params, want_csv ? &records : nullptr);

  if (want_csv) {
    std::string out = "pathIndex,outcomeKind,exitTime,exitState,payoff\n";
    for (const PathRecord& rec : records) {
      out += std::to_string(rec.index);
      out += ',';
      out += kind_name(rec.kind);
      out += ',';
      if (rec.kind != CrossingResult::Kind::Neither) {
        out += format_double17(rec.exit_time);
        out += ',';
        out += model.label(model.internal_index(rec.exit_state));
      } else {
        out += ',';
      }
      out += ',';
      out += format_double17(rec.payoff);
      out += '\n';
    }
    std::cout << out;
    return kExitOk;
  }

  json doc = estimate_to_json(est);
  doc["query"] = query_name;
  doc["state"] = state;
  doc["time"] = s;
  emit(doc);
  return kExitOk;
}

// ---------------------------------------------------------------- pre-exit
int cmd_pre_exit(const CommonArgs& common, double T, double lminus, double lplus,
                 const std::string& h_arg, double s, const std::string& state, long long paths,
                 std::uint64_t seed) {
  const ValidatedModel model = load_model(common);
  const int start = model.original_index(model.internal_index(state));
  const std::vector<double> h = parse_vector_arg(h_arg, "--h");
  McParams params;
  params.paths = paths;
  params.seed = seed;
  const PreExitResult res = pre_exit_law(model, h, T, lminus, lplus, s, start, params);
  json doc;
  doc["T"] = T;
  doc["lminus"] = lminus;
  doc["lplus"] = lplus;
  doc["time"] = s;
  doc["state"] = state;
  doc["restricted"] = estimate_to_json(res.restricted);
  doc["evolution"] = res.evolution_value;
  if (res.evolution_std_error > 0.0) doc["evolutionStderr"] = res.evolution_std_error;
  doc["complement"] = res.complement_value;
  emit(doc);
  return kExitOk;
}

// ------------------------------------------------------------------ verify
struct CheckRow {
  std::string name;
  bool skipped = false;
  bool passed = false;
  double statistic = 0.0;
  double threshold = 0.0;
  std::string detail;
};

int cmd_verify(const CommonArgs& common, std::optional<double> decay_arg, double lminus,
               double lplus, double s, long long paths, long long inner, std::uint64_t seed,
               double tol, bool corrupt_factors) {
  const ValidatedModel model = load_model(common);
  const double decay = default_decay(model, decay_arg);
  std::vector<CheckRow> rows;

  // Factorization residual (analytic path only).
  {
    CheckRow row;
    row.name = "factorization-residual";
    if (!model.homogeneous()) {
      row.skipped = true;
      row.detail = "piecewise schedule";
    } else {
      WienerHopfFactors factors = tilt_factorize(model, decay);
      if (corrupt_factors) factors.Jplus(0, 0) += 0.1;  // negative control
      std::vector<double> vel(model.dim());
      for (int i = 0; i < model.dim(); ++i) vel[i] = model.velocity(i);
      row.statistic = residual(factors, model.generator_at(0.0), vel);
      row.threshold = tol;
      row.passed = row.statistic <= row.threshold;
    }
    rows.push_back(row);
  }

  const int start_plus = model.original_index(0);  // first up-state

  // One-sided Monte Carlo against the factor value (analytic path only).
  {
    CheckRow row;
    row.name = "mc-vs-analytic";
    if (!model.homogeneous()) {
      row.skipped = true;
      row.detail = "piecewise schedule";
    } else {
      ExpDecayFunction g;
      g.decay = decay;
      g.side = Side::Plus;
      g.values.assign(model.plus_dim(), 1.0);
      const auto analytic = one_sided(model, g, Side::Plus, lplus, s);
      McParams params;
      params.paths = paths;
      params.seed = derive_stream_key(seed, 11);
      const EstimateWithCI mc =
          estimate(model, McQuery{OneSidedQuery{Side::Plus, lplus, g}}, s, start_plus, params);
      const double denom = mc.std_error > 0.0 ? mc.std_error : 1.0;
      row.statistic = std::abs(mc.mean - analytic[start_plus]) / denom;
      row.threshold = 3.0;
      row.passed = row.statistic <= row.threshold + mc.truncation_bias / denom;
      row.detail = "analytic " + format_double17(analytic[start_plus]) + ", mc " +
                   format_double17(mc.mean);
    }
    rows.push_back(row);
  }

  // Passage decomposition identity (any schedule).
  {
    CheckRow row;
    row.name = "decomposition";
    const DecompositionReport rep = verify_decomposition(
        model, decay, lminus, lplus, s, start_plus, paths, inner, derive_stream_key(seed, 13));
    row.statistic = std::abs(rep.z);
    row.threshold = 3.0;
    row.passed = row.statistic <= row.threshold;
    row.detail = "lhs " + format_double17(rep.lhs.mean) + ", rhs " + format_double17(rep.rhs.mean);
    rows.push_back(row);
  }

  // Double-jump window bound (any schedule).
  {
    CheckRow row;
    row.name = "double-jump-bound";
    const double T = s + 1.0;
    const EstimateWithCI est = composite_cycle_estimate(model, T, lminus, lplus, s, start_plus,
                                                        paths, inner, derive_stream_key(seed, 17));
    const double K = model.uniform_bound();
    const double bound = (1.0 - std::exp(-K * (T - s))) * (1.0 - std::exp(-K * (T - s)));
    row.statistic = est.mean;
    row.threshold = bound + 3.0 * est.std_error;
    row.passed = row.statistic <= row.threshold;
    rows.push_back(row);
  }

  bool all_passed = true;
  for (const CheckRow& row : rows)
    if (!row.skipped && !row.passed) all_passed = false;

  if (common.format == "json") {
    json doc = json::array();
    for (const CheckRow& row : rows) {
      json item{{"check", row.name},
                {"status", row.skipped ? "skip" : (row.passed ? "pass" : "fail")},
                {"statistic", row.statistic},
                {"threshold", row.threshold}};
      if (!row.detail.empty()) item["detail"] = row.detail;
      doc.push_back(item);
    }
    emit(doc);
  } else {
    std::printf("%-24s %-6s %-24s %-24s %s\n", "check", "status", "statistic", "threshold",
                "detail");
    for (const CheckRow& row : rows)
      std::printf("%-24s %-6s %-24.17g %-24.17g %s\n", row.name.c_str(),
                  row.skipped ? "skip" : (row.passed ? "pass" : "fail"), row.statistic,
                  row.threshold, row.detail.c_str());
  }
  return all_passed ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-sided exit computations for Markov-modulated fluid levels"};
  app.require_subcommand(1);
  // --h is a payoff option below, so help stays long-form only.
  app.set_help_flag("--help", "print help");

  CommonArgs common;
  std::optional<double> decay;
  std::optional<double> lminus_opt, lplus_opt, horizon_opt;
  double lminus = 0.5, lplus = 0.5, start_time = 0.0;
  double tol = 1e-10;
  long long max_iter = 10000;
  long long paths = 100000, inner = 1000;
  std::uint64_t seed = 1;
  std::optional<std::string> fplus, fminus, h_arg, state_opt;
  std::string state, side_name = "plus", query_name = "one-sided", method = "resolvent";
  std::string h_required;
  bool corrupt = false, complement = false;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->set_help_flag("--help", "print help");
    cmd->add_option("--model", common.model_path, "model JSON file")->required();
    cmd->add_option("--format", common.format, "json|csv")
        ->check(CLI::IsMember({"json", "csv"}));
  };

  CLI::App* validate = app.add_subcommand("validate", "check a model file and print its summary");
  add_common(validate);

  CLI::App* factorize_cmd =
      app.add_subcommand("factorize", "first-passage factors of a homogeneous model");
  add_common(factorize_cmd);
  factorize_cmd->add_option("--decay", decay, "uniform tilt applied to the generator");
  factorize_cmd->add_option("--tol", tol, "convergence tolerance");
  factorize_cmd->add_option("--max-iter", max_iter, "iteration budget");

  CLI::App* exit_cmd = app.add_subcommand("exit", "two-sided exit expectations (analytic)");
  add_common(exit_cmd);
  exit_cmd->add_option("--lminus", lminus, "down barrier")->required();
  exit_cmd->add_option("--lplus", lplus, "up barrier")->required();
  exit_cmd->add_option("--decay", decay, "payoff decay rate c");
  exit_cmd->add_option("--fplus", fplus, "payoff on up-states: JSON array or @file");
  exit_cmd->add_option("--fminus", fminus, "payoff on down-states: JSON array or @file");
  exit_cmd->add_option("--time", start_time, "start time s");
  exit_cmd->add_option("--state", state_opt, "single start state label");
  exit_cmd->add_option("--method", method, "neumann|resolvent")
      ->check(CLI::IsMember({"neumann", "resolvent"}));
  exit_cmd->add_option("--tol", tol, "factorization / truncation tolerance");

  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo estimate of an exit query");
  add_common(simulate);
  simulate->add_option("--query", query_name, "one-sided|two-sided-xi|joint|pre-exit")
      ->check(CLI::IsMember({"one-sided", "two-sided-xi", "joint", "pre-exit"}));
  simulate->add_option("--side", side_name, "plus|minus")
      ->check(CLI::IsMember({"plus", "minus"}));
  simulate->add_option("--lminus", lminus_opt, "down barrier");
  simulate->add_option("--lplus", lplus_opt, "up barrier");
  simulate->add_option("--decay", decay, "payoff decay rate c");
  simulate->add_option("--fplus", fplus, "payoff on up-states");
  simulate->add_option("--fminus", fminus, "payoff on down-states");
  simulate->add_option("--h", h_arg, "terminal payoff over all states (pre-exit)");
  simulate->add_option("--time", start_time, "start time s");
  simulate->add_option("--state", state, "start state label")->required();
  simulate->add_option("--horizon", horizon_opt, "simulation cutoff (pre-exit: the window T)");
  simulate->add_option("-N,--paths", paths, "path count");
  simulate->add_option("--seed", seed, "master seed");
  simulate->add_flag("--complement", complement, "estimate the no-exit-by-T part (pre-exit)");

  CLI::App* verify = app.add_subcommand("verify", "statistical verification battery");
  add_common(verify);
  verify->add_option("--decay", decay, "payoff decay rate c");
  verify->add_option("--lminus", lminus, "down barrier");
  verify->add_option("--lplus", lplus, "up barrier");
  verify->add_option("--time", start_time, "start time s");
  verify->add_option("-N,--paths", paths, "outer path budget");
  verify->add_option("--ninner", inner, "nested path budget");
  verify->add_option("--seed", seed, "master seed");
  verify->add_option("--tol", tol, "residual threshold");
  verify->add_flag("--debug-corrupt-factors", corrupt,
                   "corrupt the factors before the residual check (negative control)");

  CLI::App* pre_exit = app.add_subcommand("pre-exit", "law of the state before the exit window");
  add_common(pre_exit);
  pre_exit->add_option("--horizon", horizon_opt, "time window T")->required();
  pre_exit->add_option("--lminus", lminus, "down barrier")->required();
  pre_exit->add_option("--lplus", lplus, "up barrier")->required();
  pre_exit->add_option("--h", h_required, "terminal payoff over all states")->required();
  pre_exit->add_option("--time", start_time, "start time s");
  pre_exit->add_option("--state", state, "start state label")->required();
  pre_exit->add_option("-N,--paths", paths, "path count");
  pre_exit->add_option("--seed", seed, "master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitParameter;
  }

  try {
    if (app.got_subcommand(validate)) return cmd_validate(common);
    if (app.got_subcommand(factorize_cmd)) return cmd_factorize(common, decay, tol, max_iter);
    if (app.got_subcommand(exit_cmd))
      return cmd_exit(common, lminus, lplus, decay, fplus, fminus, start_time, state_opt, method,
                      tol);
    if (app.got_subcommand(simulate))
      return cmd_simulate(common, query_name, side_name, lminus_opt, lplus_opt, decay, fplus,
                          fminus, h_arg, start_time, state, horizon_opt, paths, seed, complement);
    if (app.got_subcommand(verify))
      return cmd_verify(common, decay, lminus, lplus, start_time, paths, inner, seed, tol,
                        corrupt);
    if (app.got_subcommand(pre_exit))
      return cmd_pre_exit(common, *horizon_opt, lminus, lplus, h_required, start_time, state,
                          paths, seed);
  } catch (const FluidError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParameter;
  }
  return kExitParameter;
}
