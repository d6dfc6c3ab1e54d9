#include "fluid_exit/mc_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <thread>

#include "fluid_exit/errors.hpp"

namespace fluid_exit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int effective_threads(int requested, long long n) {
  int t = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FLUID_EXIT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) t = std::min(t, cap);
  }
  if (t < 1) t = 1;
  const long long useful = std::max<long long>(1, n / 512);
  return static_cast<int>(std::min<long long>(t, useful));
}

// Thinning walker over the inhomogeneous chain (internal state indices).
class Walker {
 public:
  enum class Event { Jump, Killed, Horizon };
  struct Step {
    double t0 = 0.0, t1 = 0.0;
    int state = 0;       // state occupied on [t0, t1)
    Event event = Event::Horizon;
    int next_state = -1;  // valid for Event::Jump
  };

  Walker(const ValidatedModel& model, double s, int internal_state, double horizon,
         Xoshiro256pp& rng)
      : model_(model), t_(s), state_(internal_state), horizon_(horizon), rng_(rng),
        rate_(model.uniform_bound()) {}

  bool done() const { return done_; }

  Step advance() {
    Step seg;
    seg.t0 = t_;
    seg.state = state_;
    if (rate_ <= 0.0) {  // all segments have zero intensity
      seg.t1 = horizon_;
      seg.event = Event::Horizon;
      t_ = horizon_;
      done_ = true;
      return seg;
    }
    while (true) {
      const double proposal = t_ + rng_.exponential(rate_);
      if (proposal >= horizon_) {
        seg.t1 = horizon_;
        seg.event = Event::Horizon;
        t_ = horizon_;
        done_ = true;
        return seg;
      }
      const DenseMatrix& gen = model_.generator_at(proposal);
      const double intensity = -gen(state_, state_);
      if (rng_.uniform() * rate_ <= intensity) {
        // A real event: pick the target from the off-diagonal row; the
        // row-sum deficit is the killing hazard.
        double w = rng_.uniform() * intensity;
        double acc = 0.0;
        int target = -1;
        for (int k = 0; k < model_.dim(); ++k) {
          if (k == state_) continue;
          acc += gen(state_, k);
          if (w <= acc) {
            target = k;
            break;
          }
        }
        seg.t1 = proposal;
        t_ = proposal;
        if (target >= 0) {
          seg.event = Event::Jump;
          seg.next_state = target;
          state_ = target;
        } else {
          seg.event = Event::Killed;
          done_ = true;
        }
        return seg;
      }
      t_ = proposal;  // thinned proposal; the state holds
    }
  }

 private:
  const ValidatedModel& model_;
  double t_;
  int state_;
  double horizon_;
  Xoshiro256pp& rng_;
  double rate_;
  bool done_ = false;
};

// First strict barrier crossing inside one linear segment. Returns +1 (up),
// -1 (down) or 0, writing the exact crossing time. A value only touched at
// the segment end is not a crossing; the following segment decides.
int segment_crossing(double phi0, double slope, double t0, double t1, double lminus, double lplus,
                     double& tc) {
  if (slope > 0.0) {
    const double phi1 = phi0 + slope * (t1 - t0);
    if (phi1 > lplus) {
      tc = std::clamp(t0 + (lplus - phi0) / slope, t0, t1);
      return 1;
    }
  } else if (slope < 0.0) {
    const double phi1 = phi0 + slope * (t1 - t0);
    if (phi1 < -lminus) {
      tc = std::clamp(t0 + (-lminus - phi0) / slope, t0, t1);
      return -1;
    }
  }
  return 0;
}

void check_levels(double lminus, double lplus) {
  if (!(lminus >= 0.0) || !(lplus >= 0.0))
    raise(Errc::PreconditionViolated, "exit levels must be >= 0");
}

int checked_internal(const ValidatedModel& model, int original) {
  if (original < 0 || original >= model.dim())
    raise(Errc::PreconditionViolated, "start state index out of range");
  return model.internal_index(original);
}

// Fused sample-and-detect: walks the chain and reports the first exit from
// (-lminus, lplus), or Neither on kill/horizon. Same segment logic as
// crossing() over a materialized path.
CrossingResult simulate_crossing(const ValidatedModel& model, double s, int internal_state,
                                 double lminus, double lplus, double horizon, Xoshiro256pp& rng) {
  Walker walker(model, s, internal_state, horizon, rng);
  double phi = 0.0;
  while (!walker.done()) {
    const Walker::Step seg = walker.advance();
    const double slope = model.velocity(seg.state);
    double tc = 0.0;
    const int hit = segment_crossing(phi, slope, seg.t0, seg.t1, lminus, lplus, tc);
    if (hit != 0)
      return {hit > 0 ? CrossingResult::Kind::UpExit : CrossingResult::Kind::DownExit, tc,
              model.original_index(seg.state)};
    phi += slope * (seg.t1 - seg.t0);
  }
  return {};
}

// Walks to the terminal time while tracking the first barrier crossing on
// the way; used by the direct pre-exit estimators.
struct ThroughOutcome {
  CrossingResult crossing;  // Neither when no exit before the horizon
  bool alive = false;
  int terminal_state = -1;  // internal; valid when alive
};

ThroughOutcome simulate_through(const ValidatedModel& model, double s, int internal_state,
                                double lminus, double lplus, double horizon, Xoshiro256pp& rng) {
  Walker walker(model, s, internal_state, horizon, rng);
  ThroughOutcome out;
  double phi = 0.0;
  int current = internal_state;
  while (!walker.done()) {
    const Walker::Step seg = walker.advance();
    current = seg.state;
    if (out.crossing.kind == CrossingResult::Kind::Neither) {
      const double slope = model.velocity(seg.state);
      double tc = 0.0;
      const int hit = segment_crossing(phi, slope, seg.t0, seg.t1, lminus, lplus, tc);
      if (hit != 0)
        out.crossing = {hit > 0 ? CrossingResult::Kind::UpExit : CrossingResult::Kind::DownExit,
                        tc, model.original_index(seg.state)};
      phi += slope * (seg.t1 - seg.t0);
    }
    if (seg.event == Walker::Event::Horizon) {
      out.alive = true;
      out.terminal_state = current;
    } else if (seg.event == Walker::Event::Jump) {
      current = seg.next_state;
    }
  }
  return out;
}

// Walks from (s, state) to the fixed time t; reports survival and the state.
ThroughOutcome simulate_to_time(const ValidatedModel& model, double s, int internal_state,
                                double t, Xoshiro256pp& rng) {
  return simulate_through(model, s, internal_state, kInf, kInf, t, rng);
}

struct HorizonInfo {
  double horizon = 0.0;
  double bias = 0.0;
  std::string warning;
};

HorizonInfo resolve_horizon(const ValidatedModel& model, double s, double decay,
                            double payoff_norm, const McParams& params) {
  const double rate = decay + model.killing_floor();
  HorizonInfo info;
  if (std::isnan(params.horizon)) {
    if (!(rate > 0.0))
      raise(Errc::HorizonTooSmall,
            "no automatic horizon: decay + killing floor is 0, pass --horizon explicitly");
    info.horizon = s + std::log(1.0 / params.bias_target) / rate;
    info.bias = params.bias_target * payoff_norm * std::exp(-decay * s);
    return info;
  }
  if (!(params.horizon > s))
    raise(Errc::PreconditionViolated, "horizon must exceed the start time");
  info.horizon = params.horizon;
  info.bias = rate > 0.0
                  ? payoff_norm * std::exp(-decay * s - rate * (params.horizon - s))
                  : payoff_norm;
  if (info.bias > params.bias_target * payoff_norm * (1.0 + 1e-12))
    info.warning = "censored-mass bound " + std::to_string(info.bias) +
                   " exceeds the requested tolerance; extend the horizon";
  return info;
}

template <class Payoff>  // double(long long index, Xoshiro256pp&)
EstimateWithCI run_mc(long long n, std::uint64_t seed, int threads, Payoff&& payoff) {
  std::vector<double> values(static_cast<std::size_t>(n));
  const int nt = effective_threads(threads, n);
  if (nt <= 1) {
    for (long long k = 0; k < n; ++k) {
      Xoshiro256pp rng(derive_stream_key(seed, static_cast<std::uint64_t>(k)));
      values[static_cast<std::size_t>(k)] = payoff(k, rng);
    }
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const long long chunk = (n + nt - 1) / nt;
    for (int w = 0; w < nt; ++w) {
      const long long lo = w * chunk;
      const long long hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi] {
        try {
          for (long long k = lo; k < hi; ++k) {
            Xoshiro256pp rng(derive_stream_key(seed, static_cast<std::uint64_t>(k)));
            values[static_cast<std::size_t>(k)] = payoff(k, rng);
          }
        } catch (...) {
          std::scoped_lock lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  const MeanStderr ms = mean_stderr(values);
  EstimateWithCI est;
  est.mean = ms.mean;
  est.std_error = ms.stderror;
  est.n = n;
  est.seed = seed;
  return est;
}

double payoff_norm(const ExpDecayFunction& g) {
  double best = 0.0;
  for (double v : g.values) best = std::max(best, std::abs(v));
  return best;
}

double eval_payoff(const ValidatedModel& model, const ExpDecayFunction& g, double t,
                   int original_state) {
  const int internal = model.internal_index(original_state);
  return std::exp(-g.decay * t) * g.values[static_cast<std::size_t>(model.side_offset(internal))];
}

void check_query_payoff(const ValidatedModel& model, const ExpDecayFunction& g, Side side) {
  if (g.side != side) raise(Errc::SideMismatch, "payoff lives on the wrong velocity side");
  if (static_cast<int>(g.values.size()) != model.side_dim(side))
    raise(Errc::ShapeMismatch, "payoff length does not match the side dimension");
  if (!(g.decay >= 0.0)) raise(Errc::PreconditionViolated, "decay rate must be >= 0");
}

void record_path(std::vector<PathRecord>* records, long long index, const CrossingResult& cr,
                 double payoff) {
  if (!records) return;
  (*records)[static_cast<std::size_t>(index)] =
      PathRecord{index, cr.kind, cr.time, cr.state, payoff};
}

}  // namespace

PathSample sample_path(const ValidatedModel& model, double s, int start_state, double horizon,
                       Xoshiro256pp& rng) {
  if (!(s >= 0.0)) raise(Errc::NegativeTime, "start time must be >= 0");
  if (!(horizon > s)) raise(Errc::PreconditionViolated, "horizon must exceed the start time");
  const int internal = checked_internal(model, start_state);

  PathSample path;
  path.start_time = s;
  path.start_state = start_state;
  path.horizon = horizon;
  Walker walker(model, s, internal, horizon, rng);
  while (!walker.done()) {
    const Walker::Step seg = walker.advance();
    switch (seg.event) {
      case Walker::Event::Jump:
        path.epochs.push_back(seg.t1);
        path.states.push_back(model.original_index(seg.next_state));
        break;
      case Walker::Event::Killed:
        path.killed = true;
        path.kill_time = seg.t1;
        break;
      case Walker::Event::Horizon:
        break;
    }
  }
  return path;
}

CrossingResult crossing(const PathSample& path, const ValidatedModel& model, double lminus,
                        double lplus) {
  check_levels(lminus, lplus);
  const double end_time = path.killed ? path.kill_time : path.horizon;
  double phi = 0.0;
  double t0 = path.start_time;
  int state = path.start_state;
  for (std::size_t k = 0; k <= path.epochs.size(); ++k) {
    const double t1 = k < path.epochs.size() ? path.epochs[k] : end_time;
    const double slope = model.velocity(model.internal_index(state));
    double tc = 0.0;
    const int hit = segment_crossing(phi, slope, t0, t1, lminus, lplus, tc);
    if (hit != 0)
      return {hit > 0 ? CrossingResult::Kind::UpExit : CrossingResult::Kind::DownExit, tc, state};
    phi += slope * (t1 - t0);
    t0 = t1;
    if (k < path.states.size()) state = path.states[k];
  }
  return {};
}

EstimateWithCI estimate(const ValidatedModel& model, const McQuery& query, double s,
                        int start_state, const McParams& params,
                        std::vector<PathRecord>* records) {
  if (!(s >= 0.0)) raise(Errc::NegativeTime, "start time must be >= 0");
  if (params.paths < 2) raise(Errc::PreconditionViolated, "need at least 2 paths");
  const int internal = checked_internal(model, start_state);
  if (records) records->assign(static_cast<std::size_t>(params.paths), PathRecord{});

  EstimateWithCI est;

  if (const auto* q = std::get_if<OneSidedQuery>(&query)) {
    check_query_payoff(model, q->g, q->side);
    check_levels(q->level, q->level);
    const HorizonInfo hz = resolve_horizon(model, s, q->g.decay, payoff_norm(q->g), params);
    const double lminus = q->side == Side::Minus ? q->level : kInf;
    const double lplus = q->side == Side::Plus ? q->level : kInf;
    const auto want =
        q->side == Side::Plus ? CrossingResult::Kind::UpExit : CrossingResult::Kind::DownExit;
    est = run_mc(params.paths, params.seed, params.threads, [&](long long k, Xoshiro256pp& rng) {
      const CrossingResult cr =
          simulate_crossing(model, s, internal, lminus, lplus, hz.horizon, rng);
      const double value = cr.kind == want ? eval_payoff(model, q->g, cr.time, cr.state) : 0.0;
      record_path(records, k, cr, value);
      return value;
    });
    est.horizon = hz.horizon;
    est.truncation_bias = hz.bias;
    est.warning = hz.warning;
  } else if (const auto* q = std::get_if<TwoSidedXiQuery>(&query)) {
    check_query_payoff(model, q->g, q->side);
    check_levels(q->lminus, q->lplus);
    const HorizonInfo hz = resolve_horizon(model, s, q->g.decay, payoff_norm(q->g), params);
    const auto want =
        q->side == Side::Plus ? CrossingResult::Kind::UpExit : CrossingResult::Kind::DownExit;
    est = run_mc(params.paths, params.seed, params.threads, [&](long long k, Xoshiro256pp& rng) {
      const CrossingResult cr =
          simulate_crossing(model, s, internal, q->lminus, q->lplus, hz.horizon, rng);
      const double value = cr.kind == want ? eval_payoff(model, q->g, cr.time, cr.state) : 0.0;
      record_path(records, k, cr, value);
      return value;
    });
    est.horizon = hz.horizon;
    est.truncation_bias = hz.bias;
    est.warning = hz.warning;
  } else if (const auto* q = std::get_if<JointExitQuery>(&query)) {
    check_query_payoff(model, q->gplus, Side::Plus);
    check_query_payoff(model, q->gminus, Side::Minus);
    check_levels(q->lminus, q->lplus);
    const double norm = std::max(payoff_norm(q->gplus), payoff_norm(q->gminus));
    const double decay = std::min(q->gplus.decay, q->gminus.decay);
    const HorizonInfo hz = resolve_horizon(model, s, decay, norm, params);
    est = run_mc(params.paths, params.seed, params.threads, [&](long long k, Xoshiro256pp& rng) {
      const CrossingResult cr =
          simulate_crossing(model, s, internal, q->lminus, q->lplus, hz.horizon, rng);
      double value = 0.0;
      if (cr.kind == CrossingResult::Kind::UpExit)
        value = eval_payoff(model, q->gplus, cr.time, cr.state);
      else if (cr.kind == CrossingResult::Kind::DownExit)
        value = eval_payoff(model, q->gminus, cr.time, cr.state);
      record_path(records, k, cr, value);
      return value;
    });
    est.horizon = hz.horizon;
    est.truncation_bias = hz.bias;
    est.warning = hz.warning;
  } else {
    const auto& pre = std::get<PreExitQuery>(query);
    if (static_cast<int>(pre.h.size()) != model.dim())
      raise(Errc::ShapeMismatch, "h length does not match the state count");
    if (!(pre.T >= s)) raise(Errc::BadTimeOrder, "need s <= T");
    check_levels(pre.lminus, pre.lplus);
    const std::vector<double> h_int = model.to_internal_order(pre.h);
    if (pre.T == s) {
      const bool immediate = (model.side(internal) == Side::Plus && pre.lplus == 0.0) ||
                             (model.side(internal) == Side::Minus && pre.lminus == 0.0);
      const bool counts = pre.complement ? !immediate : immediate;
      est.mean = counts ? h_int[static_cast<std::size_t>(internal)] : 0.0;
      est.n = params.paths;
      est.seed = params.seed;
      est.horizon = pre.T;
      return est;
    }
    est = run_mc(params.paths, params.seed, params.threads, [&](long long k, Xoshiro256pp& rng) {
      const ThroughOutcome out =
          simulate_through(model, s, internal, pre.lminus, pre.lplus, pre.T, rng);
      const bool exited = out.crossing.kind != CrossingResult::Kind::Neither;
      double value = 0.0;
      if (out.alive && (pre.complement ? !exited : exited))
        value = h_int[static_cast<std::size_t>(out.terminal_state)];
      record_path(records, k, out.crossing, value);
      return value;
    });
    est.horizon = pre.T;  // the payoff is fixed at T; no censoring bias
  }
  return est;
}

DecompositionReport verify_decomposition(const ValidatedModel& model, double decay, double lminus,
                                         double lplus, double s, int start_state,
                                         long long n_outer, long long n_inner, std::uint64_t seed,
                                         int threads) {
  if (!(decay > 0.0) && !(model.killing_floor() > 0.0))
    raise(Errc::PreconditionViolated, "decay 0 requires a strictly positive killing floor");
  check_levels(lminus, lplus);
  if (!(s >= 0.0)) raise(Errc::NegativeTime, "start time must be >= 0");
  if (n_outer < 2 || n_inner < 1) raise(Errc::PreconditionViolated, "budgets too small");
  const int internal = checked_internal(model, start_state);

  const double rate = decay + model.killing_floor();
  const double span = std::log(1e6) / rate;
  const double level_sum = lminus + lplus;
  const std::uint64_t lhs_seed = derive_stream_key(seed, 1);
  const std::uint64_t rhs_seed = derive_stream_key(seed, 2);

  DecompositionReport report;
  report.lhs = run_mc(n_outer, lhs_seed, threads, [&](long long, Xoshiro256pp& rng) {
    const CrossingResult cr = simulate_crossing(model, s, internal, kInf, lplus, s + span, rng);
    return cr.kind == CrossingResult::Kind::UpExit ? std::exp(-decay * cr.time) : 0.0;
  });
  report.lhs.horizon = s + span;

  report.rhs = run_mc(n_outer, rhs_seed, threads, [&](long long k, Xoshiro256pp& rng) {
    const CrossingResult cr =
        simulate_crossing(model, s, internal, lminus, lplus, s + span, rng);
    if (cr.kind == CrossingResult::Kind::UpExit) return std::exp(-decay * cr.time);
    if (cr.kind == CrossingResult::Kind::Neither) return 0.0;
    // Down-exit: continuation is a plain first passage through the full
    // corridor width, started afresh at the exit point.
    const int inner_start = model.internal_index(cr.state);
    double acc = 0.0;
    for (long long j = 0; j < n_inner; ++j) {
      Xoshiro256pp inner_rng(
          derive_stream_key(rhs_seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j)));
      const CrossingResult inner = simulate_crossing(model, cr.time, inner_start, kInf, level_sum,
                                                     cr.time + span, inner_rng);
      if (inner.kind == CrossingResult::Kind::UpExit) acc += std::exp(-decay * inner.time);
    }
    return acc / static_cast<double>(n_inner);
  });
  report.rhs.horizon = s + span;

  const double denom = std::sqrt(report.lhs.std_error * report.lhs.std_error +
                                 report.rhs.std_error * report.rhs.std_error);
  const double diff = report.lhs.mean - report.rhs.mean;
  report.z = denom > 0.0 ? diff / denom : (diff == 0.0 ? 0.0 : std::copysign(kInf, diff));
  return report;
}

EstimateWithCI composite_cycle_estimate(const ValidatedModel& model, double T, double lminus,
                                        double lplus, double s, int start_state, long long n_outer,
                                        long long n_inner, std::uint64_t seed, int threads) {
  check_levels(lminus, lplus);
  if (!(s >= 0.0)) raise(Errc::NegativeTime, "start time must be >= 0");
  if (n_outer < 2 || n_inner < 1) raise(Errc::PreconditionViolated, "budgets too small");
  const int internal = checked_internal(model, start_state);
  if (model.side(internal) != Side::Plus)
    raise(Errc::SideMismatch, "the composite cycle starts from an up-state");

  EstimateWithCI est;
  est.seed = seed;
  est.horizon = T;
  if (!(T > s)) {  // the window indicator vanishes at the start already
    est.n = n_outer;
    return est;
  }
  const double level_sum = lminus + lplus;
  est = run_mc(n_outer, seed, threads, [&](long long k, Xoshiro256pp& rng) {
    // Stage one: down passage through the corridor width before T.
    const CrossingResult down = simulate_crossing(model, s, internal, level_sum, kInf, T, rng);
    if (down.kind != CrossingResult::Kind::DownExit) return 0.0;
    const int inner_start = model.internal_index(down.state);
    long long hits = 0;
    for (long long j = 0; j < n_inner; ++j) {
      Xoshiro256pp inner_rng(
          derive_stream_key(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j)));
      const CrossingResult up =
          simulate_crossing(model, down.time, inner_start, kInf, level_sum, T, inner_rng);
      if (up.kind == CrossingResult::Kind::UpExit) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n_inner);
  });
  est.horizon = T;
  return est;
}

OutcomeCounts outcome_battery(const ValidatedModel& model, double s, int start_state,
                              double lminus, double lplus, double horizon, long long n,
                              std::uint64_t seed, int threads) {
  check_levels(lminus, lplus);
  checked_internal(model, start_state);
  OutcomeCounts counts;
  std::mutex merge;
  const int nt = effective_threads(threads, n);
  const long long chunk = (n + nt - 1) / nt;
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  for (int w = 0; w < nt; ++w) {
    const long long lo = w * chunk;
    const long long hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      OutcomeCounts local;
      try {
        for (long long k = lo; k < hi; ++k) {
          Xoshiro256pp rng(derive_stream_key(seed, static_cast<std::uint64_t>(k)));
          const PathSample path = sample_path(model, s, start_state, horizon, rng);
          const CrossingResult cr = crossing(path, model, lminus, lplus);
          switch (cr.kind) {
            case CrossingResult::Kind::UpExit:
              ++local.up;
              if (model.side(model.internal_index(cr.state)) != Side::Plus)
                ++local.side_violations;
              break;
            case CrossingResult::Kind::DownExit:
              ++local.down;
              if (model.side(model.internal_index(cr.state)) != Side::Minus)
                ++local.side_violations;
              break;
            case CrossingResult::Kind::Neither:
              ++local.neither;
              break;
          }
        }
      } catch (...) {
        std::scoped_lock lock(merge);
        if (!failure) failure = std::current_exception();
        return;
      }
      std::scoped_lock lock(merge);
      counts.up += local.up;
      counts.down += local.down;
      counts.neither += local.neither;
      counts.side_violations += local.side_violations;
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return counts;
}

PreExitResult pre_exit_law(const ValidatedModel& model, std::span<const double> h, double T,
                           double lminus, double lplus, double s, int start_state,
                           const McParams& params) {
  if (static_cast<int>(h.size()) != model.dim())
    raise(Errc::ShapeMismatch, "h length does not match the state count");
  if (!(s >= 0.0)) raise(Errc::NegativeTime, "start time must be >= 0");
  if (!(T >= s)) raise(Errc::BadTimeOrder, "need s <= T");
  check_levels(lminus, lplus);
  if (params.paths < 2) raise(Errc::PreconditionViolated, "need at least 2 paths");
  const int internal = checked_internal(model, start_state);
  const std::vector<double> h_int = model.to_internal_order(h);

  PreExitResult result;
  if (T == s) {
    const bool immediate = (model.side(internal) == Side::Plus && lplus == 0.0) ||
                           (model.side(internal) == Side::Minus && lminus == 0.0);
    result.restricted.mean = immediate ? h_int[static_cast<std::size_t>(internal)] : 0.0;
    result.restricted.n = params.paths;
    result.restricted.seed = params.seed;
    result.restricted.horizon = T;
    result.evolution_value = h_int[static_cast<std::size_t>(internal)];
    result.complement_value = result.evolution_value - result.restricted.mean;
    return result;
  }

  const bool homogeneous = model.homogeneous();
  const std::uint64_t hybrid_seed = derive_stream_key(params.seed, 1);
  result.restricted =
      run_mc(params.paths, hybrid_seed, params.threads, [&](long long k, Xoshiro256pp& rng) {
        const CrossingResult cr = simulate_crossing(model, s, internal, lminus, lplus, T, rng);
        if (cr.kind == CrossingResult::Kind::Neither) return 0.0;
        const int exit_internal = model.internal_index(cr.state);
        if (homogeneous) {
          // Analytic continuation of the surviving mass from the exit point.
          const DenseMatrix prop = matrix_exp(model.generator_at(0.0) * (T - cr.time));
          double value = 0.0;
          for (int j = 0; j < model.dim(); ++j) value += prop(exit_internal, j) * h_int[j];
          return value;
        }
        double acc = 0.0;
        for (long long j = 0; j < params.inner_paths; ++j) {
          Xoshiro256pp inner_rng(derive_stream_key(hybrid_seed, static_cast<std::uint64_t>(k),
                                                   static_cast<std::uint64_t>(j)));
          const ThroughOutcome out =
              simulate_to_time(model, cr.time, exit_internal, T, inner_rng);
          if (out.alive) acc += h_int[static_cast<std::size_t>(out.terminal_state)];
        }
        return acc / static_cast<double>(params.inner_paths);
      });
  result.restricted.horizon = T;
  result.restricted.seed = params.seed;

  if (homogeneous) {
    const DenseMatrix prop = matrix_exp(model.generator_at(0.0) * (T - s));
    double value = 0.0;
    for (int j = 0; j < model.dim(); ++j) value += prop(internal, j) * h_int[j];
    result.evolution_value = value;
  } else {
    const EstimateWithCI ev = run_mc(params.paths, derive_stream_key(params.seed, 2),
                                     params.threads, [&](long long, Xoshiro256pp& rng) {
                                       const ThroughOutcome out =
                                           simulate_to_time(model, s, internal, T, rng);
                                       return out.alive
                                                  ? h_int[static_cast<std::size_t>(out.terminal_state)]
                                                  : 0.0;
                                     });
    result.evolution_value = ev.mean;
    result.evolution_std_error = ev.std_error;
  }
  result.complement_value = result.evolution_value - result.restricted.mean;
  return result;
}

}  // namespace fluid_exit
