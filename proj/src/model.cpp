#include "fluid_exit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fluid_exit/errors.hpp"

namespace fluid_exit {

namespace {

// Row sums within this slack of zero count as conservative rows; guards
// against decimal-to-binary noise in user input.
double row_sum_slack(const DenseMatrix& m) { return 1e-12 * std::max(1.0, m.max_abs()); }

}  // namespace

ValidatedModel ValidatedModel::validate(const ModelSpec& spec) {
  const int m = static_cast<int>(spec.states.size());
  if (m <= 1) raise(Errc::BadModelFile, "need at least two states");
  if (static_cast<int>(spec.velocities.size()) != m)
    raise(Errc::BadModelFile, "velocities length does not match state count");

  const auto& sched = spec.generator;
  if (sched.matrices.empty()) raise(Errc::BadModelFile, "generator schedule has no matrices");
  if (sched.matrices.size() != sched.breakpoints.size() + 1)
    raise(Errc::BadBreakpoints, "matrix count must equal breakpoint count + 1");
  for (std::size_t k = 0; k < sched.breakpoints.size(); ++k) {
    const double t = sched.breakpoints[k];
    if (!(t >= 0.0) || !std::isfinite(t)) raise(Errc::BadBreakpoints, "breakpoints must be finite and nonnegative");
    if (k > 0 && !(sched.breakpoints[k - 1] < t))
      raise(Errc::BadBreakpoints, "breakpoints must be strictly increasing");
  }

  for (int i = 0; i < m; ++i) {
    const double v = spec.velocities[i];
    if (!std::isfinite(v)) raise(Errc::BadModelFile, "velocity not finite");
    if (v == 0.0) raise(Errc::ZeroVelocity, "state " + spec.states[i] + " has zero velocity");
  }
  {
    std::vector<std::string> seen = spec.states;
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
      raise(Errc::BadModelFile, "duplicate state labels");
  }

  const bool any_plus = std::any_of(spec.velocities.begin(), spec.velocities.end(),
                                    [](double v) { return v > 0.0; });
  const bool any_minus = std::any_of(spec.velocities.begin(), spec.velocities.end(),
                                     [](double v) { return v < 0.0; });
  if (!any_plus) raise(Errc::EmptySidePartition, "no state with positive velocity (E+ empty)");
  if (!any_minus) raise(Errc::EmptySidePartition, "no state with negative velocity (E- empty)");

  for (std::size_t seg = 0; seg < sched.matrices.size(); ++seg) {
    const DenseMatrix& g = sched.matrices[seg];
    if (g.rows() != m || g.cols() != m)
      raise(Errc::BadModelFile, "generator segment " + std::to_string(seg) + " is not m x m");
    if (!g.all_finite())
      raise(Errc::BadModelFile, "generator segment " + std::to_string(seg) + " has non-finite entries");
    const double slack = row_sum_slack(g);
    for (int i = 0; i < m; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < m; ++j) {
        row_sum += g(i, j);
        if (i != j && g(i, j) < 0.0)
          raise(Errc::NegativeOffDiagonal,
                "entry (" + std::to_string(i) + "," + std::to_string(j) + ") of segment " +
                    std::to_string(seg) + " is negative");
      }
      if (row_sum > slack)
        raise(Errc::PositiveRowSum,
              "row " + std::to_string(i) + " of segment " + std::to_string(seg) +
                  " sums to " + std::to_string(row_sum));
    }
  }

  ValidatedModel model;
  model.m_ = m;

  // Stable partition: up-states first, both groups in original order.
  model.to_original_.reserve(m);
  for (int i = 0; i < m; ++i)
    if (spec.velocities[i] > 0.0) model.to_original_.push_back(i);
  model.m_plus_ = static_cast<int>(model.to_original_.size());
  for (int i = 0; i < m; ++i)
    if (spec.velocities[i] < 0.0) model.to_original_.push_back(i);
  model.to_internal_.assign(m, -1);
  for (int k = 0; k < m; ++k) model.to_internal_[model.to_original_[k]] = k;

  model.labels_.resize(m);
  model.velocities_.resize(m);
  for (int k = 0; k < m; ++k) {
    model.labels_[k] = spec.states[model.to_original_[k]];
    model.velocities_[k] = spec.velocities[model.to_original_[k]];
  }
  model.max_abs_velocity_ = 0.0;
  for (double v : model.velocities_)
    model.max_abs_velocity_ = std::max(model.max_abs_velocity_, std::abs(v));

  model.schedule_.breakpoints = sched.breakpoints;
  model.schedule_.matrices.reserve(sched.matrices.size());
  double k_bound = 0.0;
  double floor = std::numeric_limits<double>::infinity();
  for (const DenseMatrix& g : sched.matrices) {
    DenseMatrix p(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) p(i, j) = g(model.to_original_[i], model.to_original_[j]);
    const double slack = row_sum_slack(p);
    for (int i = 0; i < m; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < m; ++j) {
        k_bound = std::max(k_bound, std::abs(p(i, j)));
        row_sum += p(i, j);
      }
      floor = std::min(floor, row_sum < -slack ? -row_sum : 0.0);
    }
    model.schedule_.matrices.push_back(std::move(p));
  }
  model.uniform_bound_ = k_bound;
  model.killing_floor_ = floor;
  return model;
}

int ValidatedModel::internal_index(const std::string& label) const {
  for (int k = 0; k < m_; ++k)
    if (labels_[k] == label) return k;
  raise(Errc::BadModelFile, "unknown state label: " + label);
}

std::vector<std::string> ValidatedModel::plus_labels() const {
  return {labels_.begin(), labels_.begin() + m_plus_};
}

std::vector<std::string> ValidatedModel::minus_labels() const {
  return {labels_.begin() + m_plus_, labels_.end()};
}

const DenseMatrix& ValidatedModel::generator_at(double s) const {
  if (!(s >= 0.0)) raise(Errc::NegativeTime, "schedule time must be >= 0");
  const auto& bp = schedule_.breakpoints;
  // Right-continuous: first segment with s < t_k; at s == t_k the new one.
  const auto it = std::upper_bound(bp.begin(), bp.end(), s);
  return schedule_.matrices[static_cast<std::size_t>(it - bp.begin())];
}

std::vector<double> ValidatedModel::to_internal_order(std::span<const double> original) const {
  if (static_cast<int>(original.size()) != m_)
    raise(Errc::ShapeMismatch, "vector length does not match state count");
  std::vector<double> out(m_);
  for (int k = 0; k < m_; ++k) out[k] = original[to_original_[k]];
  return out;
}

std::vector<double> ValidatedModel::to_original_order(std::span<const double> internal) const {
  if (static_cast<int>(internal.size()) != m_)
    raise(Errc::ShapeMismatch, "vector length does not match state count");
  std::vector<double> out(m_);
  for (int k = 0; k < m_; ++k) out[to_original_[k]] = internal[k];
  return out;
}

}  // namespace fluid_exit
