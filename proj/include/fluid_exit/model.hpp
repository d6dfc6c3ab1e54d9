#pragma once

#include <string>
#include <vector>

#include "fluid_exit/dense_matrix.hpp"

namespace fluid_exit {

enum class Side { Plus, Minus };

inline Side opposite(Side s) { return s == Side::Plus ? Side::Minus : Side::Plus; }

// Generator schedule: one matrix (constant) or breakpoints t_1 < ... < t_B
// with B+1 matrices, matrix k active on [t_{k-1}, t_k) and the last one on
// [t_B, inf). Lookup is right-continuous: at a breakpoint the new segment's
// matrix applies.
struct GeneratorSchedule {
  std::vector<double> breakpoints;
  std::vector<DenseMatrix> matrices;

  bool constant() const { return breakpoints.empty(); }
};

// Raw model description as supplied by the user (or a model file).
struct ModelSpec {
  std::vector<std::string> states;
  std::vector<double> velocities;
  GeneratorSchedule generator;
};

// Validated, immutable model. Internally states are permuted so that all
// up-states (v > 0) come before all down-states (v < 0), each group keeping
// its original relative order; user-facing labels are preserved through the
// recorded permutation. Safe to share across threads.
class ValidatedModel {
 public:
  // Checks every structural invariant and computes the derived quantities.
  // Throws FluidError with the specific validation code on failure.
  static ValidatedModel validate(const ModelSpec& spec);

  int dim() const { return m_; }
  int plus_dim() const { return m_plus_; }
  int minus_dim() const { return m_ - m_plus_; }
  bool homogeneous() const { return schedule_.constant(); }

  // Uniform bound K on |Lambda_s(i,j)| over the whole schedule.
  double uniform_bound() const { return uniform_bound_; }
  // c_min: smallest row-sum deficit across the schedule (>= 0). Strictly
  // positive exactly when every row of every segment carries killing.
  double killing_floor() const { return killing_floor_; }
  double max_abs_velocity() const { return max_abs_velocity_; }

  // Internal indexing (up-states first).
  double velocity(int internal) const { return velocities_[internal]; }
  const std::string& label(int internal) const { return labels_[internal]; }
  Side side(int internal) const { return internal < m_plus_ ? Side::Plus : Side::Minus; }
  int side_offset(int internal) const {
    return internal < m_plus_ ? internal : internal - m_plus_;
  }
  int side_dim(Side s) const { return s == Side::Plus ? plus_dim() : minus_dim(); }

  int internal_index(int original) const { return to_internal_[original]; }
  int original_index(int internal) const { return to_original_[internal]; }
  // Resolves a state label to its internal index; throws BadModelFile when
  // the label is unknown.
  int internal_index(const std::string& label) const;

  std::vector<std::string> plus_labels() const;
  std::vector<std::string> minus_labels() const;

  // Active generator segment at time s (internal ordering). Throws
  // NegativeTime for s < 0.
  const DenseMatrix& generator_at(double s) const;
  const GeneratorSchedule& schedule() const { return schedule_; }

  // Reorders a full-state vector between original and internal index order.
  std::vector<double> to_internal_order(std::span<const double> original) const;
  std::vector<double> to_original_order(std::span<const double> internal) const;

 private:
  ValidatedModel() = default;

  int m_ = 0;
  int m_plus_ = 0;
  std::vector<std::string> labels_;      // internal order
  std::vector<double> velocities_;       // internal order
  GeneratorSchedule schedule_;           // internal order
  std::vector<int> to_internal_;         // original -> internal
  std::vector<int> to_original_;         // internal -> original
  double uniform_bound_ = 0.0;
  double killing_floor_ = 0.0;
  double max_abs_velocity_ = 0.0;
};

}  // namespace fluid_exit
