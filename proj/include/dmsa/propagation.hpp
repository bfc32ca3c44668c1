#pragma once

// Whole-network state and co-state passes and the objective
//     J = (1/S) sum_s Phi_s(x_{s,T}) + sum_t L_t(theta_t).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dmsa/layers.hpp"
#include "dmsa/linalg.hpp"

namespace dmsa {

enum class LossKind { mean_square, squared_hinge, softmax_cross_entropy };

std::string to_string(LossKind kind);
LossKind loss_from_string(const std::string& name);

/// Per-sample terminal loss Phi_s with its targets, one row per sample.
///   mean_square:           1/2 ||x - y||^2
///   squared_hinge:         sum_j max(0, 1 - x_j y_j)^2, y in {-1,+1}^d
///   softmax_cross_entropy: -sum_j y_j log softmax(x)_j, y a distribution
class TerminalLoss {
 public:
  TerminalLoss(LossKind kind, Matrix targets);
  /// Targets built from class indices: +/-1 one-vs-rest for the hinge,
  /// one-hot otherwise.
  static TerminalLoss from_labels(LossKind kind, std::span<const int> labels, std::size_t classes);

  LossKind kind() const noexcept { return kind_; }
  const Matrix& targets() const noexcept { return targets_; }
  std::size_t sample_count() const noexcept { return targets_.rows(); }

  double value(std::size_t s, std::span<const double> x) const;
  /// Sum over samples of Phi_s(x_s).
  double total(const Matrix& x_final) const;
  /// Row s holds grad Phi_s(x_s).
  Matrix gradients(const Matrix& x_final) const;

 private:
  void require_batch(const Matrix& x_final) const;

  LossKind kind_;
  Matrix targets_;
};

/// States x_{s,t} for t = 0..T and, after the backward pass, co-states
/// p_{s,t}. Each entry is an S x d_t batch.
struct Trajectory {
  std::vector<Matrix> states;
  std::vector<Matrix> costates;
  std::size_t sample_count = 0;
  Phase phase = Phase::training;

  bool has_costates() const noexcept { return !costates.empty(); }
};

Trajectory forward_pass(const Network& net, const Matrix& x0, Phase phase = Phase::training);

/// p_T = -(1/S) grad Phi_s(x_T), then p_t = costate_pullback at layer t.
/// With `input_costate` false, p_0 is left empty (no update reads it).
Trajectory backward_pass(const Network& net, Trajectory traj, const TerminalLoss& loss,
                         bool input_costate = true);

/// Forward then backward.
Trajectory propagate(const Network& net, const Matrix& x0, const TerminalLoss& loss,
                     Phase phase = Phase::training, bool input_costate = true);

double regularization_total(const Network& net);

/// J evaluated from the stored final states of a trajectory.
double objective_from_states(const Network& net, const Trajectory& traj, const TerminalLoss& loss);

double objective(const Network& net, const Matrix& x0, const TerminalLoss& loss,
                 Phase phase = Phase::training);

/// Index of the largest output per sample; ties go to the first index.
std::vector<int> predict_classes(const Matrix& outputs);

}  // namespace dmsa
