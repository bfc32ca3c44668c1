#pragma once

// Numerical checks of the optimal-control view of training: the terms of
// the MSA error estimate, the maximum-principle residuals, the equivalence
// of Hamiltonian gradient ascent with backprop descent, and the discrete
// Gronwall bound.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dmsa/layers.hpp"
#include "dmsa/linalg.hpp"
#include "dmsa/propagation.hpp"

namespace dmsa {

/// Terms of the one-step estimate
///   J(phi) - J(theta) <= -hamiltonian_gain
///                        + C (penalty_f + penalty_grad_f + penalty_grad_l),
/// all evaluated along the theta trajectory. The penalties already carry
/// the 1/S factor; only C is left out.
struct ErrorEstimateReport {
  double delta_j = 0.0;
  /// sum_t sum_s H_t(x, p, phi_t) - H_t(x, p, theta_t)
  double hamiltonian_gain = 0.0;
  /// (1/S) sum_t sum_s ||f_t(x, phi_t) - f_t(x, theta_t)||^2
  double penalty_f = 0.0;
  /// (1/S) sum_t sum_s ||grad_x f_t(x, phi_t) - grad_x f_t(x, theta_t)||_F^2
  double penalty_grad_f = 0.0;
  /// Same for the running cost; zero while every L_t ignores x.
  double penalty_grad_l = 0.0;

  double penalty_sum() const noexcept { return penalty_f + penalty_grad_f + penalty_grad_l; }
};

/// `phi` must have the same layer kinds and dimensions as `theta`.
ErrorEstimateReport theorem2_terms(const Network& theta, const Network& phi, const Matrix& x0,
                                   const TerminalLoss& loss, Phase phase = Phase::training);

/// max (delta_j + hamiltonian_gain) / penalty_sum over reports with a
/// positive penalty sum; 0 when there are none (or all ratios are negative).
double fit_error_constant(std::span<const ErrorEstimateReport> reports);

/// delta_j <= -hamiltonian_gain + c * penalty_sum, up to rounding.
bool error_estimate_holds(const ErrorEstimateReport& report, double c);

/// Copy of `net` with each trainable layer moved by a random amount:
/// discrete entries are resampled with probability `strength` (clamped to
/// [0,1]), float parameters get N(0, strength^2) noise.
Network random_perturbation(const Network& net, std::mt19937_64& rng, double strength);

struct LayerResidual {
  std::size_t layer = 0;
  std::string kind;
  /// Discrete layers: max_theta sum_s H_t - sum_s H_t(theta_t) >= 0.
  /// Float layers: ||grad_theta sum_s H_t|| (stationarity).
  double hamiltonian_gap = 0.0;
  /// max |x_{t+1} - f_t(x_t)| after recomputation.
  double state_residual = 0.0;
  /// max |p_t - grad_x H_t| after recomputation.
  double costate_residual = 0.0;
  /// Sum_s H_t does not depend on theta (all of M vanishes).
  bool singular = false;
};

struct PmpResidualReport {
  std::vector<LayerResidual> layers;
  /// max |p_T + (1/S) grad Phi|.
  double terminal_residual = 0.0;

  double max_gap() const noexcept;
};

/// One report entry per trainable layer.
PmpResidualReport pmp_residual(const Network& net, const Matrix& x0, const TerminalLoss& loss,
                               Phase phase = Phase::training);

/// Parameter change of one gradient-MSA step against -eta times the
/// central-difference gradient of J. Returns max |a - b| / max |b| over all
/// float parameters (0 when both changes vanish).
double backprop_equivalence_check(const Network& net, const Matrix& x0, const TerminalLoss& loss, double eta,
                                  double h = 1e-5);

/// Largest |p_{s,t} + (1/S) d(sum Phi)/dx_{s,t}| over all s, t, with the
/// derivative from central differences through layers t..T-1.
double costate_chain_deviation(const Network& net, const Matrix& x0, const TerminalLoss& loss,
                               Phase phase = Phase::training, double h = 1e-5);

/// u_{t+1} = K u_t + w_t; true when every u_t <= max(1, K^T)(u_0 + sum w).
bool gronwall_check(double k, double u0, std::span<const double> w);

}  // namespace dmsa
