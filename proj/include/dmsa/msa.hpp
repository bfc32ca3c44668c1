#pragma once

// Method of successive approximations: forward pass, co-state pass, then a
// per-layer maximization of the summed Hamiltonian, all from one trajectory.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dmsa/data.hpp"
#include "dmsa/layers.hpp"
#include "dmsa/linalg.hpp"
#include "dmsa/propagation.hpp"

namespace dmsa {

enum class OptimizerKind { basic_msa, binary_msa, ternary_msa, gradient_msa };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

// ---------------------------------------------------------------------------
// Closed-form Hamiltonian maximizers for discrete dense layers.

/// argmax over {-1,+1} of <Mbar, theta> - rho ||theta - theta_k||_F^2,
/// entrywise: sign(Mbar_ij) when |Mbar_ij| >= 2 rho, else theta_k. A zero
/// entry of Mbar keeps theta_k.
Matrix binary_update(const Matrix& theta_k, const Matrix& mbar, double rho);

/// argmax over {-1,0,+1} of <Mbar, theta> - lambda ||theta||_F^2
///   - rho ||theta - theta_k||_F^2, entrywise:
///   +1 if Mbar >=  rho (1 - 2 theta_k) + lambda
///   -1 if Mbar <= -rho (1 + 2 theta_k) - lambda
///    0 otherwise.
Matrix ternary_update(const Matrix& theta_k, const Matrix& mbar, double rho, double lambda);

/// alpha * Mbar + (1 - alpha) * M.
Matrix update_moving_average(const Matrix& mbar, const Matrix& m_current, double alpha);

/// fraction * max |Mbar_ij| over entries whose sign differs from theta_ij
/// (zero entries of Mbar excluded); 0 when there are none. The result is
/// the full flip threshold, i.e. twice the rho of binary_update.
double rho_from_heuristic(const Matrix& mbar, const Matrix& theta_k, double fraction);

/// 1 - (1 - alpha0) * decay^floor(step / period).
double alpha_schedule(double alpha0, double decay, std::size_t step, std::size_t period);

// ---------------------------------------------------------------------------
// Single-batch steps.

/// Returns the maximizing layer given the fixed states x_t and co-states
/// p_{t+1} of one trajectory.
using Maximizer = std::function<Layer(const Layer& current, const Matrix& x, const Matrix& p_next,
                                      std::size_t sample_count)>;

/// Exact argmax of sum_s H_t for discrete layers (sign(M) for binary, the
/// lambda-thresholded sign for ternary). Throws for float layers, whose
/// Hamiltonian is unbounded in theta.
Layer exact_argmax(const Layer& current, const Matrix& x, const Matrix& p_next, std::size_t sample_count);

/// One basic MSA iteration. Every trainable layer is replaced by
/// `maximizer` applied to the trajectory under the current parameters;
/// non-trainable layers pass through.
Network basic_msa_step(const Network& net, const Matrix& x0, const TerminalLoss& loss,
                       const Maximizer& maximizer = exact_argmax);

/// theta_t <- theta_t + eta * grad_theta sum_s H_t for every float layer.
/// Throws std::invalid_argument when the network has discrete layers.
Network gradient_msa_step(const Network& net, const Matrix& x0, const TerminalLoss& loss, double eta);

// ---------------------------------------------------------------------------
// Full training loop.

struct AdamConfig {
  double rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : cfg_(config) {}
  /// Descends along `grad`; state is keyed by the caller-provided slot.
  std::vector<double> step(std::size_t slot, const std::vector<double>& params,
                           const std::vector<double>& grad);

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;
  };
  AdamConfig cfg_;
  std::vector<Moments> moments_;
};

struct MsaHyperparams {
  /// c in rho_from_heuristic; 0.5 suits binary nets, 0.25 ternary.
  double rho_fraction = 0.5;
  /// When set, the rho passed to the update rules (heuristic bypassed).
  std::optional<double> fixed_rho;
  /// Apply the heuristic to the current batch M instead of Mbar.
  bool rho_from_current = false;
  double alpha0 = 0.999;
  double alpha_decay = 0.5;
  /// Steps between alpha decays; 0 means one epoch.
  std::size_t alpha_decay_steps = 0;
  /// Step size of gradient-MSA.
  double eta = 0.01;
  /// Float layers (batch-norm) under the discrete optimizers.
  AdamConfig adam;
};

MsaHyperparams default_hyperparams(OptimizerKind kind);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::binary_msa;
  MsaHyperparams hyper;
  LossKind loss = LossKind::squared_hinge;
  std::size_t batch_size = 100;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
};

/// Optimizer state: per-layer moving averages Mbar_t and the step counter.
struct MsaState {
  std::vector<std::optional<Matrix>> mbar;
  std::vector<double> last_rho;
  std::size_t step = 0;
  double alpha = 0.0;
};

/// Applies one optimizer iteration per call.
class MsaOptimizer {
 public:
  MsaOptimizer(OptimizerKind kind, MsaHyperparams hyper, const Network& net,
               std::size_t steps_per_epoch);

  /// Updates `net` in place from one minibatch; returns J on the batch
  /// before the update.
  double step(Network& net, const Matrix& x0, const TerminalLoss& loss);

  const MsaState& state() const noexcept { return state_; }

 private:
  OptimizerKind kind_;
  MsaHyperparams hyper_;
  std::size_t decay_period_;
  MsaState state_;
  Adam adam_;
};

/// Checks that the optimizer can train every layer kind in the network.
void validate_optimizer(OptimizerKind kind, const Network& net);

/// Loss targets for a batch: class labels or regression targets.
TerminalLoss make_loss(LossKind kind, const Dataset& batch, std::size_t output_dim);

struct EvalResult {
  double objective = 0.0;
  /// Misclassification rate, or for regression targets the fraction of
  /// samples with some output off by more than 0.5.
  double error_rate = 0.0;
};

/// Inference-mode J and error rate over a whole dataset.
EvalResult evaluate(const Network& net, const Dataset& ds, LossKind loss, std::size_t chunk = 1000);

struct MetricsRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double j_train = 0.0;
  double train_error = 0.0;
  std::optional<double> test_error;
  /// Non-zero fraction over all discrete weights.
  double sparsity = 1.0;
  /// (layer index, non-zero fraction) for each discrete layer.
  std::vector<std::pair<std::size_t, double>> layer_sparsity;
  double wall_ms = 0.0;
};

struct TrainResult {
  Network net;
  std::vector<MetricsRecord> metrics;
};

using EpochCallback = std::function<void(const MetricsRecord&)>;

TrainResult train(Network net, const Dataset& train_set, const Dataset* test_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace dmsa
