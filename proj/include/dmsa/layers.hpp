#pragma once

// Layers of the discrete-time control system x_{t+1} = f_t(x_t, theta_t).
//
// Each layer supplies its forward map f_t, the co-state pullback
// grad_x H_t, the summed Hamiltonian
//     sum_s H_t = sum_s p_{s,t+1} . f_t(x_{s,t}, theta) - (n/S) L_t(theta),
// and, for float-parameterized layers, grad_theta of that sum. Running
// regularizers L_t never depend on x, so grad_x L_t vanishes everywhere.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dmsa/linalg.hpp"

namespace dmsa {

/// Batch-norm layers use batch statistics while training and running
/// statistics at inference.
enum class Phase { training, inference };

enum class ActivationKind { relu, tanh, sigmoid, softplus, identity };

std::string to_string(ActivationKind kind);
ActivationKind activation_from_string(const std::string& name);

/// Binary fully-connected layer x -> theta x, theta in {-1,+1}^{out x in}.
/// No bias and no regularizer.
class BinaryDense {
 public:
  explicit BinaryDense(Matrix theta);
  const Matrix& theta() const noexcept { return theta_; }
  std::size_t in_dim() const noexcept { return theta_.cols(); }
  std::size_t out_dim() const noexcept { return theta_.rows(); }

 private:
  Matrix theta_;
};

/// Ternary fully-connected layer x -> theta x, theta in {-1,0,+1}^{out x in},
/// with regularizer L(theta) = lambda * ||theta||_F^2.
class TernaryDense {
 public:
  TernaryDense(Matrix theta, double lambda);
  const Matrix& theta() const noexcept { return theta_; }
  double lambda() const noexcept { return lambda_; }
  std::size_t in_dim() const noexcept { return theta_.cols(); }
  std::size_t out_dim() const noexcept { return theta_.rows(); }

 private:
  Matrix theta_;
  double lambda_;
};

/// Affine layer x -> theta x + bias with real-valued parameters.
class FloatDense {
 public:
  explicit FloatDense(Matrix theta, std::optional<Vector> bias = std::nullopt);
  const Matrix& theta() const noexcept { return theta_; }
  const std::optional<Vector>& bias() const noexcept { return bias_; }
  std::size_t in_dim() const noexcept { return theta_.cols(); }
  std::size_t out_dim() const noexcept { return theta_.rows(); }

 private:
  Matrix theta_;
  std::optional<Vector> bias_;
};

struct Activation {
  ActivationKind kind = ActivationKind::relu;
};

class BatchNorm {
 public:
  /// gamma = 1, beta = 0, running mean 0, running variance 1.
  explicit BatchNorm(std::size_t dim, double eps = 1e-5, double momentum = 0.9);
  BatchNorm(Vector gamma, Vector beta, Vector running_mean, Vector running_var, double eps,
            double momentum);

  std::size_t dim() const noexcept { return gamma_.dim(); }
  const Vector& gamma() const noexcept { return gamma_; }
  const Vector& beta() const noexcept { return beta_; }
  const Vector& running_mean() const noexcept { return running_mean_; }
  const Vector& running_var() const noexcept { return running_var_; }
  double eps() const noexcept { return eps_; }
  double momentum() const noexcept { return momentum_; }

  BatchNorm with_affine(Vector gamma, Vector beta) const;
  /// Folds the statistics of a training batch into the running averages.
  BatchNorm with_running_stats_from(const Matrix& batch) const;

 private:
  Vector gamma_;
  Vector beta_;
  Vector running_mean_;
  Vector running_var_;
  double eps_;
  double momentum_;
};

/// 1/sqrt(var + eps) per feature: batch variance in training, running
/// variance at inference.
Vector batch_norm_inv_std(const BatchNorm& bn, const Matrix& x, Phase phase);

using Layer = std::variant<BinaryDense, TernaryDense, FloatDense, Activation, BatchNorm>;

std::string kind_name(const Layer& layer);
bool is_discrete(const Layer& layer);
/// Layers with real-valued trainable parameters (FloatDense, BatchNorm).
bool is_float_trainable(const Layer& layer);
bool is_trainable(const Layer& layer);
/// Weight matrix of a BinaryDense/TernaryDense layer.
const Matrix& discrete_theta(const Layer& layer);
/// Same layer kind with the weight matrix replaced (validated).
Layer with_discrete_theta(const Layer& layer, Matrix theta);

/// Output dimension given the input dimension; throws ShapeError on mismatch.
std::size_t output_dim(const Layer& layer, std::size_t input_dim);

/// x_{t+1} = f_t(x_t) for every sample (row) of `x`.
Matrix forward(const Layer& layer, const Matrix& x, Phase phase = Phase::training);

/// p_t = grad_x sum_s H_t(x_s, p_{s,t+1}, theta_t), row per sample. For
/// batch-norm in training this is the full batch-statistics pullback.
Matrix costate_pullback(const Layer& layer, const Matrix& x, const Matrix& p_next,
                        Phase phase = Phase::training);

/// L_t(theta); zero for every layer except TernaryDense.
double regularizer(const Layer& layer);

/// sum_s H_t(x_s, p_s, theta) with theta taken from `candidate`. The
/// regularizer enters as -(n/S) L_t where n is the batch size.
double hamiltonian_sum(const Layer& candidate, const Matrix& x, const Matrix& p_next,
                       std::size_t sample_count, Phase phase = Phase::training);

/// M = sum_s p_{s,t+1} x_{s,t}^T, the linear coefficient of sum_s H_t in
/// theta for dense layers.
Matrix coefficient_matrix(const Matrix& x, const Matrix& p_next);

struct DenseGrad {
  Matrix weight;
  std::optional<Vector> bias;
};

struct BatchNormGrad {
  Vector gamma;
  Vector beta;
};

using ParamGrad = std::variant<DenseGrad, BatchNormGrad>;

/// Exact grad_theta sum_s H_t for FloatDense and BatchNorm layers. Throws
/// std::invalid_argument for any other layer kind.
ParamGrad grad_theta_hamiltonian(const Layer& layer, const Matrix& x, const Matrix& p_next,
                                 Phase phase = Phase::training);

/// Flat views of the real-valued parameters, in a fixed order
/// (weight row-major then bias; or gamma then beta).
std::vector<double> float_parameters(const Layer& layer);
std::vector<double> flatten(const ParamGrad& grad);
Layer with_float_parameters(const Layer& layer, std::span<const double> params);

/// Control system of depth T = layers.size() with state dimensions d_0..d_T.
class Network {
 public:
  Network(std::size_t input_dim, std::vector<Layer> layers);

  std::size_t depth() const noexcept { return layers_.size(); }
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t output_dim() const noexcept { return dims_.back(); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const Layer& layer(std::size_t t) const { return layers_.at(t); }

  /// Replaces layer t; the replacement must keep the same kind and dimensions.
  void set_layer(std::size_t t, Layer layer);

  /// Fraction of non-zero entries over all discrete layers (1 when none).
  double nonzero_fraction() const;

 private:
  std::vector<std::size_t> dims_;
  std::vector<Layer> layers_;
};

}  // namespace dmsa
