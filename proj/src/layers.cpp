#include "dmsa/layers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dmsa {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_entries_in(const Matrix& theta, bool allow_zero, const char* who) {
  for (double v : theta.values()) {
    if (v == 1.0 || v == -1.0 || (allow_zero && v == 0.0)) continue;
    std::ostringstream os;
    os << who << ": weight entry " << v << " outside " << (allow_zero ? "{-1,0,+1}" : "{-1,+1}");
    throw std::invalid_argument(os.str());
  }
}

void require_batch(const Matrix& x, std::size_t dim, const std::string& who) {
  if (x.cols() != dim) {
    std::ostringstream os;
    os << who << ": input has " << x.cols() << " features, layer expects " << dim;
    throw ShapeError(os.str());
  }
}

void require_same_batch(const Matrix& x, const Matrix& p_next, std::size_t out_dim,
                        const std::string& who) {
  if (p_next.rows() != x.rows() || p_next.cols() != out_dim) {
    std::ostringstream os;
    os << who << ": co-state batch " << p_next.shape_string() << " does not match state batch "
       << x.shape_string() << " with output dim " << out_dim;
    throw ShapeError(os.str());
  }
}

double activate(ActivationKind kind, double v) {
  switch (kind) {
    case ActivationKind::relu:
      return v > 0.0 ? v : 0.0;
    case ActivationKind::tanh:
      return std::tanh(v);
    case ActivationKind::sigmoid:
      return 1.0 / (1.0 + std::exp(-v));
    case ActivationKind::softplus:
      return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    case ActivationKind::identity:
      return v;
  }
  return v;
}

// ReLU uses the subgradient 0 at the kink.
double activation_slope(ActivationKind kind, double v) {
  switch (kind) {
    case ActivationKind::relu:
      return v > 0.0 ? 1.0 : 0.0;
    case ActivationKind::tanh: {
      const double t = std::tanh(v);
      return 1.0 - t * t;
    }
    case ActivationKind::sigmoid:
    case ActivationKind::softplus: {
      const double s = 1.0 / (1.0 + std::exp(-v));
      return kind == ActivationKind::softplus ? s : s * (1.0 - s);
    }
    case ActivationKind::identity:
      return 1.0;
  }
  return 1.0;
}

struct NormStats {
  Vector mean;
  Vector inv_std;
};

NormStats batch_stats(const BatchNorm& bn, const Matrix& x, Phase phase) {
  const std::size_t d = bn.dim();
  NormStats st{Vector(d), Vector(d)};
  if (phase == Phase::inference) {
    for (std::size_t j = 0; j < d; ++j) {
      st.mean[j] = bn.running_mean()[j];
      st.inv_std[j] = 1.0 / std::sqrt(bn.running_var()[j] + bn.eps());
    }
    return st;
  }
  if (x.rows() < 2) throw std::invalid_argument("BatchNorm: training needs a batch of at least 2");
  const double n = static_cast<double>(x.rows());
  st.mean = column_sums(x);
  for (std::size_t j = 0; j < d; ++j) st.mean[j] /= n;
  Vector var(d);
  for (std::size_t s = 0; s < x.rows(); ++s) {
    auto row = x.row_span(s);
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - st.mean[j];
      var[j] += c * c;
    }
  }
  for (std::size_t j = 0; j < d; ++j) st.inv_std[j] = 1.0 / std::sqrt(var[j] / n + bn.eps());
  return st;
}

Matrix normalized(const Matrix& x, const NormStats& st) {
  Matrix xhat(x.rows(), x.cols());
  for (std::size_t s = 0; s < x.rows(); ++s) {
    auto in = x.row_span(s);
    auto out = xhat.row_span(s);
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] = (in[j] - st.mean[j]) * st.inv_std[j];
  }
  return xhat;
}

Matrix dense_forward(const Matrix& theta, const Matrix& x) { return matmul_bt(x, theta); }

}  // namespace

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::relu:
      return "relu";
    case ActivationKind::tanh:
      return "tanh";
    case ActivationKind::sigmoid:
      return "sigmoid";
    case ActivationKind::softplus:
      return "softplus";
    case ActivationKind::identity:
      return "identity";
  }
  return "unknown";
}

ActivationKind activation_from_string(const std::string& name) {
  for (auto k : {ActivationKind::relu, ActivationKind::tanh, ActivationKind::sigmoid,
                 ActivationKind::softplus, ActivationKind::identity}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown activation '" + name + "'");
}

BinaryDense::BinaryDense(Matrix theta) : theta_(std::move(theta)) {
  require_entries_in(theta_, false, "BinaryDense");
}

TernaryDense::TernaryDense(Matrix theta, double lambda) : theta_(std::move(theta)), lambda_(lambda) {
  require_entries_in(theta_, true, "TernaryDense");
  if (!(lambda_ >= 0.0) || !std::isfinite(lambda_))
    throw std::invalid_argument("TernaryDense: lambda must be finite and non-negative");
}

FloatDense::FloatDense(Matrix theta, std::optional<Vector> bias)
    : theta_(std::move(theta)), bias_(std::move(bias)) {
  if (bias_ && bias_->dim() != theta_.rows())
    throw ShapeError("FloatDense: bias length does not match output dimension");
}

BatchNorm::BatchNorm(std::size_t dim, double eps, double momentum)
    : BatchNorm(Vector(dim, 1.0), Vector(dim, 0.0), Vector(dim, 0.0), Vector(dim, 1.0), eps,
                momentum) {}

BatchNorm::BatchNorm(Vector gamma, Vector beta, Vector running_mean, Vector running_var,
                     double eps, double momentum)
    : gamma_(std::move(gamma)),
      beta_(std::move(beta)),
      running_mean_(std::move(running_mean)),
      running_var_(std::move(running_var)),
      eps_(eps),
      momentum_(momentum) {
  const std::size_t d = gamma_.dim();
  if (beta_.dim() != d || running_mean_.dim() != d || running_var_.dim() != d)
    throw ShapeError("BatchNorm: parameter vectors differ in length");
  if (!(eps_ > 0.0)) throw std::invalid_argument("BatchNorm: eps must be positive");
  if (!(momentum_ >= 0.0 && momentum_ < 1.0))
    throw std::invalid_argument("BatchNorm: momentum must lie in [0,1)");
  for (std::size_t j = 0; j < d; ++j) {
    if (!(running_var_[j] >= 0.0)) throw std::invalid_argument("BatchNorm: negative running variance");
  }
}

BatchNorm BatchNorm::with_affine(Vector gamma, Vector beta) const {
  return BatchNorm(std::move(gamma), std::move(beta), running_mean_, running_var_, eps_, momentum_);
}

BatchNorm BatchNorm::with_running_stats_from(const Matrix& batch) const {
  require_batch(batch, dim(), "BatchNorm");
  if (batch.rows() < 2) throw std::invalid_argument("BatchNorm: training needs a batch of at least 2");
  const double n = static_cast<double>(batch.rows());
  Vector mean = column_sums(batch);
  for (std::size_t j = 0; j < dim(); ++j) mean[j] /= n;
  Vector var(dim());
  for (std::size_t s = 0; s < batch.rows(); ++s) {
    auto row = batch.row_span(s);
    for (std::size_t j = 0; j < dim(); ++j) var[j] += (row[j] - mean[j]) * (row[j] - mean[j]);
  }
  Vector rm(dim()), rv(dim());
  for (std::size_t j = 0; j < dim(); ++j) {
    rm[j] = momentum_ * running_mean_[j] + (1.0 - momentum_) * mean[j];
    rv[j] = momentum_ * running_var_[j] + (1.0 - momentum_) * var[j] / (n - 1.0);
  }
  return BatchNorm(gamma_, beta_, std::move(rm), std::move(rv), eps_, momentum_);
}

Vector batch_norm_inv_std(const BatchNorm& bn, const Matrix& x, Phase phase) {
  require_batch(x, bn.dim(), "BatchNorm");
  return batch_stats(bn, x, phase).inv_std;
}

std::string kind_name(const Layer& layer) {
  return std::visit(overloaded{
                        [](const BinaryDense&) { return std::string("binary_dense"); },
                        [](const TernaryDense&) { return std::string("ternary_dense"); },
                        [](const FloatDense&) { return std::string("float_dense"); },
                        [](const Activation&) { return std::string("activation"); },
                        [](const BatchNorm&) { return std::string("batch_norm"); },
                    },
                    layer);
}

bool is_discrete(const Layer& layer) {
  return std::holds_alternative<BinaryDense>(layer) || std::holds_alternative<TernaryDense>(layer);
}

bool is_float_trainable(const Layer& layer) {
  return std::holds_alternative<FloatDense>(layer) || std::holds_alternative<BatchNorm>(layer);
}

bool is_trainable(const Layer& layer) { return is_discrete(layer) || is_float_trainable(layer); }

const Matrix& discrete_theta(const Layer& layer) {
  if (const auto* b = std::get_if<BinaryDense>(&layer)) return b->theta();
  if (const auto* t = std::get_if<TernaryDense>(&layer)) return t->theta();
  throw std::invalid_argument("discrete_theta: " + kind_name(layer) + " is not a discrete layer");
}

Layer with_discrete_theta(const Layer& layer, Matrix theta) {
  const Matrix& old = discrete_theta(layer);
  if (!old.same_shape(theta))
    throw ShapeError("with_discrete_theta: " + theta.shape_string() + " replaces " + old.shape_string());
  if (const auto* t = std::get_if<TernaryDense>(&layer)) return TernaryDense(std::move(theta), t->lambda());
  return BinaryDense(std::move(theta));
}

std::size_t output_dim(const Layer& layer, std::size_t input_dim) {
  auto check = [&](std::size_t expected) {
    if (expected != input_dim) {
      std::ostringstream os;
      os << kind_name(layer) << ": expects input dim " << expected << ", got " << input_dim;
      throw ShapeError(os.str());
    }
  };
  return std::visit(overloaded{
                        [&](const BinaryDense& l) { check(l.in_dim()); return l.out_dim(); },
                        [&](const TernaryDense& l) { check(l.in_dim()); return l.out_dim(); },
                        [&](const FloatDense& l) { check(l.in_dim()); return l.out_dim(); },
                        [&](const Activation&) { return input_dim; },
                        [&](const BatchNorm& l) { check(l.dim()); return l.dim(); },
                    },
                    layer);
}

Matrix forward(const Layer& layer, const Matrix& x, Phase phase) {
  return std::visit(
      overloaded{
          [&](const BinaryDense& l) {
            require_batch(x, l.in_dim(), "BinaryDense");
            return dense_forward(l.theta(), x);
          },
          [&](const TernaryDense& l) {
            require_batch(x, l.in_dim(), "TernaryDense");
            return dense_forward(l.theta(), x);
          },
          [&](const FloatDense& l) {
            require_batch(x, l.in_dim(), "FloatDense");
            Matrix y = dense_forward(l.theta(), x);
            if (l.bias()) {
              for (std::size_t s = 0; s < y.rows(); ++s) {
                auto row = y.row_span(s);
                for (std::size_t i = 0; i < y.cols(); ++i) row[i] += (*l.bias())[i];
              }
            }
            return y;
          },
          [&](const Activation& l) {
            return elementwise(x, [k = l.kind](double v) { return activate(k, v); });
          },
          [&](const BatchNorm& l) {
            require_batch(x, l.dim(), "BatchNorm");
            const NormStats st = batch_stats(l, x, phase);
            Matrix y = normalized(x, st);
            for (std::size_t s = 0; s < y.rows(); ++s) {
              auto row = y.row_span(s);
              for (std::size_t j = 0; j < y.cols(); ++j) row[j] = l.gamma()[j] * row[j] + l.beta()[j];
            }
            return y;
          },
      },
      layer);
}

Matrix costate_pullback(const Layer& layer, const Matrix& x, const Matrix& p_next, Phase phase) {
  return std::visit(
      overloaded{
          [&](const BinaryDense& l) {
            require_batch(x, l.in_dim(), "BinaryDense");
            require_same_batch(x, p_next, l.out_dim(), "BinaryDense");
            return matmul(p_next, l.theta());
          },
          [&](const TernaryDense& l) {
            require_batch(x, l.in_dim(), "TernaryDense");
            require_same_batch(x, p_next, l.out_dim(), "TernaryDense");
            return matmul(p_next, l.theta());
          },
          [&](const FloatDense& l) {
            require_batch(x, l.in_dim(), "FloatDense");
            require_same_batch(x, p_next, l.out_dim(), "FloatDense");
            return matmul(p_next, l.theta());
          },
          [&](const Activation& l) {
            require_same_batch(x, p_next, x.cols(), "Activation");
            Matrix p(x.rows(), x.cols());
            auto xs = x.values();
            auto ps = p_next.values();
            auto out = p.values();
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = activation_slope(l.kind, xs[i]) * ps[i];
            return p;
          },
          [&](const BatchNorm& l) {
            require_batch(x, l.dim(), "BatchNorm");
            require_same_batch(x, p_next, l.dim(), "BatchNorm");
            const NormStats st = batch_stats(l, x, phase);
            Matrix p(x.rows(), x.cols());
            if (phase == Phase::inference) {
              for (std::size_t s = 0; s < x.rows(); ++s)
                for (std::size_t j = 0; j < x.cols(); ++j)
                  p(s, j) = l.gamma()[j] * st.inv_std[j] * p_next(s, j);
              return p;
            }
            // d/dx_s of sum_r p_r . y_r with batch mean and variance depending on every x_r.
            const Matrix xhat = normalized(x, st);
            const double n = static_cast<double>(x.rows());
            Vector mean_p = column_sums(p_next);
            Vector mean_p_xhat = column_sums(hadamard(p_next, xhat));
            for (std::size_t j = 0; j < x.cols(); ++j) {
              mean_p[j] /= n;
              mean_p_xhat[j] /= n;
            }
            for (std::size_t s = 0; s < x.rows(); ++s)
              for (std::size_t j = 0; j < x.cols(); ++j)
                p(s, j) = l.gamma()[j] * st.inv_std[j] *
                          (p_next(s, j) - mean_p[j] - xhat(s, j) * mean_p_xhat[j]);
            return p;
          },
      },
      layer);
}

double regularizer(const Layer& layer) {
  if (const auto* t = std::get_if<TernaryDense>(&layer)) return t->lambda() * frobenius_norm_sq(t->theta());
  return 0.0;
}

double hamiltonian_sum(const Layer& candidate, const Matrix& x, const Matrix& p_next,
                       std::size_t sample_count, Phase phase) {
  if (sample_count == 0) throw std::invalid_argument("hamiltonian_sum: sample count must be positive");
  const Matrix y = forward(candidate, x, phase);
  if (!y.same_shape(p_next))
    throw ShapeError("hamiltonian_sum: co-states " + p_next.shape_string() + " vs outputs " +
                     y.shape_string());
  const double n = static_cast<double>(x.rows());
  return inner(p_next, y) - n / static_cast<double>(sample_count) * regularizer(candidate);
}

Matrix coefficient_matrix(const Matrix& x, const Matrix& p_next) {
  if (x.rows() == 0) throw std::invalid_argument("coefficient_matrix: empty batch");
  if (p_next.rows() != x.rows())
    throw ShapeError("coefficient_matrix: " + p_next.shape_string() + " co-states for " +
                     x.shape_string() + " states");
  // Both orders sum over samples identically; skipping zeros pays off on
  // the sparser operand (raw pixels, ReLU outputs).
  const auto zeros = [](const Matrix& m) { return std::count(m.values().begin(), m.values().end(), 0.0); };
  if (zeros(x) * static_cast<std::ptrdiff_t>(p_next.cols()) > zeros(p_next) * static_cast<std::ptrdiff_t>(x.cols()))
    return transpose(matmul_at(x, p_next));
  return matmul_at(p_next, x);
}

ParamGrad grad_theta_hamiltonian(const Layer& layer, const Matrix& x, const Matrix& p_next,
                                 Phase phase) {
  if (const auto* l = std::get_if<FloatDense>(&layer)) {
    require_batch(x, l->in_dim(), "FloatDense");
    require_same_batch(x, p_next, l->out_dim(), "FloatDense");
    DenseGrad g{coefficient_matrix(x, p_next), std::nullopt};
    if (l->bias()) g.bias = column_sums(p_next);
    return g;
  }
  if (const auto* l = std::get_if<BatchNorm>(&layer)) {
    require_batch(x, l->dim(), "BatchNorm");
    require_same_batch(x, p_next, l->dim(), "BatchNorm");
    const Matrix xhat = normalized(x, batch_stats(*l, x, phase));
    return BatchNormGrad{column_sums(hadamard(p_next, xhat)), column_sums(p_next)};
  }
  throw std::invalid_argument("grad_theta_hamiltonian: " + kind_name(layer) +
                              " has no real-valued parameters");
}

std::vector<double> float_parameters(const Layer& layer) {
  std::vector<double> out;
  if (const auto* l = std::get_if<FloatDense>(&layer)) {
    out.assign(l->theta().values().begin(), l->theta().values().end());
    if (l->bias()) out.insert(out.end(), l->bias()->values().begin(), l->bias()->values().end());
    return out;
  }
  if (const auto* l = std::get_if<BatchNorm>(&layer)) {
    out.assign(l->gamma().values().begin(), l->gamma().values().end());
    out.insert(out.end(), l->beta().values().begin(), l->beta().values().end());
    return out;
  }
  throw std::invalid_argument("float_parameters: " + kind_name(layer) + " has no real-valued parameters");
}

std::vector<double> flatten(const ParamGrad& grad) {
  std::vector<double> out;
  std::visit(overloaded{
                 [&](const DenseGrad& g) {
                   out.assign(g.weight.values().begin(), g.weight.values().end());
                   if (g.bias) out.insert(out.end(), g.bias->values().begin(), g.bias->values().end());
                 },
                 [&](const BatchNormGrad& g) {
                   out.assign(g.gamma.values().begin(), g.gamma.values().end());
                   out.insert(out.end(), g.beta.values().begin(), g.beta.values().end());
                 },
             },
             grad);
  return out;
}

Layer with_float_parameters(const Layer& layer, std::span<const double> params) {
  const std::size_t expected = float_parameters(layer).size();
  if (params.size() != expected) throw ShapeError("with_float_parameters: parameter count mismatch");
  if (const auto* l = std::get_if<FloatDense>(&layer)) {
    const std::size_t nw = l->theta().size();
    Matrix w(l->theta().rows(), l->theta().cols(),
             std::vector<double>(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(nw)));
    std::optional<Vector> b;
    if (l->bias()) b = Vector(std::vector<double>(params.begin() + static_cast<std::ptrdiff_t>(nw), params.end()));
    return FloatDense(std::move(w), std::move(b));
  }
  const auto& bn = std::get<BatchNorm>(layer);
  const auto d = static_cast<std::ptrdiff_t>(bn.dim());
  return bn.with_affine(Vector(std::vector<double>(params.begin(), params.begin() + d)),
                        Vector(std::vector<double>(params.begin() + d, params.end())));
}

Network::Network(std::size_t input_dim, std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("Network: needs at least one layer");
  if (input_dim == 0) throw std::invalid_argument("Network: input dimension must be positive");
  dims_.push_back(input_dim);
  for (std::size_t t = 0; t < layers_.size(); ++t) {
    try {
      dims_.push_back(dmsa::output_dim(layers_[t], dims_.back()));
    } catch (const ShapeError& e) {
      throw ShapeError("Network layer " + std::to_string(t) + ": " + e.what());
    }
  }
}

void Network::set_layer(std::size_t t, Layer layer) {
  if (t >= layers_.size()) throw std::out_of_range("Network::set_layer: index out of range");
  if (layer.index() != layers_[t].index())
    throw std::invalid_argument("Network::set_layer: layer kind changed at " + std::to_string(t));
  if (dmsa::output_dim(layer, dims_[t]) != dims_[t + 1])
    throw ShapeError("Network::set_layer: output dimension changed at " + std::to_string(t));
  layers_[t] = std::move(layer);
}

double Network::nonzero_fraction() const {
  std::size_t total = 0;
  std::size_t nonzero = 0;
  for (const auto& l : layers_) {
    if (!is_discrete(l)) continue;
    for (double v : discrete_theta(l).values()) {
      ++total;
      if (v != 0.0) ++nonzero;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(nonzero) / static_cast<double>(total);
}

}  // namespace dmsa
