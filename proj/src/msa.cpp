#include "dmsa/msa.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace dmsa {

namespace {

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
}

double sparsity_of(const Matrix& theta) {
  std::size_t nz = 0;
  for (double v : theta.values()) nz += v != 0.0;
  return theta.size() == 0 ? 1.0 : static_cast<double>(nz) / static_cast<double>(theta.size());
}

}  // namespace

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::basic_msa:
      return "basic-msa";
    case OptimizerKind::binary_msa:
      return "binary-msa";
    case OptimizerKind::ternary_msa:
      return "ternary-msa";
    case OptimizerKind::gradient_msa:
      return "gradient-msa";
  }
  return "unknown";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  for (auto k : {OptimizerKind::basic_msa, OptimizerKind::binary_msa, OptimizerKind::ternary_msa,
                 OptimizerKind::gradient_msa}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

Matrix binary_update(const Matrix& theta_k, const Matrix& mbar, double rho) {
  require_same(theta_k, mbar, "binary_update");
  if (!(rho >= 0.0)) throw std::invalid_argument("binary_update: rho must be non-negative");
  Matrix out = theta_k;
  auto m = mbar.values();
  auto th = out.values();
  const double threshold = 2.0 * rho;
  for (std::size_t i = 0; i < th.size(); ++i) {
    if (m[i] != 0.0 && std::abs(m[i]) >= threshold) th[i] = signum(m[i]);
  }
  return out;
}

Matrix ternary_update(const Matrix& theta_k, const Matrix& mbar, double rho, double lambda) {
  require_same(theta_k, mbar, "ternary_update");
  if (!(rho >= 0.0) || !(lambda >= 0.0))
    throw std::invalid_argument("ternary_update: rho and lambda must be non-negative");
  Matrix out(theta_k.rows(), theta_k.cols());
  auto m = mbar.values();
  auto th = theta_k.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (m[i] >= rho * (1.0 - 2.0 * th[i]) + lambda) {
      dst[i] = 1.0;
    } else if (m[i] <= -rho * (1.0 + 2.0 * th[i]) - lambda) {
      dst[i] = -1.0;
    } else {
      dst[i] = 0.0;
    }
  }
  return out;
}

Matrix update_moving_average(const Matrix& mbar, const Matrix& m_current, double alpha) {
  require_same(mbar, m_current, "update_moving_average");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("update_moving_average: alpha must lie in [0,1)");
  Matrix out(mbar.rows(), mbar.cols());
  auto a = mbar.values();
  auto b = m_current.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = alpha * a[i] + (1.0 - alpha) * b[i];
  return out;
}

double rho_from_heuristic(const Matrix& mbar, const Matrix& theta_k, double fraction) {
  require_same(theta_k, mbar, "rho_from_heuristic");
  if (!(fraction > 0.0)) throw std::invalid_argument("rho_from_heuristic: fraction must be positive");
  double worst = 0.0;
  auto m = mbar.values();
  auto th = theta_k.values();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] != 0.0 && signum(m[i]) != signum(th[i])) worst = std::max(worst, std::abs(m[i]));
  }
  return fraction * worst;
}

double alpha_schedule(double alpha0, double decay, std::size_t step, std::size_t period) {
  if (period == 0) throw std::invalid_argument("alpha_schedule: period must be positive");
  return 1.0 - (1.0 - alpha0) * std::pow(decay, static_cast<double>(step / period));
}

Layer exact_argmax(const Layer& current, const Matrix& x, const Matrix& p_next, std::size_t sample_count) {
  const Matrix m = coefficient_matrix(x, p_next);
  if (const auto* b = std::get_if<BinaryDense>(&current)) return BinaryDense(binary_update(b->theta(), m, 0.0));
  if (const auto* t = std::get_if<TernaryDense>(&current)) {
    // sum_s H = <M, theta> - (n/S) lambda ||theta||^2
    const double lam = t->lambda() * static_cast<double>(x.rows()) / static_cast<double>(sample_count);
    return TernaryDense(ternary_update(t->theta(), m, 0.0, lam), t->lambda());
  }
  throw std::invalid_argument("exact_argmax: no closed-form maximizer for " + kind_name(current));
}

Network basic_msa_step(const Network& net, const Matrix& x0, const TerminalLoss& loss, const Maximizer& maximizer) {
  const Trajectory traj = propagate(net, x0, loss);
  Network next = net;
  for (std::size_t t = 0; t < net.depth(); ++t) {
    if (!is_trainable(net.layer(t))) continue;
    next.set_layer(t, maximizer(net.layer(t), traj.states[t], traj.costates[t + 1], traj.sample_count));
  }
  return next;
}

Network gradient_msa_step(const Network& net, const Matrix& x0, const TerminalLoss& loss, double eta) {
  for (std::size_t t = 0; t < net.depth(); ++t) {
    if (is_discrete(net.layer(t)))
      throw std::invalid_argument("gradient_msa_step: layer " + std::to_string(t) + " (" +
                                  kind_name(net.layer(t)) + ") is discrete");
  }
  const Trajectory traj = propagate(net, x0, loss);
  Network next = net;
  for (std::size_t t = 0; t < net.depth(); ++t) {
    const Layer& layer = net.layer(t);
    if (!is_float_trainable(layer)) continue;
    auto params = float_parameters(layer);
    const auto grad = flatten(grad_theta_hamiltonian(layer, traj.states[t], traj.costates[t + 1], traj.phase));
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += eta * grad[i];
    next.set_layer(t, with_float_parameters(layer, params));
  }
  return next;
}

std::vector<double> Adam::step(std::size_t slot, const std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != grad.size()) throw ShapeError("Adam::step: gradient length mismatch");
  if (moments_.size() <= slot) moments_.resize(slot + 1);
  Moments& mo = moments_[slot];
  if (mo.m.empty()) {
    mo.m.assign(params.size(), 0.0);
    mo.v.assign(params.size(), 0.0);
  }
  ++mo.t;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(mo.t));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(mo.t));
  std::vector<double> out = params;
  for (std::size_t i = 0; i < out.size(); ++i) {
    mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * grad[i];
    mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    out[i] -= cfg_.rate * (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + cfg_.eps);
  }
  return out;
}

MsaHyperparams default_hyperparams(OptimizerKind kind) {
  MsaHyperparams h;
  h.rho_fraction = kind == OptimizerKind::ternary_msa ? 0.25 : 0.5;
  return h;
}

void validate_optimizer(OptimizerKind kind, const Network& net) {
  for (std::size_t t = 0; t < net.depth(); ++t) {
    const Layer& l = net.layer(t);
    const std::string where = "layer " + std::to_string(t) + " (" + kind_name(l) + ")";
    if (kind == OptimizerKind::binary_msa && std::holds_alternative<TernaryDense>(l))
      throw std::invalid_argument("binary-msa cannot train ternary " + where);
    if (kind == OptimizerKind::ternary_msa && std::holds_alternative<BinaryDense>(l))
      throw std::invalid_argument("ternary-msa cannot train binary " + where);
    if (kind == OptimizerKind::gradient_msa && is_discrete(l))
      throw std::invalid_argument("gradient-msa cannot train discrete " + where);
  }
}

MsaOptimizer::MsaOptimizer(OptimizerKind kind, MsaHyperparams hyper, const Network& net, std::size_t steps_per_epoch)
    : kind_(kind),
      hyper_(hyper),
      decay_period_(hyper.alpha_decay_steps != 0 ? hyper.alpha_decay_steps : std::max<std::size_t>(1, steps_per_epoch)),
      adam_(hyper.adam) {
  validate_optimizer(kind, net);
  if (!(hyper_.alpha0 >= 0.0 && hyper_.alpha0 < 1.0)) throw std::invalid_argument("alpha0 must lie in [0,1)");
  if (!(hyper_.alpha_decay > 0.0 && hyper_.alpha_decay <= 1.0))
    throw std::invalid_argument("alpha decay must lie in (0,1]");
  if (!(hyper_.rho_fraction > 0.0)) throw std::invalid_argument("rho fraction must be positive");
  if (hyper_.fixed_rho && !(*hyper_.fixed_rho >= 0.0)) throw std::invalid_argument("fixed rho must be non-negative");
  state_.mbar.resize(net.depth());
  state_.last_rho.assign(net.depth(), 0.0);
  for (std::size_t t = 0; t < net.depth(); ++t) {
    if (is_discrete(net.layer(t))) {
      const Matrix& th = discrete_theta(net.layer(t));
      state_.mbar[t] = Matrix(th.rows(), th.cols());
    }
  }
  state_.alpha = hyper_.alpha0;
}

double MsaOptimizer::step(Network& net, const Matrix& x0, const TerminalLoss& loss) {
  const Trajectory traj = propagate(net, x0, loss, Phase::training, false);
  const double j = objective_from_states(net, traj, loss);
  state_.alpha = alpha_schedule(hyper_.alpha0, hyper_.alpha_decay, state_.step, decay_period_);

  for (std::size_t t = 0; t < net.depth(); ++t) {
    const Layer& layer = net.layer(t);
    const Matrix& x = traj.states[t];
    const Matrix& p_next = traj.costates[t + 1];

    if (is_discrete(layer)) {
      if (kind_ == OptimizerKind::basic_msa) {
        net.set_layer(t, exact_argmax(layer, x, p_next, traj.sample_count));
        continue;
      }
      const Matrix& theta = discrete_theta(layer);
      Matrix& mbar = *state_.mbar[t];
      const Matrix m = coefficient_matrix(x, p_next);
      mbar = update_moving_average(mbar, m, state_.alpha);
      const auto* tern = std::get_if<TernaryDense>(&layer);
      // For binary layers the heuristic gives the flip threshold 2 rho; the
      // ternary rule takes it as rho itself.
      double rho = hyper_.fixed_rho.value_or(0.0);
      if (!hyper_.fixed_rho) {
        rho = rho_from_heuristic(hyper_.rho_from_current ? m : mbar, theta, hyper_.rho_fraction);
        if (tern == nullptr) rho *= 0.5;
      }
      state_.last_rho[t] = rho;
      if (tern != nullptr) {
        net.set_layer(t, TernaryDense(ternary_update(theta, mbar, rho, tern->lambda()), tern->lambda()));
      } else {
        net.set_layer(t, BinaryDense(binary_update(theta, mbar, rho)));
      }
      continue;
    }

    if (!is_float_trainable(layer)) continue;
    auto params = float_parameters(layer);
    const auto grad_h = flatten(grad_theta_hamiltonian(layer, x, p_next, traj.phase));
    Layer updated = layer;
    if (kind_ == OptimizerKind::gradient_msa) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] += hyper_.eta * grad_h[i];
      updated = with_float_parameters(layer, params);
    } else {
      // grad J = -grad_theta sum_s H
      std::vector<double> grad_j(grad_h.size());
      std::transform(grad_h.begin(), grad_h.end(), grad_j.begin(), [](double g) { return -g; });
      updated = with_float_parameters(layer, adam_.step(t, params, grad_j));
    }
    if (const auto* bn = std::get_if<BatchNorm>(&updated)) updated = bn->with_running_stats_from(x);
    net.set_layer(t, std::move(updated));
  }
  ++state_.step;
  return j;
}

TerminalLoss make_loss(LossKind kind, const Dataset& batch, std::size_t output_dim) {
  if (batch.has_labels()) return TerminalLoss::from_labels(kind, batch.labels, output_dim);
  if (batch.targets.empty()) throw std::invalid_argument("make_loss: dataset has neither labels nor targets");
  return TerminalLoss(kind, batch.targets);
}

EvalResult evaluate(const Network& net, const Dataset& ds, LossKind loss_kind, std::size_t chunk) {
  if (ds.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  double loss_total = 0.0;
  std::size_t wrong = 0;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + chunk); ++i) idx.push_back(i);
    const Dataset part = ds.subset(idx);
    const Trajectory traj = forward_pass(net, part.inputs, Phase::inference);
    const Matrix& out = traj.states.back();
    const TerminalLoss loss = make_loss(loss_kind, part, net.output_dim());
    loss_total += loss.total(out);
    if (part.has_labels()) {
      const auto pred = predict_classes(out);
      for (std::size_t s = 0; s < pred.size(); ++s) wrong += pred[s] != part.labels[s];
    } else {
      for (std::size_t s = 0; s < out.rows(); ++s) {
        bool off = false;
        for (std::size_t j = 0; j < out.cols(); ++j) off = off || std::abs(out(s, j) - part.targets(s, j)) > 0.5;
        wrong += off;
      }
    }
  }
  const double n = static_cast<double>(ds.size());
  return {loss_total / n + regularization_total(net), static_cast<double>(wrong) / n};
}

TrainResult train(Network net, const Dataset& train_set, const Dataset* test_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (config.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
  if (train_set.inputs.cols() != net.input_dim())
    throw ShapeError("train: dataset has " + std::to_string(train_set.inputs.cols()) +
                     " features, network expects " + std::to_string(net.input_dim()));

  const std::size_t steps_per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
  MsaOptimizer opt(config.optimizer, config.hyper, net, steps_per_epoch);
  TrainResult result{std::move(net), {}};
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& idx : epoch_batches(train_set.size(), config.batch_size, config.seed, epoch)) {
      const Dataset batch = train_set.subset(idx);
      opt.step(result.net, batch.inputs, make_loss(config.loss, batch, result.net.output_dim()));
    }

    MetricsRecord rec;
    rec.epoch = epoch + 1;
    rec.step = opt.state().step;
    const EvalResult tr = evaluate(result.net, train_set, config.loss);
    rec.j_train = tr.objective;
    rec.train_error = tr.error_rate;
    if (test_set != nullptr && test_set->size() > 0) rec.test_error = evaluate(result.net, *test_set, config.loss).error_rate;
    rec.sparsity = result.net.nonzero_fraction();
    for (std::size_t t = 0; t < result.net.depth(); ++t) {
      if (is_discrete(result.net.layer(t))) rec.layer_sparsity.emplace_back(t, sparsity_of(discrete_theta(result.net.layer(t))));
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (on_epoch) on_epoch(rec);
    result.metrics.push_back(std::move(rec));
  }
  return result;
}

}  // namespace dmsa
