#include "dmsa/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dmsa {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::mean_square:
      return "mean-square";
    case LossKind::squared_hinge:
      return "squared-hinge";
    case LossKind::softmax_cross_entropy:
      return "softmax-cross-entropy";
  }
  return "unknown";
}

LossKind loss_from_string(const std::string& name) {
  for (auto k : {LossKind::mean_square, LossKind::squared_hinge, LossKind::softmax_cross_entropy}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown loss '" + name + "'");
}

TerminalLoss::TerminalLoss(LossKind kind, Matrix targets) : kind_(kind), targets_(std::move(targets)) {
  if (targets_.rows() == 0) throw std::invalid_argument("TerminalLoss: no targets");
}

TerminalLoss TerminalLoss::from_labels(LossKind kind, std::span<const int> labels, std::size_t classes) {
  const double off = kind == LossKind::squared_hinge ? -1.0 : 0.0;
  Matrix y(labels.size(), classes, off);
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (labels[s] < 0 || static_cast<std::size_t>(labels[s]) >= classes)
      throw std::invalid_argument("TerminalLoss: label " + std::to_string(labels[s]) + " out of range");
    y(s, static_cast<std::size_t>(labels[s])) = 1.0;
  }
  return TerminalLoss(kind, std::move(y));
}

void TerminalLoss::require_batch(const Matrix& x_final) const {
  if (!x_final.same_shape(targets_))
    throw ShapeError("TerminalLoss: outputs " + x_final.shape_string() + " vs targets " +
                     targets_.shape_string());
}

namespace {

std::vector<double> softmax(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> e(x.size());
  double z = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) z += (e[j] = std::exp(x[j] - m));
  for (double& v : e) v /= z;
  return e;
}

}  // namespace

double TerminalLoss::value(std::size_t s, std::span<const double> x) const {
  auto y = targets_.row_span(s);
  if (x.size() != y.size()) throw ShapeError("TerminalLoss::value: output length mismatch");
  double acc = 0.0;
  switch (kind_) {
    case LossKind::mean_square:
      for (std::size_t j = 0; j < x.size(); ++j) acc += 0.5 * (x[j] - y[j]) * (x[j] - y[j]);
      return acc;
    case LossKind::squared_hinge:
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double m = std::max(0.0, 1.0 - x[j] * y[j]);
        acc += m * m;
      }
      return acc;
    case LossKind::softmax_cross_entropy: {
      const double mx = *std::max_element(x.begin(), x.end());
      double z = 0.0;
      for (double v : x) z += std::exp(v - mx);
      const double log_z = mx + std::log(z);
      for (std::size_t j = 0; j < x.size(); ++j) acc -= y[j] * (x[j] - log_z);
      return acc;
    }
  }
  return acc;
}

double TerminalLoss::total(const Matrix& x_final) const {
  require_batch(x_final);
  double acc = 0.0;
  for (std::size_t s = 0; s < x_final.rows(); ++s) acc += value(s, x_final.row_span(s));
  return acc;
}

Matrix TerminalLoss::gradients(const Matrix& x_final) const {
  require_batch(x_final);
  Matrix g(x_final.rows(), x_final.cols());
  for (std::size_t s = 0; s < x_final.rows(); ++s) {
    auto x = x_final.row_span(s);
    auto y = targets_.row_span(s);
    auto out = g.row_span(s);
    switch (kind_) {
      case LossKind::mean_square:
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] - y[j];
        break;
      case LossKind::squared_hinge:
        for (std::size_t j = 0; j < x.size(); ++j) {
          const double m = std::max(0.0, 1.0 - x[j] * y[j]);
          out[j] = -2.0 * m * y[j];
        }
        break;
      case LossKind::softmax_cross_entropy: {
        const auto sm = softmax(x);
        double mass = 0.0;
        for (double v : y) mass += v;
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = mass * sm[j] - y[j];
        break;
      }
    }
  }
  return g;
}

Trajectory forward_pass(const Network& net, const Matrix& x0, Phase phase) {
  if (x0.cols() != net.input_dim())
    throw ShapeError("forward_pass: input has " + std::to_string(x0.cols()) + " features, network expects " +
                     std::to_string(net.input_dim()));
  Trajectory traj;
  traj.sample_count = x0.rows();
  traj.phase = phase;
  traj.states.reserve(net.depth() + 1);
  traj.states.push_back(x0);
  for (const auto& layer : net.layers()) traj.states.push_back(forward(layer, traj.states.back(), phase));
  return traj;
}

Trajectory backward_pass(const Network& net, Trajectory traj, const TerminalLoss& loss, bool input_costate) {
  if (traj.states.size() != net.depth() + 1)
    throw std::invalid_argument("backward_pass: trajectory has no forward states for this network");
  const double inv_s = 1.0 / static_cast<double>(traj.sample_count);
  traj.costates.assign(net.depth() + 1, Matrix());
  traj.costates.back() = scale(loss.gradients(traj.states.back()), -inv_s);
  const std::size_t stop = input_costate ? 0 : 1;
  for (std::size_t t = net.depth(); t-- > stop;) {
    traj.costates[t] = costate_pullback(net.layer(t), traj.states[t], traj.costates[t + 1], traj.phase);
  }
  return traj;
}

Trajectory propagate(const Network& net, const Matrix& x0, const TerminalLoss& loss, Phase phase,
                     bool input_costate) {
  return backward_pass(net, forward_pass(net, x0, phase), loss, input_costate);
}

double regularization_total(const Network& net) {
  double acc = 0.0;
  for (const auto& l : net.layers()) acc += regularizer(l);
  return acc;
}

double objective_from_states(const Network& net, const Trajectory& traj, const TerminalLoss& loss) {
  // L_t has no x dependence, so (1/S) sum_s L_t collapses to L_t.
  return loss.total(traj.states.back()) / static_cast<double>(traj.sample_count) +
         regularization_total(net);
}

double objective(const Network& net, const Matrix& x0, const TerminalLoss& loss, Phase phase) {
  return objective_from_states(net, forward_pass(net, x0, phase), loss);
}

std::vector<int> predict_classes(const Matrix& outputs) {
  std::vector<int> out(outputs.rows());
  for (std::size_t s = 0; s < outputs.rows(); ++s) {
    auto row = outputs.row_span(s);
    out[s] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace dmsa
