#include "dmsa/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dmsa/msa.hpp"

namespace dmsa {

namespace {

void require_same_structure(const Network& a, const Network& b) {
  if (a.dims() != b.dims() || a.depth() != b.depth())
    throw ShapeError("parameter sets have different network dimensions");
  for (std::size_t t = 0; t < a.depth(); ++t) {
    if (a.layer(t).index() != b.layer(t).index())
      throw ShapeError("parameter sets differ in kind at layer " + std::to_string(t) + ": " +
                       kind_name(a.layer(t)) + " vs " + kind_name(b.layer(t)));
  }
}

double sum_sq_diff(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

// ||grad_x f(., phi) - grad_x f(., theta)||_F^2 for one sample. It is the
// same for every sample: dense Jacobians are the weights, and batch-norm is
// taken per sample with the batch statistics held fixed.
double jacobian_gap(const Layer& theta, const Layer& phi, const Matrix& x, Phase phase) {
  if (is_discrete(theta)) return frobenius_norm_sq(subtract(discrete_theta(phi), discrete_theta(theta)));
  if (const auto* a = std::get_if<FloatDense>(&theta))
    return frobenius_norm_sq(subtract(std::get<FloatDense>(phi).theta(), a->theta()));
  if (const auto* a = std::get_if<BatchNorm>(&theta)) {
    const auto& b = std::get<BatchNorm>(phi);
    const Vector inv_std = batch_norm_inv_std(*a, x, phase);
    if (phase == Phase::inference) {
      const Vector inv_std_phi = batch_norm_inv_std(b, x, phase);
      double acc = 0.0;
      for (std::size_t j = 0; j < a->dim(); ++j) {
        const double d = b.gamma()[j] * inv_std_phi[j] - a->gamma()[j] * inv_std[j];
        acc += d * d;
      }
      return acc;
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < a->dim(); ++j) {
      const double d = (b.gamma()[j] - a->gamma()[j]) * inv_std[j];
      acc += d * d;
    }
    return acc;
  }
  return 0.0;
}

double max_abs_or_zero(const Matrix& a, const Matrix& b) { return a.size() == 0 ? 0.0 : max_abs_diff(a, b); }

}  // namespace

ErrorEstimateReport theorem2_terms(const Network& theta, const Network& phi, const Matrix& x0,
                                   const TerminalLoss& loss, Phase phase) {
  require_same_structure(theta, phi);
  const Trajectory traj = propagate(theta, x0, loss, phase);
  const double inv_s = 1.0 / static_cast<double>(traj.sample_count);

  ErrorEstimateReport r;
  r.delta_j = objective(phi, x0, loss, phase) - objective_from_states(theta, traj, loss);
  for (std::size_t t = 0; t < theta.depth(); ++t) {
    const Layer& lt = theta.layer(t);
    const Layer& lp = phi.layer(t);
    const Matrix& x = traj.states[t];
    const Matrix& p = traj.costates[t + 1];
    if (is_trainable(lt)) {
      r.hamiltonian_gain += hamiltonian_sum(lp, x, p, traj.sample_count, phase) -
                            hamiltonian_sum(lt, x, p, traj.sample_count, phase);
    }
    r.penalty_f += inv_s * sum_sq_diff(forward(lp, x, phase).values(), forward(lt, x, phase).values());
    // (1/S) sum_s over a per-sample constant.
    r.penalty_grad_f += jacobian_gap(lt, lp, x, phase);
  }
  // Every running cost here depends on theta only, so grad_x L_t = 0.
  r.penalty_grad_l = 0.0;
  return r;
}

double fit_error_constant(std::span<const ErrorEstimateReport> reports) {
  double c = 0.0;
  for (const auto& r : reports) {
    const double pen = r.penalty_sum();
    if (pen > 0.0) c = std::max(c, (r.delta_j + r.hamiltonian_gain) / pen);
  }
  return c;
}

bool error_estimate_holds(const ErrorEstimateReport& r, double c) {
  const double lhs = r.delta_j + r.hamiltonian_gain;
  const double rhs = c * r.penalty_sum();
  const double scale = std::abs(r.delta_j) + std::abs(r.hamiltonian_gain) + std::abs(rhs);
  return lhs <= rhs + 1e-12 * scale;
}

Network random_perturbation(const Network& net, std::mt19937_64& rng, double strength) {
  if (!(strength >= 0.0)) throw std::invalid_argument("random_perturbation: strength must be non-negative");
  std::bernoulli_distribution hit(std::min(1.0, strength));
  std::normal_distribution<double> noise(0.0, strength);
  std::uniform_int_distribution<int> other(0, 1);
  Network out = net;
  for (std::size_t t = 0; t < net.depth(); ++t) {
    const Layer& layer = net.layer(t);
    if (is_discrete(layer)) {
      Matrix theta = discrete_theta(layer);
      const bool ternary = std::holds_alternative<TernaryDense>(layer);
      for (double& v : theta.values()) {
        if (!hit(rng)) continue;
        if (!ternary) {
          v = -v;
        } else {
          // one of the two other values in {-1, 0, +1}
          const int cur = static_cast<int>(v);
          int next = other(rng) == 0 ? -1 : 1;
          if (cur != 0) next = other(rng) == 0 ? 0 : -cur;
          v = next;
        }
      }
      out.set_layer(t, with_discrete_theta(layer, std::move(theta)));
    } else if (is_float_trainable(layer)) {
      auto params = float_parameters(layer);
      for (double& v : params) v += noise(rng);
      out.set_layer(t, with_float_parameters(layer, params));
    }
  }
  return out;
}

double PmpResidualReport::max_gap() const noexcept {
  double g = 0.0;
  for (const auto& l : layers) g = std::max(g, l.hamiltonian_gap);
  return g;
}

PmpResidualReport pmp_residual(const Network& net, const Matrix& x0, const TerminalLoss& loss, Phase phase) {
  const Trajectory traj = propagate(net, x0, loss, phase);
  const double inv_s = 1.0 / static_cast<double>(traj.sample_count);
  PmpResidualReport rep;
  rep.terminal_residual =
      max_abs_or_zero(traj.costates.back(), scale(loss.gradients(traj.states.back()), -inv_s));

  for (std::size_t t = 0; t < net.depth(); ++t) {
    const Layer& layer = net.layer(t);
    if (!is_trainable(layer)) continue;
    const Matrix& x = traj.states[t];
    const Matrix& p = traj.costates[t + 1];
    LayerResidual lr;
    lr.layer = t;
    lr.kind = kind_name(layer);
    lr.state_residual = max_abs_or_zero(traj.states[t + 1], forward(layer, x, phase));
    lr.costate_residual = max_abs_or_zero(traj.costates[t], costate_pullback(layer, x, p, phase));

    if (is_discrete(layer)) {
      const Matrix m = coefficient_matrix(x, p);
      const Matrix& th = discrete_theta(layer);
      lr.singular = max_abs(m) == 0.0;
      const auto* tern = std::get_if<TernaryDense>(&layer);
      const double lam = tern != nullptr ? tern->lambda() * static_cast<double>(x.rows()) * inv_s : 0.0;
      auto mv = m.values();
      auto tv = th.values();
      for (std::size_t i = 0; i < mv.size(); ++i) {
        double best = std::abs(mv[i]);
        double cur = mv[i] * tv[i];
        if (tern != nullptr) {
          best = std::max(0.0, best - lam);
          cur -= lam * tv[i] * tv[i];
        }
        lr.hamiltonian_gap += std::max(0.0, best - cur);
      }
    } else {
      const auto g = flatten(grad_theta_hamiltonian(layer, x, p, phase));
      double sq = 0.0;
      for (double v : g) sq += v * v;
      lr.hamiltonian_gap = std::sqrt(sq);
    }
    rep.layers.push_back(std::move(lr));
  }
  return rep;
}

double backprop_equivalence_check(const Network& net, const Matrix& x0, const TerminalLoss& loss, double eta,
                                  double h) {
  if (!(h > 0.0)) throw std::invalid_argument("backprop_equivalence_check: step h must be positive");
  const Network next = gradient_msa_step(net, x0, loss, eta);
  double worst_diff = 0.0;
  double worst_ref = 0.0;
  double worst_step = 0.0;
  for (std::size_t t = 0; t < net.depth(); ++t) {
    const Layer& layer = net.layer(t);
    if (!is_float_trainable(layer)) continue;
    auto params = float_parameters(layer);
    const auto moved = float_parameters(next.layer(t));
    Network probe = net;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = params[i];
      params[i] = keep + h;
      probe.set_layer(t, with_float_parameters(layer, params));
      const double jp = objective(probe, x0, loss);
      params[i] = keep - h;
      probe.set_layer(t, with_float_parameters(layer, params));
      const double jm = objective(probe, x0, loss);
      params[i] = keep;
      const double expected = -eta * (jp - jm) / (2.0 * h);
      const double actual = moved[i] - keep;
      worst_diff = std::max(worst_diff, std::abs(actual - expected));
      worst_ref = std::max(worst_ref, std::abs(expected));
      worst_step = std::max(worst_step, std::abs(actual));
    }
  }
  if (worst_ref == 0.0) return worst_step == 0.0 ? 0.0 : 1.0;
  return worst_diff / worst_ref;
}

double costate_chain_deviation(const Network& net, const Matrix& x0, const TerminalLoss& loss, Phase phase,
                               double h) {
  if (!(h > 0.0)) throw std::invalid_argument("costate_chain_deviation: step h must be positive");
  const Trajectory traj = propagate(net, x0, loss, phase);
  const double inv_s = 1.0 / static_cast<double>(traj.sample_count);
  auto terminal_total = [&](Matrix x, std::size_t from) {
    for (std::size_t t = from; t < net.depth(); ++t) x = forward(net.layer(t), x, phase);
    return loss.total(x);
  };
  double worst = 0.0;
  for (std::size_t t = 0; t <= net.depth(); ++t) {
    Matrix x = traj.states[t];
    for (std::size_t s = 0; s < x.rows(); ++s) {
      for (std::size_t i = 0; i < x.cols(); ++i) {
        const double keep = x(s, i);
        x(s, i) = keep + h;
        const double fp = terminal_total(x, t);
        x(s, i) = keep - h;
        const double fm = terminal_total(x, t);
        x(s, i) = keep;
        const double expected = -inv_s * (fp - fm) / (2.0 * h);
        worst = std::max(worst, std::abs(traj.costates[t](s, i) - expected));
      }
    }
  }
  return worst;
}

bool gronwall_check(double k, double u0, std::span<const double> w) {
  if (!(k >= 0.0) || !(u0 >= 0.0) || !std::isfinite(k) || !std::isfinite(u0))
    throw std::invalid_argument("gronwall_check: K and u0 must be finite and non-negative");
  double total = u0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("gronwall_check: w must be finite and non-negative");
    total += v;
  }
  const double bound = std::max(1.0, std::pow(k, static_cast<double>(w.size()))) * total;
  const double slack = 1.0 + 1e-12;
  double u = u0;
  if (u > bound * slack) return false;
  for (double v : w) {
    u = k * u + v;
    if (u > bound * slack) return false;
  }
  return true;
}

}  // namespace dmsa
