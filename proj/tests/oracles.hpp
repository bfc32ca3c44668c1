#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library's own kernels except to build inputs.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dmsa/layers.hpp"
#include "dmsa/linalg.hpp"

namespace oracle {

using dmsa::Matrix;

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

inline Matrix random_signs(std::size_t r, std::size_t c, std::mt19937_64& rng, bool allow_zero = false) {
  std::uniform_int_distribution<int> pick(allow_zero ? -1 : 0, 1);
  Matrix m(r, c);
  for (double& v : m.values()) {
    const int k = pick(rng);
    v = allow_zero ? k : (k == 0 ? -1.0 : 1.0);
  }
  return m;
}

inline Matrix triple_loop(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

/// Central differences of a scalar function of a matrix, entry by entry.
inline Matrix fd_gradient(const std::function<double(const Matrix&)>& f, Matrix at, double h = 1e-5) {
  Matrix g(at.rows(), at.cols());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double keep = at.values()[i];
    at.values()[i] = keep + h;
    const double fp = f(at);
    at.values()[i] = keep - h;
    const double fm = f(at);
    at.values()[i] = keep;
    g.values()[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// argmax over `choices` of m*v - lambda*v^2 - rho*(v - vk)^2; the first
/// maximizer in `choices` order wins ties.
inline double brute_entry(double m, double vk, double rho, double lambda, const std::vector<double>& choices) {
  double best_v = choices.front();
  double best = -INFINITY;
  for (double v : choices) {
    const double val = m * v - lambda * v * v - rho * (v - vk) * (v - vk);
    if (val > best) {
      best = val;
      best_v = v;
    }
  }
  return best_v;
}

/// Value of the augmented objective <M,theta> - lambda||theta||^2 - rho||theta-theta_k||^2.
inline double augmented(const Matrix& m, const Matrix& theta, const Matrix& theta_k, double rho, double lambda) {
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double v = theta.values()[i];
    const double d = v - theta_k.values()[i];
    acc += m.values()[i] * v - lambda * v * v - rho * d * d;
  }
  return acc;
}

/// u_{t+1} = K u_t + w_t, all t.
inline std::vector<double> gronwall_sequence(double k, double u0, const std::vector<double>& w) {
  std::vector<double> u{u0};
  for (double v : w) u.push_back(k * u.back() + v);
  return u;
}

}  // namespace oracle
