#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dmsa/layers.hpp"
#include "oracles.hpp"

using namespace dmsa;

namespace {

// grad_x sum_s p_s . f(x_s) by central differences over the whole batch.
Matrix fd_pullback(const Layer& layer, const Matrix& x, const Matrix& p, Phase phase) {
  return oracle::fd_gradient([&](const Matrix& xx) { return inner(p, forward(layer, xx, phase)); }, x);
}

void expect_pullback(const Layer& layer, std::size_t in, std::size_t out, Phase phase, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix x = oracle::random_matrix(7, in, rng);
  const Matrix p = oracle::random_matrix(7, out, rng);
  const Matrix got = costate_pullback(layer, x, p, phase);
  const Matrix want = fd_pullback(layer, x, p, phase);
  EXPECT_LT(max_abs_diff(got, want), 1e-7) << kind_name(layer);
}

BatchNorm random_bn(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector g(d), b(d), m(d), v(d);
  for (std::size_t i = 0; i < d; ++i) {
    g[i] = 1.0 + 0.3 * n(rng);
    b[i] = n(rng);
    m[i] = 0.2 * n(rng);
    v[i] = 0.5 + std::abs(n(rng));
  }
  return BatchNorm(g, b, m, v, 1e-5, 0.9);
}

}  // namespace

TEST(Layers, ActivationValues) {
  const Matrix x{{-1.0, 0.0, 2.0}};
  EXPECT_EQ(forward(Activation{ActivationKind::relu}, x), (Matrix{{0.0, 0.0, 2.0}}));
  const Matrix t = forward(Activation{ActivationKind::tanh}, x);
  EXPECT_DOUBLE_EQ(t(0, 2), std::tanh(2.0));
  const Matrix s = forward(Activation{ActivationKind::sigmoid}, x);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.5);
  const Matrix sp = forward(Activation{ActivationKind::softplus}, x);
  EXPECT_NEAR(sp(0, 0), std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_EQ(forward(Activation{ActivationKind::identity}, x), x);
}

TEST(Layers, SmoothActivationPullbacksMatchFiniteDifferences) {
  for (auto k : {ActivationKind::tanh, ActivationKind::sigmoid, ActivationKind::softplus, ActivationKind::identity})
    expect_pullback(Activation{k}, 5, 5, Phase::training, 10 + static_cast<int>(k));
}

TEST(Layers, DensePullbacksMatchFiniteDifferences) {
  std::mt19937_64 rng(20);
  expect_pullback(FloatDense(oracle::random_matrix(3, 5, rng), Vector{0.1, -0.2, 0.3}), 5, 3, Phase::training, 21);
  expect_pullback(BinaryDense(oracle::random_signs(3, 5, rng)), 5, 3, Phase::training, 22);
  expect_pullback(TernaryDense(oracle::random_signs(3, 5, rng, true), 0.1), 5, 3, Phase::training, 23);
}

TEST(Layers, BatchNormPullbackBothPhases) {
  std::mt19937_64 rng(30);
  const BatchNorm bn = random_bn(4, rng);
  expect_pullback(bn, 4, 4, Phase::training, 31);
  expect_pullback(bn, 4, 4, Phase::inference, 32);
}

TEST(Layers, BatchNormTrainingNormalizes) {
  std::mt19937_64 rng(33);
  const Matrix x = oracle::random_matrix(50, 3, rng, 4.0);
  const Matrix y = forward(BatchNorm(3), x, Phase::training);
  const Vector mean = column_sums(y);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(mean[j] / 50.0, 0.0, 1e-12);
    double var = 0.0;
    for (std::size_t s = 0; s < 50; ++s) var += y(s, j) * y(s, j);
    EXPECT_NEAR(var / 50.0, 1.0, 1e-4);
  }
}

TEST(Layers, GradThetaMatchesFiniteDifferences) {
  std::mt19937_64 rng(40);
  const Matrix x = oracle::random_matrix(6, 4, rng);
  std::vector<Layer> cases{FloatDense(oracle::random_matrix(3, 4, rng), Vector{0.5, 0.0, -0.5}),
                           FloatDense(oracle::random_matrix(3, 4, rng)), random_bn(4, rng)};
  for (const Layer& layer : cases) {
    for (Phase phase : {Phase::training, Phase::inference}) {
      const Matrix p = oracle::random_matrix(6, output_dim(layer, 4), rng);
      const std::vector<double> params = float_parameters(layer);
      const std::vector<double> got = flatten(grad_theta_hamiltonian(layer, x, p, phase));
      ASSERT_EQ(got.size(), params.size());
      const Matrix want = oracle::fd_gradient(
          [&](const Matrix& th) {
            const Layer l = with_float_parameters(layer, th.values());
            return hamiltonian_sum(l, x, p, 6, phase);
          },
          Matrix(1, params.size(), params));
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want.values()[i], 1e-7) << kind_name(layer);
    }
  }
}

TEST(Layers, GradThetaRejectsDiscreteLayers) {
  const Matrix x(2, 2), p(2, 2);
  EXPECT_THROW(grad_theta_hamiltonian(BinaryDense(Matrix{{1, -1}, {1, 1}}), x, p), std::invalid_argument);
}

TEST(Layers, CoefficientMatrixIsLinearCoefficientOfHamiltonian) {
  // sum_s H = <M, theta> - (n/S) L(theta) for dense layers.
  std::mt19937_64 rng(50);
  const Matrix x = oracle::random_matrix(9, 5, rng);
  const Matrix p = oracle::random_matrix(9, 3, rng);
  const Matrix m = coefficient_matrix(x, p);
  EXPECT_LT(max_abs_diff(m, oracle::triple_loop(transpose(p), x)), 1e-12);
  const Matrix theta = oracle::random_signs(3, 5, rng, true);
  const Matrix b = oracle::random_signs(3, 5, rng);
  EXPECT_NEAR(hamiltonian_sum(BinaryDense(b), x, p, 9), inner(m, b), 1e-10);
  const double lambda = 0.3;
  const double h = hamiltonian_sum(TernaryDense(theta, lambda), x, p, 9);
  EXPECT_NEAR(h, inner(m, theta) - lambda * frobenius_norm_sq(theta), 1e-10);
}

TEST(Layers, CoefficientMatrixLinearInCostate) {
  std::mt19937_64 rng(51);
  const Matrix x = oracle::random_matrix(8, 4, rng);
  const Matrix p1 = oracle::random_matrix(8, 2, rng);
  const Matrix p2 = oracle::random_matrix(8, 2, rng);
  const Matrix lhs = coefficient_matrix(x, add(scale(p1, 2.0), scale(p2, -3.0)));
  const Matrix rhs = add(scale(coefficient_matrix(x, p1), 2.0), scale(coefficient_matrix(x, p2), -3.0));
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(Layers, CoefficientMatrixSparseInputs) {
  // Both internal orientations must agree.
  std::mt19937_64 rng(52);
  Matrix x = oracle::random_matrix(10, 6, rng);
  for (std::size_t i = 0; i < x.size(); i += 2) x.values()[i] = 0.0;
  Matrix p = oracle::random_matrix(10, 3, rng);
  EXPECT_LT(max_abs_diff(coefficient_matrix(x, p), oracle::triple_loop(transpose(p), x)), 1e-12);
  for (double& v : p.values()) v = 0.0;
  p(3, 1) = 1.0;
  EXPECT_LT(max_abs_diff(coefficient_matrix(x, p), oracle::triple_loop(transpose(p), x)), 1e-12);
}

TEST(Layers, ConstructionValidates) {
  EXPECT_THROW(BinaryDense(Matrix{{1, 0}}), std::invalid_argument);
  EXPECT_THROW(TernaryDense(Matrix{{1, 2}}, 0.0), std::invalid_argument);
  EXPECT_THROW(TernaryDense(Matrix{{1, 0}}, -1.0), std::invalid_argument);
  EXPECT_THROW(Network(3, {BinaryDense(Matrix{{1, 1}})}), ShapeError);
}

TEST(Layers, NetworkDimsAndSparsity) {
  Network net(2, {TernaryDense(Matrix{{1, 0}, {0, 0}, {-1, 1}}, 0.0), Activation{}, BinaryDense(Matrix{{1, -1, 1}})});
  EXPECT_EQ(net.dims(), (std::vector<std::size_t>{2, 3, 3, 1}));
  EXPECT_DOUBLE_EQ(net.nonzero_fraction(), 6.0 / 9.0);
  EXPECT_THROW(net.set_layer(2, BinaryDense(Matrix{{1, -1}})), std::exception);
}
