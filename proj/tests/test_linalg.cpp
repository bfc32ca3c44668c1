#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dmsa/linalg.hpp"
#include "oracles.hpp"

using dmsa::Matrix;
using dmsa::Vector;

TEST(Linalg, MatmulMatchesTripleLoop) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 9, k = 1 + rng() % 9, m = 1 + rng() % 9;
    const Matrix a = oracle::random_matrix(n, k, rng);
    const Matrix b = oracle::random_matrix(k, m, rng);
    EXPECT_LT(dmsa::max_abs_diff(dmsa::matmul(a, b), oracle::triple_loop(a, b)), 1e-12);
  }
}

TEST(Linalg, TransposedProductsMatchExplicitTranspose) {
  std::mt19937_64 rng(2);
  const Matrix a = oracle::random_matrix(7, 5, rng);
  const Matrix b = oracle::random_matrix(7, 3, rng);
  const Matrix c = oracle::random_matrix(4, 5, rng);
  EXPECT_LT(dmsa::max_abs_diff(dmsa::matmul_at(a, b), oracle::triple_loop(dmsa::transpose(a), b)), 1e-12);
  EXPECT_LT(dmsa::max_abs_diff(dmsa::matmul_bt(a, c), oracle::triple_loop(a, dmsa::transpose(c))), 1e-12);
}

TEST(Linalg, Associativity) {
  std::mt19937_64 rng(3);
  const Matrix a = oracle::random_matrix(4, 6, rng);
  const Matrix b = oracle::random_matrix(6, 5, rng);
  const Matrix c = oracle::random_matrix(5, 3, rng);
  EXPECT_LT(dmsa::max_abs_diff(dmsa::matmul(dmsa::matmul(a, b), c), dmsa::matmul(a, dmsa::matmul(b, c))), 1e-10);
}

TEST(Linalg, TraceIdentity) {
  // <A, B> = tr(A^T B)
  std::mt19937_64 rng(4);
  const Matrix a = oracle::random_matrix(5, 4, rng);
  const Matrix b = oracle::random_matrix(5, 4, rng);
  const Matrix atb = dmsa::matmul_at(a, b);
  double tr = 0.0;
  for (std::size_t i = 0; i < atb.rows(); ++i) tr += atb(i, i);
  EXPECT_NEAR(dmsa::inner(a, b), tr, 1e-12);
  EXPECT_NEAR(dmsa::frobenius_norm_sq(a), dmsa::inner(a, a), 1e-12);
}

TEST(Linalg, OuterProductSumIsGram) {
  std::mt19937_64 rng(5);
  const Matrix p = oracle::random_matrix(6, 3, rng);
  const Matrix x = oracle::random_matrix(6, 4, rng);
  Matrix sum(3, 4);
  for (std::size_t s = 0; s < 6; ++s) sum = dmsa::add(sum, dmsa::outer(p.row_vector(s), x.row_vector(s)));
  EXPECT_LT(dmsa::max_abs_diff(sum, dmsa::matmul_at(p, x)), 1e-12);
}

TEST(Linalg, ShapeErrors) {
  const Matrix a(2, 3), b(2, 3);
  EXPECT_THROW(dmsa::matmul(a, b), dmsa::ShapeError);
  EXPECT_THROW(dmsa::add(a, Matrix(3, 2)), dmsa::ShapeError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), dmsa::ShapeError);
}

TEST(Linalg, NonFiniteRejected) {
  EXPECT_THROW(Matrix(1, 2, std::vector<double>{1.0, NAN}), dmsa::NumericalError);
}

TEST(Linalg, SmallHelpers) {
  const Matrix a{{1, -2}, {3, 4}};
  EXPECT_EQ(dmsa::column_sums(a), (Vector{4, 2}));
  EXPECT_DOUBLE_EQ(dmsa::max_abs(a), 4.0);
  EXPECT_EQ(dmsa::scale(a, 2.0), (Matrix{{2, -4}, {6, 8}}));
  Matrix y{{1, 1}, {1, 1}};
  dmsa::axpy(-1.0, a, y);
  EXPECT_EQ(y, (Matrix{{0, 3}, {-2, -3}}));
  EXPECT_EQ(dmsa::signum(0.0), 0.0);
  EXPECT_EQ(dmsa::signum(-0.5), -1.0);
}
