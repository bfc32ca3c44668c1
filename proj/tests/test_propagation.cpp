#include <gtest/gtest.h>

#include <random>

#include "dmsa/propagation.hpp"
#include "oracles.hpp"

using namespace dmsa;

namespace {

Network tanh_net(std::mt19937_64& rng) {
  return Network(3, {FloatDense(oracle::random_matrix(4, 3, rng), Vector{0.1, 0.2, -0.1, 0.0}),
                     Activation{ActivationKind::tanh}, FloatDense(oracle::random_matrix(2, 4, rng))});
}

Matrix stack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) out.set_row(r, a.row_vector(r));
  for (std::size_t r = 0; r < b.rows(); ++r) out.set_row(a.rows() + r, b.row_vector(r));
  return out;
}

}  // namespace

TEST(Loss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_matrix(5, 3, rng);
  Matrix dist(5, 3, 0.0);
  for (std::size_t s = 0; s < 5; ++s) dist(s, s % 3) = 1.0;
  const std::vector<TerminalLoss> losses{
      TerminalLoss(LossKind::mean_square, oracle::random_matrix(5, 3, rng)),
      TerminalLoss(LossKind::squared_hinge, oracle::random_signs(5, 3, rng)),
      TerminalLoss(LossKind::softmax_cross_entropy, dist)};
  for (const auto& loss : losses) {
    const Matrix want = oracle::fd_gradient([&](const Matrix& xx) { return loss.total(xx); }, x);
    EXPECT_LT(max_abs_diff(loss.gradients(x), want), 1e-7) << to_string(loss.kind());
  }
}

TEST(Loss, KnownValues) {
  const TerminalLoss ms(LossKind::mean_square, Matrix{{1.0, 2.0}});
  EXPECT_DOUBLE_EQ(ms.total(Matrix{{0.0, 0.0}}), 2.5);
  const std::vector<int> labels{1};
  const TerminalLoss hinge = TerminalLoss::from_labels(LossKind::squared_hinge, labels, 3);
  EXPECT_EQ(hinge.targets(), (Matrix{{-1.0, 1.0, -1.0}}));
  // margins 1-(-1)(0.5)=1.5, 1-0.5=0.5, 1-(-1)(-2)=-1 -> 2.25 + 0.25
  EXPECT_DOUBLE_EQ(hinge.total(Matrix{{0.5, 0.5, -2.0}}), 2.5);
}

TEST(Propagation, TerminalCostateIsScaledLossGradient) {
  std::mt19937_64 rng(2);
  const Network net = tanh_net(rng);
  const Matrix x0 = oracle::random_matrix(6, 3, rng);
  const TerminalLoss loss(LossKind::mean_square, oracle::random_matrix(6, 2, rng));
  const Trajectory tr = propagate(net, x0, loss);
  ASSERT_EQ(tr.costates.size(), net.depth() + 1);
  EXPECT_LT(max_abs_diff(tr.costates.back(), scale(loss.gradients(tr.states.back()), -1.0 / 6.0)), 1e-15);
  for (std::size_t t = 0; t < net.depth(); ++t)
    EXPECT_LT(max_abs_diff(tr.costates[t], costate_pullback(net.layer(t), tr.states[t], tr.costates[t + 1])), 1e-15);
}

TEST(Propagation, DoublingTheBatchHalvesCostates) {
  std::mt19937_64 rng(3);
  const Network net = tanh_net(rng);
  const Matrix x0 = oracle::random_matrix(4, 3, rng);
  const Matrix y = oracle::random_matrix(4, 2, rng);
  const Trajectory one = propagate(net, x0, TerminalLoss(LossKind::mean_square, y));
  const Trajectory two = propagate(net, stack(x0, x0), TerminalLoss(LossKind::mean_square, stack(y, y)));
  for (std::size_t t = 0; t <= net.depth(); ++t)
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t j = 0; j < one.costates[t].cols(); ++j)
        EXPECT_NEAR(two.costates[t](s, j), 0.5 * one.costates[t](s, j), 1e-15);
}

TEST(Propagation, SkippingInputCostateLeavesOthersUnchanged) {
  std::mt19937_64 rng(4);
  const Network net = tanh_net(rng);
  const Matrix x0 = oracle::random_matrix(4, 3, rng);
  const TerminalLoss loss(LossKind::mean_square, oracle::random_matrix(4, 2, rng));
  const Trajectory full = propagate(net, x0, loss);
  const Trajectory part = propagate(net, x0, loss, Phase::training, false);
  EXPECT_TRUE(part.costates[0].empty());
  for (std::size_t t = 1; t <= net.depth(); ++t) EXPECT_EQ(part.costates[t], full.costates[t]);
}

TEST(Propagation, ObjectiveIncludesRegularizer) {
  const Network net(2, {TernaryDense(Matrix{{1, 0}, {0, -1}}, 0.25)});
  const TerminalLoss loss(LossKind::mean_square, Matrix{{0, 0}, {0, 0}});
  const Matrix x0{{1, 1}, {2, 0}};
  // outputs (1,-1), (2,0): (1+1)/2 + 4/2 = 3 summed, /2 samples, + 0.25*2
  EXPECT_DOUBLE_EQ(objective(net, x0, loss), 1.5 + 0.5);
  EXPECT_DOUBLE_EQ(regularization_total(net), 0.5);
}

TEST(Propagation, PredictClassesTiesGoFirst) {
  EXPECT_EQ(predict_classes(Matrix{{1, 3, 3}, {2, 2, 0}}), (std::vector<int>{1, 0}));
}

TEST(Propagation, LossBatchMismatchThrows) {
  std::mt19937_64 rng(5);
  const Network net = tanh_net(rng);
  const TerminalLoss loss(LossKind::mean_square, Matrix(3, 2));
  EXPECT_THROW(propagate(net, Matrix(4, 3), loss), ShapeError);
}
