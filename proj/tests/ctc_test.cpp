// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "critlab/ctc.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

namespace critlab {
namespace {

using testing::random_labels;
using testing::random_matrix;
using testing::uniform_int;

TEST(CtcLoss, SingleFrameUniform) {
  const auto r = ctc_loss(Matrix::Zero(1, 3), LabelSequence{1});
  EXPECT_NEAR(r.loss, std::log(3.0), 1e-12);
}

TEST(CtcLoss, TwoFramesUniformSumsThreePaths) {
  const auto r = ctc_loss(Matrix::Zero(2, 3), LabelSequence{1});
  EXPECT_NEAR(r.loss, std::log(3.0), 1e-12);
}

TEST(CtcLoss, InfeasibleRepeatGivesInfinityAndZeroGrad) {
  const auto r = ctc_loss(Matrix::Zero(2, 3), LabelSequence{1, 1});
  EXPECT_EQ(r.loss, kInf);
  EXPECT_EQ(r.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(CtcLoss, OutOfRangeLabelThrows) {
  EXPECT_THROW(ctc_loss(Matrix::Zero(2, 3), LabelSequence{3}), std::out_of_range);
  EXPECT_THROW(ctc_loss(Matrix::Zero(2, 3), LabelSequence{0}), std::out_of_range);
}

TEST(CtcOracle, DistinctLabelsSinglePath) {
  EXPECT_NEAR(ctc_loss_oracle(Matrix::Zero(2, 3), LabelSequence{1, 2}), std::log(9.0), 1e-12);
}

TEST(CtcOracle, EmptyConvention) {
  EXPECT_EQ(ctc_loss_oracle(Matrix::Zero(0, 3), LabelSequence{}), 0.0);
}

TEST(CtcLoss, MatchesOracleOnRandomInstances) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const int frames = uniform_int(rng, 1, 6);
    const int dim = uniform_int(rng, 2, 4);
    const int u = uniform_int(rng, 0, std::min(4, frames));
    const auto y = random_labels(rng, u, dim);
    const Matrix logits = random_matrix(rng, frames, dim);
    const double fb = ctc_loss(logits, y).loss;
    const double oracle = ctc_loss_oracle(logits, y);
    if (oracle == kInf) {
      EXPECT_EQ(fb, kInf);
    } else {
      EXPECT_NEAR(fb, oracle, 1e-9);
    }
  }
}

TEST(CtcLoss, GradientMatchesFiniteDifferences) {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const int frames = uniform_int(rng, 2, 6);
    const int dim = uniform_int(rng, 2, 4);
    const auto y = random_labels(rng, uniform_int(rng, 1, 2), dim);
    const Matrix logits = random_matrix(rng, frames, dim);
    const auto r = ctc_loss(logits, y);
    if (r.loss == kInf) continue;
    const Matrix num = testing::numeric_gradient(
        logits, [&](const Matrix& x) { return ctc_loss(x, y).loss; });
    EXPECT_LE(testing::max_relative_error(r.grad, num), 1e-5);
  }
}

TEST(CtcLoss, RowsSumToZeroAndOccupancyNormalized) {
  Rng rng(5);
  const Matrix logits = random_matrix(rng, 6, 4);
  const auto r = ctc_loss(logits, LabelSequence{1, 2, 2});
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    EXPECT_NEAR(r.grad.row(t).sum(), 0.0, 1e-12);
    EXPECT_NEAR(r.occupancy.row(t).sum(), 1.0, 1e-12);
  }
}

TEST(CtcLoss, ShiftInvariantPerRow) {
  Rng rng(6);
  Matrix logits = random_matrix(rng, 5, 3);
  const double base = ctc_loss(logits, LabelSequence{1, 2}).loss;
  logits.row(2).array() += 7.5;
  EXPECT_NEAR(ctc_loss(logits, LabelSequence{1, 2}).loss, base, 1e-12);
}

TEST(CtcLoss, RaisingOccupiedLabelLowersLoss) {
  Rng rng(8);
  Matrix logits = random_matrix(rng, 4, 3);
  const LabelSequence y{2};
  const auto r = ctc_loss(logits, y);
  // Frame with the largest occupancy of the label state.
  Eigen::Index best = 0;
  r.occupancy.col(1).maxCoeff(&best);
  logits(best, 2) += 0.5;
  EXPECT_LE(ctc_loss(logits, y).loss, r.loss);
}

TEST(CtcGreedy, CollapsesArgmaxPath) {
  auto one_hot = [](const std::vector<int>& path) {
    Matrix m = Matrix::Zero(static_cast<int>(path.size()), 3);
    for (std::size_t t = 0; t < path.size(); ++t) m(t, path[t]) = 1.0;
    return m;
  };
  EXPECT_EQ(ctc_greedy_decode(one_hot({1, 1, 0, 2})), (LabelSequence{1, 2}));
  EXPECT_EQ(ctc_greedy_decode(one_hot({0, 0, 0})), LabelSequence{});
  EXPECT_EQ(ctc_greedy_decode(one_hot({0, 1, 0, 1})), (LabelSequence{1, 1}));
  // Uniform rows tie; the lowest index (blank) wins.
  EXPECT_EQ(ctc_greedy_decode(Matrix::Zero(3, 3)), LabelSequence{});
}

}  // namespace
}  // namespace critlab
