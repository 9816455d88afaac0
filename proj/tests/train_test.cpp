// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "critlab/data.hpp"
#include "critlab/train.hpp"
#include "critlab/wordpiece.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace critlab {
namespace {

struct Fixture {
  SyntheticWorld world;
  std::vector<CorpusItem> items;
  std::vector<Matrix> features;

  Fixture(int count, double noise, std::uint64_t seed = 3) {
    CorpusSpec spec;
    spec.vocab_words = 6;
    spec.alphabet = 5;
    spec.feature_dim = 8;
    spec.max_words = 3;
    world = build_world(spec);
    items = generate_corpus(world, count, noise, seed);
    for (const auto& it : items) features.push_back(it.features);
  }

  std::vector<std::vector<Label>> targets(int stride) const {
    std::vector<std::vector<Label>> out;
    for (const auto& it : items) out.push_back(frame_targets(it.alignment, stride));
    return out;
  }
};

EncoderConfig tiny_config(std::vector<int> schedule, int input_dim, int output_dim, int rc = 4) {
  EncoderConfig c;
  c.input_dim = input_dim;
  c.hidden = 16;
  c.subsample = std::move(schedule);
  c.output_dim = output_dim;
  c.right_context_frames = rc;
  c.chunk_frames = c.stride() * 4;
  return c;
}

std::vector<double> flatten(const EncoderParams& p) {
  std::vector<double> v;
  p.visit_tensors([&](const auto& t) { v.insert(v.end(), t.data(), t.data() + t.size()); });
  return v;
}

TEST(Adam, MinimizesAQuadratic) {
  Matrix x = Matrix::Constant(2, 3, 4.0);
  Matrix g(2, 3);
  Adam adam({.learning_rate = 0.1, .clip_norm = 0.0});
  for (int i = 0; i < 500; ++i) {
    g = 2.0 * x;
    adam.step({{x.data(), 6}}, {{g.data(), 6}});
  }
  EXPECT_LT(x.cwiseAbs().maxCoeff(), 1e-2);
}

TEST(Adam, ZeroLearningRateKeepsParameters) {
  Matrix x = Matrix::Random(3, 3);
  const Matrix keep = x;
  Matrix g = Matrix::Random(3, 3);
  Adam adam({.learning_rate = 0.0});
  for (int i = 0; i < 5; ++i) adam.step({{x.data(), 9}}, {{g.data(), 9}});
  EXPECT_EQ(x, keep);
}

TEST(Adam, ClippingBoundsTheFirstStep) {
  // A norm-500 gradient clipped to 5 steps exactly like the unclipped
  // norm-5 gradient with the same direction.
  Matrix a = Matrix::Zero(1, 2), b = Matrix::Zero(1, 2);
  Matrix big(1, 2), small(1, 2);
  big << 300.0, 400.0;  // norm 500
  small << 3.0, 4.0;    // norm 5
  Adam clipped({.learning_rate = 0.1, .clip_norm = 5.0}), plain({.learning_rate = 0.1, .clip_norm = 0.0});
  EXPECT_DOUBLE_EQ(clipped.step({{a.data(), 2}}, {{big.data(), 2}}), 500.0);
  plain.step({{b.data(), 2}}, {{small.data(), 2}});
  EXPECT_NEAR((a - b).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(FrameTargets, WindowCentres) {
  const std::vector<Label> al = {1, 1, 1, 2, 2, 2, 2, 3, 3, 3};
  EXPECT_EQ(frame_targets(al, 3), (std::vector<Label>{1, 2, 3}));
  EXPECT_EQ(frame_targets(al, 4), (std::vector<Label>{1, 2}));
  EXPECT_EQ(frame_targets(al, 1), al);
}

TEST(ForceAlign, RecoversNoiselessAlignment) {
  Fixture f(20, 0.0);
  const int dim = f.world.spec.alphabet + 1;
  for (const auto& it : f.items) {
    const auto gold = frame_targets(it.alignment, 3);
    Matrix scores = Matrix::Constant(static_cast<Eigen::Index>(gold.size()), dim, -5.0);
    for (std::size_t t = 0; t < gold.size(); ++t) scores(t, gold[t]) = 0.0;
    const auto path = force_align(scores, it.units);
    ASSERT_TRUE(path.has_value());
    EXPECT_EQ(*path, gold);
  }
  EXPECT_FALSE(force_align(Matrix::Zero(1, dim), LabelSequence{1, 2}).has_value());
}

TEST(TrainCe, FirstBatchLossIsLogD) {
  Fixture f(16, 0.1);
  const int dim = f.world.spec.alphabet + 1;
  EncoderParams enc = EncoderParams::init(tiny_config({2, 1}, 8, dim), 5);
  TrainOptions opt;
  opt.epochs = 1;
  opt.max_steps = 1;
  const auto log = train_ce(enc, f.features, f.targets(2), opt);
  ASSERT_EQ(log.batch_losses.size(), 1u);
  EXPECT_NEAR(log.batch_losses[0], std::log(static_cast<double>(dim)), 1e-6);
}

TEST(TrainCe, ZeroLearningRateLeavesModel) {
  Fixture f(8, 0.1);
  EncoderParams enc = EncoderParams::init(tiny_config({2, 1}, 8, 6), 5);
  const auto before = flatten(enc);
  TrainOptions opt;
  opt.epochs = 2;
  opt.adam.learning_rate = 0.0;
  train_ce(enc, f.features, f.targets(2), opt);
  EXPECT_EQ(flatten(enc), before);
}

TEST(TrainCe, RejectsMisalignedTargets) {
  Fixture f(4, 0.1);
  EncoderParams enc = EncoderParams::init(tiny_config({2, 1}, 8, 6), 5);
  EXPECT_THROW(train_ce(enc, f.features, f.targets(3), {}), std::invalid_argument);
}

TEST(TrainCe, NoiselessDataIsLearnedWithMonotoneLoss) {
  Fixture f(60, 0.0);
  const int dim = f.world.spec.alphabet + 1;
  EncoderParams enc = EncoderParams::init(tiny_config({3, 1}, 8, dim), 6);
  const auto targets = f.targets(3);
  TrainOptions opt;
  opt.epochs = 30;
  opt.adam.learning_rate = 5e-3;
  const auto log = train_ce(enc, f.features, targets, opt);
  EXPECT_GE(frame_accuracy(enc, f.features, targets), 0.99);
  for (std::size_t e = 1; e < log.epoch_losses.size(); ++e)
    EXPECT_LE(log.epoch_losses[e], log.epoch_losses[e - 1] + 1e-12) << "epoch " << e;
}

TEST(TrainCe, DeterministicAcrossThreadCounts) {
  Fixture f(24, 0.3);
  TrainOptions opt;
  opt.epochs = 2;
  opt.augment = AugmentPolicy{1, 5, 1, 2};
  EncoderParams a = EncoderParams::init(tiny_config({2, 1}, 8, 6), 5);
  EncoderParams b = a, c = a;
  train_ce(a, f.features, f.targets(2), opt);
  train_ce(b, f.features, f.targets(2), opt);
  opt.threads = 3;
  train_ce(c, f.features, f.targets(2), opt);
  EXPECT_EQ(flatten(a), flatten(b));
  EXPECT_EQ(flatten(a), flatten(c));
}

UnitModel wordpieces(const Fixture& f, int size) {
  std::vector<std::string> t;
  for (const auto& it : f.items) t.push_back(it.transcript);
  return train_wordpieces(t, size);
}

TEST(TrainCtc, LossDecreases) {
  Fixture f(40, 0.1);
  const auto units = wordpieces(f, 14);
  std::vector<LabelSequence> y;
  for (const auto& it : f.items) y.push_back(units.encode(it.transcript));
  EncoderParams enc = EncoderParams::init(tiny_config({2, 1}, 8, units.inventory().size()), 7);
  TrainOptions opt;
  opt.epochs = 8;
  opt.adam.learning_rate = 5e-3;
  const auto log = train_ctc(enc, f.features, y, opt);
  ASSERT_EQ(log.epoch_losses.size(), 8u);
  EXPECT_LT(log.epoch_losses.back(), 0.5 * log.epoch_losses.front());
}

TEST(TrainRnnt, LossDecreases) {
  Fixture f(40, 0.1);
  const auto units = wordpieces(f, 14);
  std::vector<LabelSequence> y;
  for (const auto& it : f.items) y.push_back(units.encode(it.transcript));
  EncoderParams enc = EncoderParams::init(tiny_config({2, 1}, 8, 8), 7);
  RnntDecoderConfig dc{units.inventory().size(), 8, 8, 16, 16};
  RnntDecoderModel dec = RnntDecoderModel::random(dc, 8);
  TrainOptions opt;
  opt.epochs = 8;
  opt.adam.learning_rate = 5e-3;
  const auto log = train_rnnt(enc, dec, f.features, y, opt);
  ASSERT_EQ(log.epoch_losses.size(), 8u);
  EXPECT_LT(log.epoch_losses.back(), 0.5 * log.epoch_losses.front());
  RnntDecoderModel wrong = RnntDecoderModel::zeros({units.inventory().size(), 5});
  EXPECT_THROW(train_rnnt(enc, wrong, f.features, y, opt), std::invalid_argument);
}

TEST(TrainLfmmi, LossDecreasesAndStaysNonNegative) {
  Fixture f(40, 0.1);
  const int dim = f.world.spec.alphabet + 1;
  std::vector<LabelSequence> chars;
  for (const auto& it : f.items) chars.push_back(it.units);
  const Fsa den = build_denominator_graph(build_topology_fst(dim, TopologyMode::kHmm1),
                                          estimate_bigram_lm(chars, dim, 1.0));
  std::vector<Fsa> nums;
  for (const auto& it : f.items)
    nums.push_back(intersect_with_denominator(build_numerator_graph(frame_targets(it.alignment, 3), 1, dim), den));
  EncoderParams enc = EncoderParams::init(tiny_config({3, 1}, 8, dim), 9);
  TrainOptions opt;
  opt.epochs = 8;
  opt.adam.learning_rate = 5e-3;
  const auto log = train_lfmmi(enc, f.features, nums, den, opt);
  ASSERT_EQ(log.epoch_losses.size(), 8u);
  EXPECT_EQ(log.skipped, 0);
  for (double l : log.batch_losses) EXPECT_GE(l, -1e-9);
  EXPECT_LT(log.epoch_losses.back(), 0.5 * log.epoch_losses.front());
}

}  // namespace
}  // namespace critlab
