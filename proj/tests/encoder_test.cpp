// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "critlab/encoder.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace critlab {
namespace {

using testing::max_relative_error;
using testing::numeric_gradient;
using testing::random_matrix;
using testing::uniform_int;

EncoderConfig small_config(std::vector<int> schedule, int rc, int chunk) {
  EncoderConfig c;
  c.input_dim = 3;
  c.hidden = 5;
  c.subsample = std::move(schedule);
  c.output_dim = 4;
  c.right_context_frames = rc;
  c.chunk_frames = chunk;
  return c;
}

EncoderParams randomized(const EncoderConfig& c, std::uint64_t seed, double range = 0.5) {
  EncoderParams p = EncoderParams::zeros(c);
  Rng rng(seed);
  p.visit_tensors([&](auto& t) { fill_uniform(t, rng, range); });
  return p;
}

TEST(Encoder, StridedConfigs) {
  const auto ctc = make_strided_config(Criterion::kCtc);
  EXPECT_EQ(ctc.stride(), 8);
  EXPECT_EQ(ctc.chunk_frames, 128);
  EXPECT_EQ(ctc.right_context_frames, 24);
  const auto mmi = make_strided_config(Criterion::kLfmmi);
  EXPECT_EQ(mmi.stride(), 3);
  EXPECT_EQ(mmi.chunk_frames, 150);
  EXPECT_EQ(mmi.right_context_frames, 21);
  const auto rnnt = make_strided_config(Criterion::kRnnt);
  EXPECT_EQ(rnnt.stride(), 4);
  EXPECT_EQ(rnnt.chunk_frames, 128);
  EXPECT_EQ(rnnt.right_context_frames, 24);
  for (const auto& c : {ctc, mmi, rnnt}) EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(parse_criterion(to_string(Criterion::kRnnt)), Criterion::kRnnt);
}

TEST(Encoder, ChunkMustBeDivisibleByStride) {
  EXPECT_THROW(small_config({2, 2}, 4, 6).validate(), std::invalid_argument);
  EXPECT_NO_THROW(small_config({2, 2}, 4, 8).validate());
}

TEST(Encoder, OutputLengthIsFloorOfStride) {
  const auto c = small_config({3, 1}, 3, 3);
  const auto p = randomized(c, 1);
  Rng rng(2);
  for (int t = 1; t <= 20; ++t)
    EXPECT_EQ(encoder_forward(p, random_matrix(rng, t, 3)).rows(), t / 3);
  EXPECT_THROW(encoder_forward(p, Matrix(0, 3)), std::invalid_argument);
}

TEST(Encoder, ZeroWeightsGiveZeroOutput) {
  const auto p = EncoderParams::zeros(small_config({2, 2}, 8, 8));
  Rng rng(3);
  EXPECT_EQ(encoder_forward(p, random_matrix(rng, 33, 3, 5.0)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encoder, InitHasZeroProjection) {
  const auto p = EncoderParams::init(make_strided_config(Criterion::kCtc, 6, 5), 4);
  EXPECT_EQ(p.proj.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE(p.layers[0].w_in.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_GT(p.layers[0].w_in.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encoder, ChunkedEqualsFull) {
  Rng rng(5);
  for (const auto& schedule : {std::vector<int>{3, 1, 1}, {2, 2, 1}, {2, 2, 2}}) {
    auto c = small_config(schedule, 24, 1);
    c.chunk_frames = c.stride();
    const int stride = c.stride();
    const auto p = randomized(c, 6);
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix x = random_matrix(rng, uniform_int(rng, 1, 90), 3);
      const Matrix full = encoder_forward(p, x);
      for (int chunk = stride; chunk <= 4 * stride + x.rows(); chunk += stride) {
        const Matrix chunked = encoder_forward_chunked(p, x, chunk);
        ASSERT_EQ(chunked.rows(), full.rows());
        if (full.rows() == 0) continue;
        EXPECT_EQ((chunked - full).cwiseAbs().maxCoeff(), 0.0) << "chunk " << chunk;
      }
    }
  }
}

TEST(Encoder, StreamingEmitsWithBoundedDelay) {
  const auto c = small_config({2, 2}, 8, 8);
  const auto p = randomized(c, 7);
  Rng rng(8);
  StreamingEncoder enc(p);
  long long consumed = 0;
  for (int i = 0; i < 10; ++i) {
    enc.push(random_matrix(rng, 8, 3));
    consumed += 8;
    // Frame t is final once input (t+1+K)*stride-1 has arrived.
    EXPECT_EQ(enc.state().emitted, std::max(0LL, consumed / c.stride() - c.lookahead()));
    EXPECT_LE(static_cast<int>(enc.state().pending.size()), c.lookahead());
  }
}

TEST(Encoder, PerturbingFutureInputKeepsEarlierOutputs) {
  Rng rng(9);
  for (const auto& schedule : {std::vector<int>{3, 1, 1}, {2, 2, 1}, {2, 2, 2}}) {
    auto c = small_config(schedule, 24, 1);
    c.chunk_frames = c.stride();
    const auto p = randomized(c, 10);
    const Matrix x = random_matrix(rng, 120, 3);
    const Matrix base = encoder_forward(p, x);
    for (int t0 = 0; t0 < x.rows(); ++t0) {
      Matrix y = x;
      y.row(t0).array() += 1.0;
      const Matrix moved = encoder_forward(p, y);
      for (Eigen::Index t = 0; t < base.rows(); ++t) {
        const long long reach = t * c.stride() + c.right_context_frames + c.stride() - 1;
        if (t0 > reach) {
          EXPECT_EQ((moved.row(t) - base.row(t)).cwiseAbs().maxCoeff(), 0.0);
        }
      }
      // The frame that does see t0 changes.
      const Eigen::Index first = t0 / c.stride() - c.lookahead();
      if (first >= 0 && first < base.rows() && t0 / c.stride() < base.rows()) {
        EXPECT_GT((moved.row(first) - base.row(first)).cwiseAbs().maxCoeff(), 0.0);
      }
    }
  }
}

// Scalar objective <w, f(x)> for gradient checks.
double project(const EncoderParams& p, const Matrix& x, const Matrix& w) {
  return (encoder_forward(p, x).array() * w.array()).sum();
}

TEST(Encoder, BackwardMatchesFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    const auto c = small_config(trial % 2 ? std::vector<int>{2, 1} : std::vector<int>{1, 3}, 4, 6);
    EncoderParams p = randomized(c, 100 + trial);
    const Matrix x = random_matrix(rng, uniform_int(rng, 6, 13), 3);
    EncoderCache cache;
    const Matrix out = encoder_forward(p, x, &cache);
    const Matrix w = random_matrix(rng, out.rows(), out.cols(), 1.0);
    const EncoderGrads g = encoder_backward(p, cache, w);

    std::vector<Matrix> flat_grads;
    g.params.visit_tensors([&](const auto& t) {
      flat_grads.push_back(Eigen::Map<const Matrix>(t.data(), t.rows(), t.cols()));
    });
    std::size_t block = 0;
    p.visit_tensors([&](auto& t) {
      auto& tensor = t;
      const Matrix numeric = numeric_gradient(
          Eigen::Map<const Matrix>(tensor.data(), tensor.rows(), tensor.cols()),
          [&](const Matrix& v) {
            const auto keep = tensor;
            for (Eigen::Index i = 0; i < v.size(); ++i) tensor.data()[i] = v.data()[i];
            const double f = project(p, x, w);
            tensor = keep;
            return f;
          });
      EXPECT_LE(max_relative_error(flat_grads[block], numeric), 1e-5) << "block " << block;
      ++block;
    });
    const Matrix numeric_x =
        numeric_gradient(x, [&](const Matrix& v) { return project(p, v, w); });
    EXPECT_LE(max_relative_error(g.input, numeric_x), 1e-5);
  }
}

TEST(Encoder, BackwardIsLinearInCotangent) {
  Rng rng(12);
  const auto c = small_config({2, 2}, 8, 8);
  const auto p = randomized(c, 13);
  const Matrix x = random_matrix(rng, 29, 3);
  EncoderCache cache;
  const Matrix out = encoder_forward(p, x, &cache);
  const Matrix a = random_matrix(rng, out.rows(), out.cols());
  const Matrix b = random_matrix(rng, out.rows(), out.cols());
  const auto ga = encoder_backward(p, cache, a);
  const auto gb = encoder_backward(p, cache, b);
  const auto gab = encoder_backward(p, cache, a + b);
  const auto g0 = encoder_backward(p, cache, Matrix::Zero(out.rows(), out.cols()));
  std::vector<Matrix> ta, tb, tab, t0;
  auto collect = [](std::vector<Matrix>& into) {
    return [&into](const auto& t) { into.push_back(Eigen::Map<const Matrix>(t.data(), t.rows(), t.cols())); };
  };
  ga.params.visit_tensors(collect(ta));
  gb.params.visit_tensors(collect(tb));
  gab.params.visit_tensors(collect(tab));
  g0.params.visit_tensors(collect(t0));
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_LE((ta[i] + tb[i] - tab[i]).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(t0[i].cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_LE((ga.input + gb.input - gab.input).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(g0.input.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encoder, BackwardRejectsMismatchedCache) {
  const auto c = small_config({2}, 2, 2);
  const auto p = randomized(c, 14);
  EncoderCache cache;
  encoder_forward(p, Matrix::Ones(10, 3), &cache);
  EXPECT_THROW(encoder_backward(p, cache, Matrix::Zero(4, 4)), std::invalid_argument);
  EXPECT_THROW(encoder_backward(p, EncoderCache{}, Matrix::Zero(5, 4)), std::invalid_argument);
}

TEST(Quantization, ConstantTensorRoundTripsExactly) {
  Matrix m = Matrix::Constant(3, 4, -0.37);
  const auto q = quantize_tensor(m);
  Matrix back(3, 4);
  dequantize_into(q, back);
  EXPECT_EQ((back - m).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Quantization, ZeroTensorHasUnitScale) {
  const auto q = quantize_tensor(Matrix::Zero(2, 2).eval());
  EXPECT_EQ(q.scale, 1.0);
  for (auto v : q.values) EXPECT_EQ(v, 0);
}

TEST(Quantization, ErrorWithinHalfStep) {
  Rng rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix m = random_matrix(rng, uniform_int(rng, 1, 9), uniform_int(rng, 1, 9), 3.0);
    const auto q = quantize_tensor(m);
    EXPECT_DOUBLE_EQ(q.scale, m.cwiseAbs().maxCoeff() / 127.0);
    Matrix back(m.rows(), m.cols());
    dequantize_into(q, back);
    EXPECT_LE((back - m).cwiseAbs().maxCoeff(), q.scale / 2 * (1 + 1e-12));
  }
}

TEST(Quantization, DequantizedModelKeepsShapes) {
  const auto c = small_config({2, 2}, 8, 8);
  const auto p = randomized(c, 16);
  const auto d = quantize_int8(p).dequantize();
  std::vector<double> steps;
  p.visit_tensors([&](const auto& t) { steps.push_back(t.cwiseAbs().maxCoeff() / 127.0 / 2); });
  std::size_t i = 0;
  std::vector<Matrix> orig;
  p.visit_tensors([&](const auto& t) { orig.push_back(Eigen::Map<const Matrix>(t.data(), t.rows(), t.cols())); });
  d.visit_tensors([&](const auto& t) {
    const Matrix m = Eigen::Map<const Matrix>(t.data(), t.rows(), t.cols());
    ASSERT_EQ(m.rows(), orig[i].rows());
    EXPECT_LE((m - orig[i]).cwiseAbs().maxCoeff(), steps[i] * (1 + 1e-12));
    ++i;
  });
}

TEST(Checkpoint, FloatRoundTripIsExact) {
  const auto p = randomized(small_config({3, 1}, 6, 9), 17);
  std::stringstream ss;
  save_encoder(ss, p);
  const auto back = load_encoder(ss);
  EXPECT_EQ(back.config, p.config);
  Rng rng(18);
  const Matrix x = random_matrix(rng, 30, 3);
  EXPECT_EQ((encoder_forward(back, x) - encoder_forward(p, x)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Checkpoint, Int8RoundTripMatchesDequantized) {
  const auto p = randomized(small_config({2, 2}, 8, 8), 19);
  const auto q = quantize_int8(p);
  std::stringstream ss;
  save_encoder(ss, q);
  const auto back = load_encoder(ss);
  Rng rng(20);
  const Matrix x = random_matrix(rng, 30, 3);
  EXPECT_EQ((encoder_forward(back, x) - encoder_forward(q.dequantize(), x)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream bad("not a checkpoint at all");
  EXPECT_THROW(load_encoder(bad), std::runtime_error);
  const auto p = randomized(small_config({2}, 2, 2), 21);
  std::stringstream ss;
  save_encoder(ss, p);
  std::string s = ss.str();
  std::stringstream cut(s.substr(0, s.size() - 3));
  EXPECT_THROW(load_encoder(cut), std::runtime_error);
}

}  // namespace
}  // namespace critlab
