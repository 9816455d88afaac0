// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Streaming encoder: a stack of forward tanh recurrent layers, each
// followed by mean-pool time subsampling, a lookahead mixing layer that
// sees a bounded number of future frames, and an output projection.
//
// Full-utterance and chunked evaluation perform the same floating-point
// operations in the same order, so their outputs agree bit for bit.

#pragma once

#include "critlab/binary_io.hpp"
#include "critlab/numeric.hpp"
#include "critlab/random.hpp"

#include <cstdint>
#include <deque>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

namespace critlab {

enum class Criterion { kLfmmi, kCtc, kRnnt };

inline std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::kLfmmi: return "lfmmi";
    case Criterion::kCtc: return "ctc";
    case Criterion::kRnnt: return "rnnt";
  }
  return "?";
}

inline Criterion parse_criterion(const std::string& s) {
  if (s == "lfmmi") return Criterion::kLfmmi;
  if (s == "ctc") return Criterion::kCtc;
  if (s == "rnnt") return Criterion::kRnnt;
  throw std::invalid_argument("unknown criterion: " + s);
}

struct EncoderConfig {
  int input_dim = 0;
  int hidden = 64;
  /// Per-layer subsampling factors; the layer count is its size.
  std::vector<int> subsample{1, 1};
  int output_dim = 0;
  int chunk_frames = 128;
  int right_context_frames = 24;
  int frame_shift_ms = 10;

  int layers() const { return static_cast<int>(subsample.size()); }
  int stride() const {
    return std::accumulate(subsample.begin(), subsample.end(), 1, std::multiplies<>());
  }
  /// Future frames, at the output rate, seen by the mixing layer.
  int lookahead() const { return right_context_frames / stride(); }
  int output_frames(int input_frames) const { return input_frames / stride(); }

  void validate() const {
    if (input_dim < 1 || hidden < 1 || output_dim < 1 || subsample.empty())
      throw std::invalid_argument("encoder dimensions must be positive");
    for (int f : subsample)
      if (f < 1) throw std::invalid_argument("subsampling factors must be >= 1");
    if (right_context_frames < 0) throw std::invalid_argument("right context must be >= 0");
    if (chunk_frames < 1 || chunk_frames % stride() != 0)
      throw std::invalid_argument("chunk_frames must be a positive multiple of the stride");
  }

  bool operator==(const EncoderConfig&) const = default;
};

/// Desk-scale defaults per criterion (3 x 64 recurrent layers).
inline EncoderConfig make_strided_config(Criterion c, int input_dim = 16, int output_dim = 1) {
  EncoderConfig cfg;
  cfg.input_dim = input_dim;
  cfg.output_dim = output_dim;
  switch (c) {
    case Criterion::kLfmmi:
      cfg.subsample = {3, 1, 1};
      cfg.chunk_frames = 150;
      cfg.right_context_frames = 21;
      break;
    case Criterion::kCtc:
      cfg.subsample = {2, 2, 2};
      cfg.chunk_frames = 128;
      cfg.right_context_frames = 24;
      break;
    case Criterion::kRnnt:
      cfg.subsample = {2, 2, 1};
      cfg.chunk_frames = 128;
      cfg.right_context_frames = 24;
      break;
  }
  return cfg;
}

struct EncoderLayer {
  Matrix w_in;   // H x in
  Matrix w_rec;  // H x H
  Vector bias;
};

struct EncoderParams {
  EncoderConfig config;
  std::vector<EncoderLayer> layers;
  std::vector<Matrix> mix;  // lookahead()+1 matrices, H x H; mix[j] sees frame t+j
  Vector mix_bias;
  Matrix proj;  // D x H
  Vector proj_bias;

  static EncoderParams zeros(const EncoderConfig& c) {
    c.validate();
    EncoderParams p;
    p.config = c;
    int in = c.input_dim;
    for (int l = 0; l < c.layers(); ++l) {
      p.layers.push_back({Matrix::Zero(c.hidden, in), Matrix::Zero(c.hidden, c.hidden),
                          Vector::Zero(c.hidden)});
      in = c.hidden;
    }
    p.mix.assign(c.lookahead() + 1, Matrix::Zero(c.hidden, c.hidden));
    p.mix_bias = Vector::Zero(c.hidden);
    p.proj = Matrix::Zero(c.output_dim, c.hidden);
    p.proj_bias = Vector::Zero(c.output_dim);
    return p;
  }

  /// Uniform in [-range, range]; the output projection starts at zero.
  static EncoderParams init(const EncoderConfig& c, std::uint64_t seed, double range = 0.1) {
    EncoderParams p = zeros(c);
    Rng rng(seed);
    for (auto& l : p.layers) {
      fill_uniform(l.w_in, rng, range);
      fill_uniform(l.w_rec, rng, range);
      fill_uniform(l.bias, rng, range);
    }
    for (auto& m : p.mix) fill_uniform(m, rng, range);
    fill_uniform(p.mix_bias, rng, range);
    return p;
  }

  /// Every tensor in declaration order.
  template <typename F>
  void visit_tensors(F&& f) {
    for (auto& l : layers) { f(l.w_in); f(l.w_rec); f(l.bias); }
    for (auto& m : mix) f(m);
    f(mix_bias); f(proj); f(proj_bias);
  }
  template <typename F>
  void visit_tensors(F&& f) const {
    for (const auto& l : layers) { f(l.w_in); f(l.w_rec); f(l.bias); }
    for (const auto& m : mix) f(m);
    f(mix_bias); f(proj); f(proj_bias);
  }
};

namespace detail {

inline Vector recurrent_step(const EncoderLayer& l, const Vector& x, const Vector& h) {
  Vector pre = l.bias;
  pre.noalias() += l.w_in * x;
  pre.noalias() += l.w_rec * h;
  return pre.array().tanh();
}

/// Mixing + projection for one output frame; `future[j]` is frame t+j, or
/// nullptr past the end of the utterance.
inline void mix_frame(const EncoderParams& p, const std::vector<const double*>& future,
                      Eigen::Ref<Vector> mixed, Eigen::Ref<Vector> out) {
  const int h = p.config.hidden;
  Vector pre = p.mix_bias;
  for (std::size_t j = 0; j < p.mix.size(); ++j)
    if (future[j]) pre.noalias() += p.mix[j] * Eigen::Map<const Vector>(future[j], h);
  mixed = pre.array().tanh();
  out = p.proj_bias;
  out.noalias() += p.proj * mixed;
}

}  // namespace detail

/// Activations retained for the backward pass.
struct EncoderCache {
  std::vector<Matrix> inputs;  // per layer, n_l x in
  std::vector<Matrix> hidden;  // per layer, n_l x H (before pooling)
  Matrix top;                  // T' x H, pooled output of the last layer
  Matrix mixed;                // T' x H
};

/// Full-utterance forward pass. Returns T' x D with T' = floor(T / stride).
inline Matrix encoder_forward(const EncoderParams& p, const Matrix& features,
                              EncoderCache* cache = nullptr) {
  const auto& c = p.config;
  if (features.rows() < 1) throw std::invalid_argument("empty input");
  if (features.cols() != c.input_dim) throw std::invalid_argument("feature width mismatch");
  EncoderCache local;
  EncoderCache& k = cache ? *cache : local;
  k.inputs.clear();
  k.hidden.clear();
  Matrix x = features;
  for (int l = 0; l < c.layers(); ++l) {
    const Eigen::Index n = x.rows();
    Matrix h(n, c.hidden);
    Vector state = Vector::Zero(c.hidden);
    for (Eigen::Index t = 0; t < n; ++t) {
      state = detail::recurrent_step(p.layers[l], x.row(t).transpose(), state);
      h.row(t) = state.transpose();
    }
    const int f = c.subsample[l];
    Matrix pooled(n / f, c.hidden);
    for (Eigen::Index j = 0; j < pooled.rows(); ++j) {
      Vector s = h.row(j * f).transpose();
      for (int i = 1; i < f; ++i) s += h.row(j * f + i).transpose();
      pooled.row(j) = (s / f).transpose();
    }
    k.inputs.push_back(std::move(x));
    k.hidden.push_back(std::move(h));
    x = std::move(pooled);
  }
  k.top = std::move(x);
  const Eigen::Index frames = k.top.rows();
  const int look = c.lookahead();
  k.mixed.resize(frames, c.hidden);
  Matrix out(frames, c.output_dim);
  std::vector<const double*> future(look + 1);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int j = 0; j <= look; ++j)
      future[j] = t + j < frames ? k.top.row(t + j).data() : nullptr;
    Vector m(c.hidden), o(c.output_dim);
    detail::mix_frame(p, future, m, o);
    k.mixed.row(t) = m.transpose();
    out.row(t) = o.transpose();
  }
  return out;
}

/// Carried state of chunked evaluation.
struct StreamState {
  std::vector<Vector> hidden;             // recurrent state per layer
  std::vector<std::vector<Vector>> pool;  // outputs waiting to fill a pool window
  std::deque<Vector> pending;             // top-rate frames awaiting lookahead
  long long emitted = 0;
};

/// Consumes features chunk by chunk and emits each output frame as soon as
/// its lookahead window is available.
class StreamingEncoder {
 public:
  explicit StreamingEncoder(const EncoderParams& params) : p_(params) {
    const auto& c = p_.config;
    state_.hidden.assign(c.layers(), Vector::Zero(c.hidden));
    state_.pool.resize(c.layers());
  }

  /// Returns the output frames finalized by this chunk (possibly none).
  Matrix push(const Matrix& chunk) {
    if (chunk.cols() != p_.config.input_dim) throw std::invalid_argument("feature width mismatch");
    std::vector<Vector> out;
    for (Eigen::Index t = 0; t < chunk.rows(); ++t) feed(chunk.row(t).transpose(), 0, out);
    return stack(out);
  }

  /// Emits the remaining frames, treating the future as absent.
  Matrix finish() {
    std::vector<Vector> out;
    while (!state_.pending.empty()) emit_front(out);
    return stack(out);
  }

  const StreamState& state() const { return state_; }

 private:
  void feed(const Vector& x, int layer, std::vector<Vector>& out) {
    const auto& c = p_.config;
    if (layer == c.layers()) {
      state_.pending.push_back(x);
      if (static_cast<int>(state_.pending.size()) > c.lookahead()) emit_front(out);
      return;
    }
    Vector& h = state_.hidden[layer];
    h = detail::recurrent_step(p_.layers[layer], x, h);
    auto& buf = state_.pool[layer];
    buf.push_back(h);
    const int f = c.subsample[layer];
    if (static_cast<int>(buf.size()) == f) {
      Vector s = buf[0];
      for (int i = 1; i < f; ++i) s += buf[i];
      buf.clear();
      feed(s / f, layer + 1, out);
    }
  }

  void emit_front(std::vector<Vector>& out) {
    const auto& c = p_.config;
    std::vector<const double*> future(c.lookahead() + 1, nullptr);
    for (std::size_t j = 0; j < future.size() && j < state_.pending.size(); ++j)
      future[j] = state_.pending[j].data();
    Vector m(c.hidden), o(c.output_dim);
    detail::mix_frame(p_, future, m, o);
    out.push_back(std::move(o));
    state_.pending.pop_front();
    ++state_.emitted;
  }

  Matrix stack(const std::vector<Vector>& rows) const {
    Matrix m(static_cast<Eigen::Index>(rows.size()), p_.config.output_dim);
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(i) = rows[i].transpose();
    return m;
  }

  const EncoderParams& p_;
  StreamState state_;
};

/// Chunked evaluation of a whole utterance; equals encoder_forward.
inline Matrix encoder_forward_chunked(const EncoderParams& p, const Matrix& features,
                                      int chunk_frames) {
  if (features.rows() < 1) throw std::invalid_argument("empty input");
  if (chunk_frames < 1) throw std::invalid_argument("chunk_frames must be positive");
  StreamingEncoder enc(p);
  std::vector<Matrix> parts;
  for (Eigen::Index t = 0; t < features.rows(); t += chunk_frames) {
    const Eigen::Index n = std::min<Eigen::Index>(chunk_frames, features.rows() - t);
    parts.push_back(enc.push(features.middleRows(t, n)));
  }
  parts.push_back(enc.finish());
  Eigen::Index rows = 0;
  for (const auto& m : parts) rows += m.rows();
  Matrix out(rows, p.config.output_dim);
  Eigen::Index r = 0;
  for (const auto& m : parts) {
    out.middleRows(r, m.rows()) = m;
    r += m.rows();
  }
  return out;
}

struct EncoderGrads {
  EncoderParams params;  // same shapes as the model, holds gradients
  Matrix input;          // T x F
};

/// Reverse-mode gradients given d loss / d output.
inline EncoderGrads encoder_backward(const EncoderParams& p, const EncoderCache& cache,
                                     const Matrix& d_out) {
  const auto& c = p.config;
  const Eigen::Index frames = cache.top.rows();
  if (static_cast<int>(cache.hidden.size()) != c.layers() || d_out.rows() != frames ||
      d_out.cols() != c.output_dim || cache.mixed.rows() != frames)
    throw std::invalid_argument("encoder cache mismatch");
  EncoderGrads g{EncoderParams::zeros(c), Matrix()};
  const int look = c.lookahead();

  g.params.proj.noalias() = d_out.transpose() * cache.mixed;
  g.params.proj_bias = d_out.colwise().sum().transpose();
  Matrix d_pre = (d_out * p.proj).array() * (1.0 - cache.mixed.array().square());
  g.params.mix_bias = d_pre.colwise().sum().transpose();
  Matrix d_x = Matrix::Zero(frames, c.hidden);
  for (int j = 0; j <= look; ++j) {
    const Eigen::Index n = std::max<Eigen::Index>(0, frames - j);
    if (n == 0) continue;
    g.params.mix[j].noalias() = d_pre.topRows(n).transpose() * cache.top.middleRows(j, n);
    d_x.middleRows(j, n).noalias() += d_pre.topRows(n) * p.mix[j];
  }

  for (int l = c.layers() - 1; l >= 0; --l) {
    const Matrix& x = cache.inputs[l];
    const Matrix& h = cache.hidden[l];
    const int f = c.subsample[l];
    Matrix d_h = Matrix::Zero(h.rows(), c.hidden);
    for (Eigen::Index j = 0; j < d_x.rows(); ++j)
      for (int i = 0; i < f; ++i) d_h.row(j * f + i) = d_x.row(j) / f;
    auto& gl = g.params.layers[l];
    Matrix d_a(h.rows(), c.hidden);
    Vector carry = Vector::Zero(c.hidden);
    for (Eigen::Index t = h.rows() - 1; t >= 0; --t) {
      const Vector da = (d_h.row(t).transpose() + carry).array() *
                        (1.0 - h.row(t).transpose().array().square());
      d_a.row(t) = da.transpose();
      carry.noalias() = p.layers[l].w_rec.transpose() * da;
    }
    gl.bias = d_a.colwise().sum().transpose();
    gl.w_in.noalias() = d_a.transpose() * x;
    if (h.rows() > 1)
      gl.w_rec.noalias() = d_a.bottomRows(h.rows() - 1).transpose() * h.topRows(h.rows() - 1);
    d_x = d_a * p.layers[l].w_in;
  }
  g.input = std::move(d_x);
  return g;
}

// ---------------------------------------------------------------------------
// INT8 post-training quantization

struct QuantizedTensor {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<std::int8_t> values;
  double scale = 1.0;
};

/// Symmetric per-tensor quantization, scale = max|w| / 127 (1 for an
/// all-zero tensor).
template <typename Tensor>
QuantizedTensor quantize_tensor(const Tensor& w) {
  QuantizedTensor q;
  q.rows = w.rows();
  q.cols = w.cols();
  const double max_abs = w.size() ? w.cwiseAbs().maxCoeff() : 0.0;
  if (!std::isfinite(max_abs)) throw std::invalid_argument("cannot quantize non-finite weights");
  q.scale = max_abs > 0.0 ? max_abs / 127.0 : 1.0;
  q.values.resize(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i)
    q.values[i] = static_cast<std::int8_t>(std::clamp(std::lround(w.data()[i] / q.scale), -127L, 127L));
  return q;
}

template <typename Tensor>
void dequantize_into(const QuantizedTensor& q, Tensor& out) {
  if (out.rows() != q.rows || out.cols() != q.cols) throw std::invalid_argument("tensor shape mismatch");
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = q.values[i] * q.scale;
}

struct QuantizedEncoder {
  EncoderConfig config;
  std::vector<QuantizedTensor> tensors;  // visit order

  /// Float model with the dequantized weights.
  EncoderParams dequantize() const {
    EncoderParams p = EncoderParams::zeros(config);
    std::size_t i = 0;
    p.visit_tensors([&](auto& t) { dequantize_into(tensors.at(i++), t); });
    return p;
  }
};

inline QuantizedEncoder quantize_int8(const EncoderParams& p) {
  QuantizedEncoder q;
  q.config = p.config;
  p.visit_tensors([&](const auto& t) { q.tensors.push_back(quantize_tensor(t)); });
  return q;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Header (little-endian int32): magic "CLEN", format (0 = float64, 1 =
// int8), input_dim, hidden, layers, subsample[layers], output_dim,
// chunk_frames, right_context_frames, frame_shift_ms. Then every tensor in
// visit order, row-major: float64 values, or int8 values followed, after
// the last tensor, by one float64 scale per tensor.

namespace detail {

inline void write_encoder_header(std::ostream& os, const EncoderConfig& c, int format) {
  io::write_i32(os, io::magic("CLEN"));
  io::write_i32(os, format);
  io::write_i32(os, c.input_dim);
  io::write_i32(os, c.hidden);
  io::write_i32(os, c.layers());
  for (int f : c.subsample) io::write_i32(os, f);
  io::write_i32(os, c.output_dim);
  io::write_i32(os, c.chunk_frames);
  io::write_i32(os, c.right_context_frames);
  io::write_i32(os, c.frame_shift_ms);
}

inline EncoderConfig read_encoder_header(std::istream& is, int& format) {
  io::expect_magic(is, "CLEN");
  format = io::read_i32(is);
  EncoderConfig c;
  c.input_dim = io::read_i32(is);
  c.hidden = io::read_i32(is);
  const int layers = io::read_i32(is);
  if (layers < 1 || layers > 64) throw std::runtime_error("corrupt encoder header");
  c.subsample.resize(layers);
  for (int& f : c.subsample) f = io::read_i32(is);
  c.output_dim = io::read_i32(is);
  c.chunk_frames = io::read_i32(is);
  c.right_context_frames = io::read_i32(is);
  c.frame_shift_ms = io::read_i32(is);
  c.validate();
  return c;
}

}  // namespace detail

inline void save_encoder(std::ostream& os, const EncoderParams& p) {
  detail::write_encoder_header(os, p.config, 0);
  p.visit_tensors([&](const auto& t) { io::write_tensor(os, t); });
}

inline void save_encoder(std::ostream& os, const QuantizedEncoder& q) {
  detail::write_encoder_header(os, q.config, 1);
  for (const auto& t : q.tensors) os.write(reinterpret_cast<const char*>(t.values.data()), t.values.size());
  for (const auto& t : q.tensors) io::write_f64(os, t.scale);
}

/// Loads either format; INT8 checkpoints come back dequantized.
inline EncoderParams load_encoder(std::istream& is) {
  int format = 0;
  const EncoderConfig c = detail::read_encoder_header(is, format);
  EncoderParams p = EncoderParams::zeros(c);
  if (format == 0) {
    p.visit_tensors([&](auto& t) { io::read_tensor(is, t); });
    return p;
  }
  if (format != 1) throw std::runtime_error("unknown encoder checkpoint format");
  QuantizedEncoder q;
  q.config = c;
  p.visit_tensors([&](const auto& t) {
    QuantizedTensor qt;
    qt.rows = t.rows();
    qt.cols = t.cols();
    qt.values.resize(t.size());
    if (!is.read(reinterpret_cast<char*>(qt.values.data()), t.size()))
      throw std::runtime_error("truncated binary file");
    q.tensors.push_back(std::move(qt));
  });
  for (auto& t : q.tensors) t.scale = io::read_f64(is);
  return q.dequantize();
}

}  // namespace critlab
