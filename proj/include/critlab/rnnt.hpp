// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Transducer decoder network (predictor + joiner), the lattice loss in a
// reference form and a function-merged form that never materializes the
// normalized probabilities, batch memory accounting, and beam search.

#pragma once

#include "critlab/memory.hpp"
#include "critlab/numeric.hpp"
#include "critlab/random.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <functional>
#include <map>
#include <stdexcept>
#include <tuple>

namespace critlab {

/// Dense T' x (U+1) x D grid, cell (t, u) contiguous, row t contiguous.
template <typename T>
struct Lattice {
  int frames = 0;
  int rows_u = 0;  // U + 1
  int dim = 0;
  std::vector<T> data;

  Lattice() = default;
  Lattice(int t, int u1, int d, T fill = T{})
      : frames(t), rows_u(u1), dim(d),
        data(static_cast<std::size_t>(t) * u1 * d, fill) {}

  std::size_t offset(int t, int u) const {
    return (static_cast<std::size_t>(t) * rows_u + u) * dim;
  }
  std::span<T> cell(int t, int u) { return {data.data() + offset(t, u), static_cast<std::size_t>(dim)}; }
  std::span<const T> cell(int t, int u) const {
    return {data.data() + offset(t, u), static_cast<std::size_t>(dim)};
  }
  std::span<T> row(int t) {
    return {data.data() + offset(t, 0), static_cast<std::size_t>(rows_u) * dim};
  }
  T& operator()(int t, int u, int k) { return data[offset(t, u) + k]; }
  const T& operator()(int t, int u, int k) const { return data[offset(t, u) + k]; }
};

// ---------------------------------------------------------------------------
// Network

struct RnntDecoderConfig {
  int num_units = 0;  // D, including blank
  int enc_dim = 0;
  int embed_dim = 32;
  int pred_hidden = 64;
  int join_hidden = 64;
};

/// Single-layer tanh recurrent predictor over an embedding whose row 0 (the
/// blank index) is the start symbol, and a one-hidden-layer joiner.
struct RnntDecoderModel {
  RnntDecoderConfig config;
  Matrix embedding;  // D x embed
  Matrix pred_in;    // H x embed
  Matrix pred_rec;   // H x H
  Vector pred_bias;
  Matrix join_enc;   // J x E
  Matrix join_pred;  // J x H
  Vector join_bias;
  Matrix join_out;   // D x J
  Vector out_bias;

  static RnntDecoderModel zeros(const RnntDecoderConfig& c) {
    RnntDecoderModel m;
    m.config = c;
    m.embedding = Matrix::Zero(c.num_units, c.embed_dim);
    m.pred_in = Matrix::Zero(c.pred_hidden, c.embed_dim);
    m.pred_rec = Matrix::Zero(c.pred_hidden, c.pred_hidden);
    m.pred_bias = Vector::Zero(c.pred_hidden);
    m.join_enc = Matrix::Zero(c.join_hidden, c.enc_dim);
    m.join_pred = Matrix::Zero(c.join_hidden, c.pred_hidden);
    m.join_bias = Vector::Zero(c.join_hidden);
    m.join_out = Matrix::Zero(c.num_units, c.join_hidden);
    m.out_bias = Vector::Zero(c.num_units);
    return m;
  }

  static RnntDecoderModel random(const RnntDecoderConfig& c,
                                 std::uint64_t seed, double range = 0.1) {
    RnntDecoderModel m = zeros(c);
    Rng rng(seed);
    m.visit_tensors([&](auto& tensor) { fill_uniform(tensor, rng, range); });
    return m;
  }

  /// Visits every tensor in declaration order.
  template <typename F>
  void visit_tensors(F&& f) {
    f(embedding); f(pred_in); f(pred_rec); f(pred_bias);
    f(join_enc); f(join_pred); f(join_bias); f(join_out); f(out_bias);
  }
  template <typename F>
  void visit_tensors(F&& f) const {
    f(embedding); f(pred_in); f(pred_rec); f(pred_bias);
    f(join_enc); f(join_pred); f(join_bias); f(join_out); f(out_bias);
  }

  /// One predictor step from `prev` consuming `label`.
  Vector pred_step(const Vector& prev, Label label) const {
    Vector pre = pred_in * embedding.row(label).transpose() +
                 pred_rec * prev + pred_bias;
    return pre.array().tanh();
  }
};

/// Activations kept by the forward pass for the backward pass.
struct RnntForwardCache {
  Matrix enc;          // T' x E
  LabelSequence y;
  Matrix pred_hidden;  // (U+1) x H
  Matrix enc_proj;     // T' x J
  Matrix pred_proj;    // (U+1) x J, includes join_bias
};

inline RnntForwardCache rnnt_prepare(const Matrix& h_enc,
                                     std::span<const Label> y,
                                     const RnntDecoderModel& model) {
  const auto& c = model.config;
  if (h_enc.cols() != c.enc_dim)
    throw std::invalid_argument("encoder width does not match the joiner");
  check_label_sequence(y, c.num_units);
  RnntForwardCache cache;
  cache.enc = h_enc;
  cache.y.assign(y.begin(), y.end());
  const int rows_u = static_cast<int>(y.size()) + 1;
  cache.pred_hidden.resize(rows_u, c.pred_hidden);
  Vector h = Vector::Zero(c.pred_hidden);
  for (int u = 0; u < rows_u; ++u) {
    h = model.pred_step(h, u == 0 ? kBlank : y[u - 1]);
    cache.pred_hidden.row(u) = h.transpose();
  }
  cache.enc_proj = h_enc * model.join_enc.transpose();
  cache.pred_proj = cache.pred_hidden * model.join_pred.transpose();
  cache.pred_proj.rowwise() += model.join_bias.transpose();
  return cache;
}

/// Joiner activations for frame t, (U+1) x J.
inline Matrix rnnt_joiner_hidden(const RnntForwardCache& cache, int t) {
  Matrix a = cache.pred_proj;
  a.rowwise() += cache.enc_proj.row(t);
  return a.array().tanh();
}

/// Logits of row t, written into `out` ((U+1)·D values).
template <typename Storage>
void rnnt_joiner_row(const RnntForwardCache& cache,
                     const RnntDecoderModel& model, int t,
                     std::span<Storage> out) {
  Matrix z = rnnt_joiner_hidden(cache, t) * model.join_out.transpose();
  z.rowwise() += model.out_bias.transpose();
  for (Eigen::Index i = 0; i < z.size(); ++i)
    out[i] = static_cast<Storage>(z.data()[i]);
}

/// Full logit lattice z_{t,u} for encoder output and target prefix.
inline Lattice<double> rnnt_network_forward(const Matrix& h_enc,
                                            std::span<const Label> y,
                                            const RnntDecoderModel& model,
                                            RnntForwardCache* cache_out = nullptr) {
  RnntForwardCache cache = rnnt_prepare(h_enc, y, model);
  Lattice<double> z(static_cast<int>(h_enc.rows()),
                    static_cast<int>(y.size()) + 1, model.config.num_units);
  for (int t = 0; t < z.frames; ++t) rnnt_joiner_row<double>(cache, model, t, z.row(t));
  if (cache_out) *cache_out = std::move(cache);
  return z;
}

struct RnntNetworkGrads {
  RnntDecoderModel model;  // same shapes, holds gradients
  Matrix enc;              // T' x E
};

/// Reverse-mode gradients of the network given d loss / d z.
inline RnntNetworkGrads rnnt_network_backward(const RnntForwardCache& cache,
                                              const RnntDecoderModel& model,
                                              const Lattice<double>& dz) {
  const int frames = static_cast<int>(cache.enc.rows());
  const int rows_u = static_cast<int>(cache.y.size()) + 1;
  const int dim = model.config.num_units;
  if (dz.frames != frames || dz.rows_u != rows_u || dz.dim != dim)
    throw std::invalid_argument("lattice gradient does not match the cache");

  RnntNetworkGrads g{RnntDecoderModel::zeros(model.config), Matrix()};
  Matrix d_enc_proj = Matrix::Zero(frames, model.config.join_hidden);
  Matrix d_pred_proj = Matrix::Zero(rows_u, model.config.join_hidden);
  for (int t = 0; t < frames; ++t) {
    const Matrix a = rnnt_joiner_hidden(cache, t);
    Eigen::Map<const Matrix> dz_t(dz.data.data() + dz.offset(t, 0), rows_u, dim);
    g.model.join_out.noalias() += dz_t.transpose() * a;
    g.model.out_bias += dz_t.colwise().sum().transpose();
    Matrix d_pre = (dz_t * model.join_out).array() * (1.0 - a.array().square());
    d_pred_proj += d_pre;
    d_enc_proj.row(t) += d_pre.colwise().sum();
  }
  g.model.join_bias = d_pred_proj.colwise().sum().transpose();
  g.model.join_enc = d_enc_proj.transpose() * cache.enc;
  g.enc = d_enc_proj * model.join_enc;
  g.model.join_pred = d_pred_proj.transpose() * cache.pred_hidden;
  Matrix d_hidden = d_pred_proj * model.join_pred;

  // Backpropagation through the predictor recurrence.
  Vector carry = Vector::Zero(model.config.pred_hidden);
  for (int u = rows_u - 1; u >= 0; --u) {
    const Vector h = cache.pred_hidden.row(u).transpose();
    const Vector d_pre =
        (d_hidden.row(u).transpose() + carry).array() * (1.0 - h.array().square());
    const Label in = u == 0 ? kBlank : cache.y[u - 1];
    g.model.pred_bias += d_pre;
    g.model.pred_in.noalias() += d_pre * model.embedding.row(in);
    g.model.embedding.row(in) += (model.pred_in.transpose() * d_pre).transpose();
    if (u > 0) {
      const Vector h_prev = cache.pred_hidden.row(u - 1).transpose();
      g.model.pred_rec.noalias() += d_pre * h_prev.transpose();
    }
    carry = model.pred_rec.transpose() * d_pre;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Loss

namespace detail {

template <typename T>
double cell_log_normalizer(std::span<const T> z) {
  double m = kLogZero;
  for (const T& v : z) m = std::max(m, static_cast<double>(v));
  double s = 0.0;
  for (const T& v : z) s += std::exp(static_cast<double>(v) - m);
  return m + std::log(s);
}

template <typename T>
double load(const T& v) { return static_cast<double>(v); }

/// Forward and backward variables over the T' x (U+1) grid from the blank
/// and emit log-probabilities of each cell. Returns log P(y|x).
template <typename T>
double transducer_alpha_beta(int frames, int rows_u, std::span<const T> blank,
                             std::span<const T> emit, std::span<T> alpha,
                             std::span<T> beta) {
  auto at = [rows_u](int t, int u) { return static_cast<std::size_t>(t) * rows_u + u; };
  for (int t = 0; t < frames; ++t) {
    for (int u = 0; u < rows_u; ++u) {
      double a = kLogZero;
      if (t == 0 && u == 0) a = 0.0;
      if (t > 0) a = log_add(a, load(alpha[at(t - 1, u)]) + load(blank[at(t - 1, u)]));
      if (u > 0) a = log_add(a, load(alpha[at(t, u - 1)]) + load(emit[at(t, u - 1)]));
      alpha[at(t, u)] = static_cast<T>(a);
    }
  }
  for (int t = frames - 1; t >= 0; --t) {
    for (int u = rows_u - 1; u >= 0; --u) {
      double b = kLogZero;
      if (t == frames - 1 && u == rows_u - 1) b = load(blank[at(t, u)]);
      if (t + 1 < frames) b = log_add(b, load(blank[at(t, u)]) + load(beta[at(t + 1, u)]));
      if (u + 1 < rows_u) b = log_add(b, load(emit[at(t, u)]) + load(beta[at(t, u + 1)]));
      beta[at(t, u)] = static_cast<T>(b);
    }
  }
  return load(alpha[at(frames - 1, rows_u - 1)]) +
         load(blank[at(frames - 1, rows_u - 1)]);
}

/// d(-log P)/dz for one cell, given the log-probabilities of the cell.
template <typename T, typename LogProbFn>
void transducer_cell_grad(int frames, int rows_u, int t, int u, Label next,
                          double log_likelihood, std::span<const T> blank,
                          std::span<const T> emit, std::span<const T> alpha,
                          std::span<const T> beta, LogProbFn&& log_prob,
                          std::span<T> out) {
  auto at = [rows_u](int tt, int uu) { return static_cast<std::size_t>(tt) * rows_u + uu; };
  const double a = load(alpha[at(t, u)]);
  const double occ = std::exp(a + load(beta[at(t, u)]) - log_likelihood);
  const int dim = static_cast<int>(out.size());
  for (int k = 0; k < dim; ++k) {
    double g = occ * std::exp(log_prob(k));
    if (k == kBlank) {
      const double after = t + 1 < frames ? load(beta[at(t + 1, u)])
                           : (u == rows_u - 1 ? 0.0 : kLogZero);
      g -= std::exp(a + load(blank[at(t, u)]) + after - log_likelihood);
    }
    if (u + 1 < rows_u && k == next)
      g -= std::exp(a + load(emit[at(t, u)]) + load(beta[at(t, u + 1)]) - log_likelihood);
    out[k] = static_cast<T>(g);
  }
}

}  // namespace detail

struct RnntLossResult {
  double loss = 0.0;
  Lattice<double> grad;
  MemoryStats memory;
};

/// Vanilla formulation: holds the logits, a full log-softmax tensor, the
/// forward/backward grids and a separate gradient tensor.
inline RnntLossResult rnnt_loss_reference(const Lattice<double>& z,
                                          std::span<const Label> y) {
  const int frames = z.frames, rows_u = z.rows_u, dim = z.dim;
  if (rows_u != static_cast<int>(y.size()) + 1)
    throw std::invalid_argument("lattice does not match the target length");
  if (frames < 1) throw std::invalid_argument("transducer loss needs frames");
  check_label_sequence(y, dim);

  MemoryTracker tracker;
  const std::size_t cells = static_cast<std::size_t>(frames) * rows_u;
  TrackedBuffer<double> logits(tracker, cells * dim);
  std::copy(z.data.begin(), z.data.end(), logits.span().begin());
  TrackedBuffer<double> logp(tracker, cells * dim);
  for (std::size_t c = 0; c < cells; ++c) {
    auto zc = logits.span().subspan(c * dim, dim);
    const double lse = detail::cell_log_normalizer<double>(zc);
    for (int k = 0; k < dim; ++k) logp[c * dim + k] = zc[k] - lse;
  }
  // Blank/emit views are strided reads from the log-softmax tensor; copy
  // them into grid-shaped scratch to share the recursion with the fused
  // path.
  TrackedBuffer<double> blank(tracker, cells), emit(tracker, cells, kLogZero);
  for (int t = 0; t < frames; ++t)
    for (int u = 0; u < rows_u; ++u) {
      const std::size_t c = static_cast<std::size_t>(t) * rows_u + u;
      blank[c] = logp[c * dim + kBlank];
      if (u + 1 < rows_u) emit[c] = logp[c * dim + y[u]];
    }
  TrackedBuffer<double> alpha(tracker, cells), beta(tracker, cells);
  const double ll = detail::transducer_alpha_beta<double>(
      frames, rows_u, blank.span(), emit.span(), alpha.span(), beta.span());

  TrackedBuffer<double> grad(tracker, cells * dim);
  for (int t = 0; t < frames; ++t)
    for (int u = 0; u < rows_u; ++u) {
      const std::size_t c = static_cast<std::size_t>(t) * rows_u + u;
      detail::transducer_cell_grad<double>(
          frames, rows_u, t, u, u + 1 < rows_u ? y[u] : -1, ll, blank.span(),
          emit.span(), alpha.span(), beta.span(),
          [&](int k) { return logp[c * dim + k]; },
          grad.span().subspan(c * dim, dim));
    }

  RnntLossResult result;
  result.loss = -ll;
  result.grad = Lattice<double>(frames, rows_u, dim);
  result.grad.data = std::move(grad).take();
  result.memory = tracker.stats();
  return result;
}

/// Supplies the logits of row t ((U+1)·D values) in storage precision.
template <typename Storage>
using LogitRowProducer = std::function<void(int t, std::span<Storage> row)>;

template <typename Storage>
struct RnntFusedResult {
  double loss = 0.0;
  /// Gradient w.r.t. the logits, written over the logit storage.
  Lattice<Storage> grad;
  MemoryStats memory;
};

/// Function-merged loss. Logits are pulled row by row into one lattice
/// buffer of `Storage` width; only the blank and target log-probabilities
/// of each cell are kept, and the gradient overwrites the logits. All
/// sums are evaluated in double; intermediates are stored at `Storage`
/// width.
template <typename Storage>
RnntFusedResult<Storage> rnnt_loss_fused(const LogitRowProducer<Storage>& produce,
                                         int frames, int dim,
                                         std::span<const Label> y) {
  const int rows_u = static_cast<int>(y.size()) + 1;
  if (frames < 1) throw std::invalid_argument("transducer loss needs frames");
  check_label_sequence(y, dim);

  MemoryTracker tracker;
  const std::size_t cells = static_cast<std::size_t>(frames) * rows_u;
  const Storage neg_inf = static_cast<Storage>(kLogZero);
  TrackedBuffer<Storage> lattice(tracker, cells * dim);
  TrackedBuffer<Storage> blank(tracker, cells), emit(tracker, cells, neg_inf);
  for (int t = 0; t < frames; ++t) {
    auto row = lattice.span().subspan(static_cast<std::size_t>(t) * rows_u * dim,
                                      static_cast<std::size_t>(rows_u) * dim);
    produce(t, row);
    for (int u = 0; u < rows_u; ++u) {
      auto zc = std::span<const Storage>(row.subspan(static_cast<std::size_t>(u) * dim, dim));
      const double lse = detail::cell_log_normalizer<Storage>(zc);
      const std::size_t c = static_cast<std::size_t>(t) * rows_u + u;
      blank[c] = static_cast<Storage>(detail::load(zc[kBlank]) - lse);
      if (u + 1 < rows_u) emit[c] = static_cast<Storage>(detail::load(zc[y[u]]) - lse);
    }
  }
  TrackedBuffer<Storage> alpha(tracker, cells), beta(tracker, cells);
  const double ll = detail::transducer_alpha_beta<Storage>(
      frames, rows_u, blank.span(), emit.span(), alpha.span(), beta.span());

  for (int t = 0; t < frames; ++t)
    for (int u = 0; u < rows_u; ++u) {
      const std::size_t c = static_cast<std::size_t>(t) * rows_u + u;
      auto zc = lattice.span().subspan(c * dim, dim);
      const double lse = detail::cell_log_normalizer<Storage>(zc);
      // Each log-prob is read before its own slot is overwritten.
      detail::transducer_cell_grad<Storage>(
          frames, rows_u, t, u, u + 1 < rows_u ? y[u] : -1, ll, blank.span(),
          emit.span(), alpha.span(), beta.span(),
          [&](int k) { return detail::load(zc[k]) - lse; }, zc);
    }

  RnntFusedResult<Storage> result;
  result.loss = -ll;
  result.memory = tracker.stats();
  result.grad.frames = frames;
  result.grad.rows_u = rows_u;
  result.grad.dim = dim;
  result.grad.data = std::move(lattice).take();
  return result;
}

/// Producer reading from an already materialized lattice.
template <typename Storage>
LogitRowProducer<Storage> lattice_row_producer(const Lattice<double>& z) {
  return [&z](int t, std::span<Storage> row) {
    const std::size_t base = z.offset(t, 0);
    for (std::size_t i = 0; i < row.size(); ++i)
      row[i] = static_cast<Storage>(z.data[base + i]);
  };
}

/// Producer that runs the joiner for one row at a time.
template <typename Storage>
LogitRowProducer<Storage> joiner_row_producer(const RnntForwardCache& cache,
                                              const RnntDecoderModel& model) {
  return [&cache, &model](int t, std::span<Storage> row) {
    rnnt_joiner_row<Storage>(cache, model, t, row);
  };
}

enum class FusedPrecision { kFp64, kFp32, kFp16Storage };

/// Runtime-dispatched fused loss; the gradient is widened to double.
inline RnntLossResult rnnt_loss_fused(const Lattice<double>& z,
                                      std::span<const Label> y,
                                      FusedPrecision precision) {
  auto widen = [](auto&& r) {
    RnntLossResult out;
    out.loss = r.loss;
    out.memory = r.memory;
    out.grad = Lattice<double>(r.grad.frames, r.grad.rows_u, r.grad.dim);
    for (std::size_t i = 0; i < r.grad.data.size(); ++i)
      out.grad.data[i] = static_cast<double>(r.grad.data[i]);
    return out;
  };
  switch (precision) {
    case FusedPrecision::kFp64:
      return widen(rnnt_loss_fused<double>(lattice_row_producer<double>(z), z.frames, z.dim, y));
    case FusedPrecision::kFp32:
      return widen(rnnt_loss_fused<float>(lattice_row_producer<float>(z), z.frames, z.dim, y));
    case FusedPrecision::kFp16Storage:
      return widen(rnnt_loss_fused<Eigen::half>(lattice_row_producer<Eigen::half>(z),
                                                z.frames, z.dim, y));
  }
  throw std::logic_error("unknown precision");
}

// ---------------------------------------------------------------------------
// Batch memory formulas

struct BatchSpec {
  struct Item {
    int frames;  // T_i
    int labels;  // U_i
  };
  std::vector<Item> items;
  int dim = 0;  // D
};

enum class LatticeLayout { kBroadcast, kPacked };

struct Footprint {
  std::size_t elements = 0;
  std::size_t bytes = 0;
};

/// Broadcast pads every item to the batch maxima; packed concatenates the
/// exact per-item T_i·(U_i+1)·D lattices.
inline Footprint rnnt_memory_footprint(const BatchSpec& spec,
                                       LatticeLayout layout,
                                       std::size_t element_bytes) {
  if (spec.items.empty() || spec.dim < 1)
    throw std::invalid_argument("batch spec needs items and D >= 1");
  Footprint f;
  if (layout == LatticeLayout::kBroadcast) {
    std::size_t max_t = 0, max_u = 0;
    for (const auto& it : spec.items) {
      max_t = std::max<std::size_t>(max_t, it.frames);
      max_u = std::max<std::size_t>(max_u, it.labels + 1);
    }
    f.elements = spec.items.size() * max_t * max_u * spec.dim;
  } else {
    for (const auto& it : spec.items)
      f.elements += static_cast<std::size_t>(it.frames) * (it.labels + 1) * spec.dim;
  }
  f.bytes = f.elements * element_bytes;
  return f;
}

// ---------------------------------------------------------------------------
// Search

struct Hypothesis {
  LabelSequence labels;
  double score = 0.0;
};

struct RnntSearchOptions {
  int beam_size = 4;
  int max_symbols_per_frame = 4;
};

namespace detail {

inline Vector joiner_log_probs(const RnntDecoderModel& model,
                               const Vector& enc_proj, const Vector& pred_hidden) {
  Vector a = (enc_proj + model.join_pred * pred_hidden + model.join_bias).array().tanh();
  Vector z = model.join_out * a + model.out_bias;
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

inline Vector start_state(const RnntDecoderModel& model) {
  return model.pred_step(Vector::Zero(model.config.pred_hidden), kBlank);
}

/// Higher score first, then lexicographically smaller labels.
inline bool better(double sa, const LabelSequence& la, double sb,
                   const LabelSequence& lb) {
  if (sa != sb) return sa > sb;
  return la < lb;
}

}  // namespace detail

/// Argmax per step (lowest index on ties); blank advances the frame.
inline LabelSequence rnnt_greedy_decode(const Matrix& h_enc,
                                        const RnntDecoderModel& model,
                                        int max_symbols_per_frame = 4) {
  const Matrix enc_proj = h_enc * model.join_enc.transpose();
  LabelSequence out;
  Vector hidden = detail::start_state(model);
  for (Eigen::Index t = 0; t < h_enc.rows(); ++t) {
    const Vector ep = enc_proj.row(t).transpose();
    for (int n = 0; n < max_symbols_per_frame; ++n) {
      const Vector lp = detail::joiner_log_probs(model, ep, hidden);
      Eigen::Index arg = 0;
      for (Eigen::Index k = 1; k < lp.size(); ++k)
        if (lp(k) > lp(arg)) arg = k;
      if (arg == kBlank) break;
      out.push_back(static_cast<Label>(arg));
      hidden = model.pred_step(hidden, static_cast<Label>(arg));
    }
  }
  return out;
}

/// Frame-synchronous transducer beam search. Within a frame, hypotheses
/// are expanded in up to `max_symbols_per_frame` rounds; each round pools
/// the blank-terminated hypotheses (merged by label sequence with log-add)
/// with the one-symbol extensions and keeps the best `beam_size` entries.
/// With an unbounded beam the returned scores are exact log-posteriors of
/// the label sequences restricted to that per-frame emission limit.
inline std::vector<Hypothesis> rnnt_beam_search(const Matrix& h_enc,
                                                const RnntDecoderModel& model,
                                                const RnntSearchOptions& opts) {
  if (opts.beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
  struct Node {
    double score;
    Vector hidden;
  };
  using Pool = std::map<LabelSequence, Node>;

  const Matrix enc_proj = h_enc * model.join_enc.transpose();
  const std::size_t beam = static_cast<std::size_t>(opts.beam_size);
  Pool hyps;
  hyps.emplace(LabelSequence{}, Node{0.0, detail::start_state(model)});

  for (Eigen::Index t = 0; t < h_enc.rows(); ++t) {
    const Vector ep = enc_proj.row(t).transpose();
    Pool finished;
    Pool active = std::move(hyps);
    for (int round = 0; round <= opts.max_symbols_per_frame && !active.empty(); ++round) {
      Pool extended;
      for (auto& [labels, node] : active) {
        const Vector lp = detail::joiner_log_probs(model, ep, node.hidden);
        auto [it, inserted] = finished.try_emplace(labels, Node{kLogZero, node.hidden});
        it->second.score = log_add(it->second.score, node.score + lp(kBlank));
        if (round == opts.max_symbols_per_frame) continue;
        for (Label k = 1; k < model.config.num_units; ++k) {
          LabelSequence next = labels;
          next.push_back(k);
          // Hidden state is filled in only for survivors.
          extended.emplace(std::move(next), Node{node.score + lp(k), node.hidden});
        }
      }
      // Joint pruning over finished (kind 0) and extended (kind 1) entries.
      using Entry = std::tuple<double, const LabelSequence*, int>;
      std::vector<Entry> all;
      for (auto& [l, n] : finished) all.emplace_back(n.score, &l, 0);
      for (auto& [l, n] : extended) all.emplace_back(n.score, &l, 1);
      std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
        const auto& [sa, la, ka] = a;
        const auto& [sb, lb, kb] = b;
        if (sa != sb) return sa > sb;
        if (*la != *lb) return *la < *lb;
        return ka < kb;
      });
      if (all.size() > beam) all.resize(beam);
      Pool keep_finished, keep_active;
      for (const auto& [s, l, kind] : all) {
        if (kind == 0) {
          keep_finished.emplace(*l, finished.at(*l));
        } else {
          Node n = extended.at(*l);
          n.hidden = model.pred_step(n.hidden, l->back());
          keep_active.emplace(*l, std::move(n));
        }
      }
      finished = std::move(keep_finished);
      active = std::move(keep_active);
    }
    hyps = std::move(finished);
  }

  std::vector<Hypothesis> out;
  for (auto& [labels, node] : hyps) out.push_back({labels, node.score});
  std::sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return detail::better(a.score, a.labels, b.score, b.labels);
  });
  return out;
}

}  // namespace critlab
