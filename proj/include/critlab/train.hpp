// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Mini-batch training of the streaming encoder (and the transducer
// decoder) under frame cross-entropy, CTC, RNN-T and LF-MMI.

#pragma once

#include "critlab/augment.hpp"
#include "critlab/ctc.hpp"
#include "critlab/encoder.hpp"
#include "critlab/fsa.hpp"
#include "critlab/lfmmi.hpp"
#include "critlab/rnnt.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <thread>
#include <vector>

namespace critlab {

template <typename Model>
void append_spans(Model& m, std::vector<std::span<double>>& out) {
  m.visit_tensors([&](auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
}

struct AdamOptions {
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Gradients are rescaled to this global L2 norm when above it; <= 0
  /// disables clipping.
  double clip_norm = 5.0;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : opt_(options) {}

  /// Updates `params` in place. Returns the global gradient norm before
  /// clipping.
  double step(const std::vector<std::span<double>>& params,
              const std::vector<std::span<double>>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("parameter/gradient count mismatch");
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.size(), 0.0);
        second_.emplace_back(p.size(), 0.0);
      }
    }
    if (first_.size() != params.size()) throw std::invalid_argument("parameter layout changed");
    double sq = 0.0;
    for (const auto& g : grads)
      for (double v : g) sq += v * v;
    const double norm = std::sqrt(sq);
    const double scale = opt_.clip_norm > 0.0 && norm > opt_.clip_norm ? opt_.clip_norm / norm : 1.0;
    ++steps_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].size() != grads[i].size() || params[i].size() != first_[i].size())
        throw std::invalid_argument("tensor size mismatch");
      for (std::size_t k = 0; k < params[i].size(); ++k) {
        const double g = grads[i][k] * scale;
        double& m = first_[i][k];
        double& v = second_[i][k];
        m = opt_.beta1 * m + (1.0 - opt_.beta1) * g;
        v = opt_.beta2 * v + (1.0 - opt_.beta2) * g * g;
        params[i][k] -= opt_.learning_rate * (m / c1) / (std::sqrt(v / c2) + opt_.epsilon);
      }
    }
    return norm;
  }

  long long steps() const { return steps_; }

 private:
  AdamOptions opt_;
  std::vector<std::vector<double>> first_, second_;
  long long steps_ = 0;
};

struct TrainOptions {
  int epochs = 10;
  int batch_size = 8;
  AdamOptions adam;
  std::uint64_t seed = 1;
  AugmentPolicy augment = AugmentPolicy::none();
  int threads = 1;
  /// Stop after this many optimizer steps (0 = no limit).
  long long max_steps = 0;
};

struct TrainLog {
  std::vector<double> batch_losses;  // per-frame loss of every batch
  std::vector<double> epoch_losses;  // per-frame loss of every epoch
  long long skipped = 0;             // items with an infeasible target
  long long steps = 0;
};

/// Gradient contribution of one utterance.
struct ItemGradient {
  EncoderParams encoder;
  std::optional<RnntDecoderModel> decoder;
  double loss = 0.0;    // summed over output frames
  double frames = 0.0;  // normalizer
  bool skipped = false;
};

/// Computes the gradient of item `index` given its (possibly augmented)
/// features. Must fill `out.encoder` (and `out.decoder` when training one).
using ItemFn = std::function<void(std::size_t index, const Matrix& features, ItemGradient& out)>;

/// Shared batching loop: shuffles per epoch, evaluates items (in parallel
/// when threads > 1), sums their gradients in item order, normalizes by
/// output frames and takes one Adam step per batch.
inline TrainLog train_loop(EncoderParams& encoder, RnntDecoderModel* decoder,
                           const std::vector<Matrix>& features, const TrainOptions& opt,
                           const ItemFn& item_fn) {
  if (opt.batch_size < 1 || opt.epochs < 0) throw std::invalid_argument("bad training options");
  TrainLog log;
  Adam adam(opt.adam);
  std::vector<std::span<double>> params;
  append_spans(encoder, params);
  if (decoder) append_spans(*decoder, params);
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const int threads = std::max(1, opt.threads);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng shuffle(derive_seed(opt.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle);
    double epoch_loss = 0.0, epoch_frames = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += opt.batch_size) {
      if (opt.max_steps > 0 && log.steps >= opt.max_steps) break;
      const std::size_t end = std::min(order.size(), begin + opt.batch_size);
      std::vector<ItemGradient> items(end - begin);
      auto work = [&](std::size_t slot) {
        const std::size_t idx = order[begin + slot];
        const Matrix& x = features[idx];
        const std::uint64_t aug_seed = derive_seed(opt.seed ^ 0x5a5a5a5aULL,
                                                   static_cast<std::uint64_t>(epoch) * features.size() + idx);
        const bool augment = opt.augment.time_mask_count > 0 || opt.augment.freq_mask_count > 0;
        item_fn(idx, augment ? spec_augment(x, opt.augment, aug_seed) : x, items[slot]);
      };
      if (threads == 1) {
        for (std::size_t s = 0; s < items.size(); ++s) work(s);
      } else {
        std::vector<std::exception_ptr> errors(threads);
        {
          std::vector<std::jthread> pool;
          for (int w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
              try {
                for (std::size_t s = w; s < items.size(); s += threads) work(s);
              } catch (...) {
                errors[w] = std::current_exception();
              }
            });
        }
        for (auto& e : errors)
          if (e) std::rethrow_exception(e);
      }

      EncoderParams enc_sum = EncoderParams::zeros(encoder.config);
      std::optional<RnntDecoderModel> dec_sum;
      if (decoder) dec_sum = RnntDecoderModel::zeros(decoder->config);
      double loss = 0.0, frames = 0.0;
      auto add = [](auto& into, const auto& from) {
        std::vector<std::span<double>> a;
        std::vector<std::span<const double>> b;
        append_spans(into, a);
        from.visit_tensors([&](const auto& t) { b.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
        for (std::size_t i = 0; i < a.size(); ++i)
          for (std::size_t k = 0; k < a[i].size(); ++k) a[i][k] += b[i][k];
      };
      for (auto& it : items) {
        if (it.skipped) {
          ++log.skipped;
          continue;
        }
        add(enc_sum, it.encoder);
        if (dec_sum && it.decoder) add(*dec_sum, *it.decoder);
        loss += it.loss;
        frames += it.frames;
      }
      if (frames <= 0.0) continue;
      std::vector<std::span<double>> grads;
      append_spans(enc_sum, grads);
      if (dec_sum) append_spans(*dec_sum, grads);
      for (auto& g : grads)
        for (double& v : g) v /= frames;
      adam.step(params, grads);
      ++log.steps;
      log.batch_losses.push_back(loss / frames);
      epoch_loss += loss;
      epoch_frames += frames;
    }
    if (epoch_frames > 0.0) log.epoch_losses.push_back(epoch_loss / epoch_frames);
    if (opt.max_steps > 0 && log.steps >= opt.max_steps) break;
  }
  return log;
}

// ---------------------------------------------------------------------------
// Frame targets and forced alignment

/// Label of the input frame at the centre of each output frame's window.
inline std::vector<Label> frame_targets(std::span<const Label> alignment, int stride) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  const std::size_t frames = alignment.size() / static_cast<std::size_t>(stride);
  std::vector<Label> out(frames);
  for (std::size_t t = 0; t < frames; ++t) out[t] = alignment[t * stride + stride / 2];
  return out;
}

/// Best one-state-per-unit frame labelling of `units` under `scores`
/// (T' x D log-scores); nullopt when T' < U.
inline std::optional<std::vector<Label>> force_align(const Matrix& scores, std::span<const Label> units) {
  const int dim = static_cast<int>(scores.cols());
  const Fsa h = build_topology_fst(dim, TopologyMode::kHmm1);
  const Fsa graph = compose_static(h, linear_acceptor(units, dim));
  if (graph.empty()) return std::nullopt;
  auto path = viterbi_align(graph, scores);
  if (!path) return std::nullopt;
  return path->frame_labels;
}

// ---------------------------------------------------------------------------
// Criteria

inline void softmax_cross_entropy(const Matrix& logits, std::span<const Label> targets, ItemGradient& out,
                                  Matrix& d_logits) {
  const Matrix logp = log_softmax_rows(logits);
  d_logits = logp.array().exp();
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    out.loss -= logp(t, targets[t]);
    d_logits(t, targets[t]) -= 1.0;
  }
  out.frames += static_cast<double>(logits.rows());
}

/// Mean per-frame cross-entropy against `targets[i]` (one label per output
/// frame of item i).
inline TrainLog train_ce(EncoderParams& encoder, const std::vector<Matrix>& features,
                         const std::vector<std::vector<Label>>& targets, const TrainOptions& opt) {
  if (features.size() != targets.size()) throw std::invalid_argument("one target list per item");
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (static_cast<std::size_t>(encoder.config.output_frames(static_cast<int>(features[i].rows()))) !=
        targets[i].size())
      throw std::invalid_argument("alignment length mismatch after striding");
    for (Label l : targets[i])
      if (l < 0 || l >= encoder.config.output_dim) throw std::out_of_range("frame target outside the outputs");
  }
  return train_loop(encoder, nullptr, features, opt, [&](std::size_t i, const Matrix& x, ItemGradient& out) {
    EncoderCache cache;
    const Matrix logits = encoder_forward(encoder, x, &cache);
    Matrix d;
    softmax_cross_entropy(logits, targets[i], out, d);
    out.encoder = std::move(encoder_backward(encoder, cache, d).params);
  });
}

inline TrainLog train_ctc(EncoderParams& encoder, const std::vector<Matrix>& features,
                          const std::vector<LabelSequence>& targets, const TrainOptions& opt) {
  if (features.size() != targets.size()) throw std::invalid_argument("one target per item");
  return train_loop(encoder, nullptr, features, opt, [&](std::size_t i, const Matrix& x, ItemGradient& out) {
    EncoderCache cache;
    const Matrix logits = encoder_forward(encoder, x, &cache);
    if (logits.rows() == 0) {
      out.skipped = true;
      return;
    }
    const CtcResult r = ctc_loss(logits, targets[i]);
    if (!std::isfinite(r.loss)) {
      out.skipped = true;
      return;
    }
    out.loss = r.loss;
    out.frames = static_cast<double>(logits.rows());
    out.encoder = std::move(encoder_backward(encoder, cache, r.grad).params);
  });
}

/// Joint training of encoder and transducer decoder; the encoder output is
/// the joiner's encoder input.
inline TrainLog train_rnnt(EncoderParams& encoder, RnntDecoderModel& decoder, const std::vector<Matrix>& features,
                           const std::vector<LabelSequence>& targets, const TrainOptions& opt) {
  if (features.size() != targets.size()) throw std::invalid_argument("one target per item");
  if (decoder.config.enc_dim != encoder.config.output_dim)
    throw std::invalid_argument("decoder does not match the encoder width");
  return train_loop(encoder, &decoder, features, opt, [&](std::size_t i, const Matrix& x, ItemGradient& out) {
    EncoderCache cache;
    const Matrix h = encoder_forward(encoder, x, &cache);
    if (h.rows() == 0) {
      out.skipped = true;
      return;
    }
    const RnntForwardCache net = rnnt_prepare(h, targets[i], decoder);
    auto r = rnnt_loss_fused<double>(joiner_row_producer<double>(net, decoder), static_cast<int>(h.rows()),
                                     decoder.config.num_units, targets[i]);
    out.loss = r.loss;
    out.frames = static_cast<double>(h.rows());
    Lattice<double> dz(r.grad.frames, r.grad.rows_u, r.grad.dim);
    dz.data = std::move(r.grad.data);
    RnntNetworkGrads g = rnnt_network_backward(net, decoder, dz);
    out.decoder = std::move(g.model);
    out.encoder = std::move(encoder_backward(encoder, cache, g.enc).params);
  });
}

/// `numerators[i]` must already carry the denominator weights.
inline TrainLog train_lfmmi(EncoderParams& encoder, const std::vector<Matrix>& features,
                            const std::vector<Fsa>& numerators, const Fsa& denominator, const TrainOptions& opt) {
  if (features.size() != numerators.size()) throw std::invalid_argument("one numerator per item");
  return train_loop(encoder, nullptr, features, opt, [&](std::size_t i, const Matrix& x, ItemGradient& out) {
    EncoderCache cache;
    const Matrix scores = encoder_forward(encoder, x, &cache);
    if (scores.rows() == 0 || numerators[i].empty()) {
      out.skipped = true;
      return;
    }
    const MmiResult r = lfmmi_loss(scores, numerators[i], denominator);
    if (!std::isfinite(r.loss)) {
      out.skipped = true;
      return;
    }
    out.loss = r.loss;
    out.frames = static_cast<double>(scores.rows());
    out.encoder = std::move(encoder_backward(encoder, cache, r.grad).params);
  });
}

/// Fraction of output frames whose argmax equals the target.
inline double frame_accuracy(const EncoderParams& encoder, const std::vector<Matrix>& features,
                             const std::vector<std::vector<Label>>& targets) {
  long long hit = 0, total = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Matrix out = encoder_forward(encoder, features[i]);
    for (Eigen::Index t = 0; t < out.rows(); ++t) {
      Eigen::Index arg;
      out.row(t).maxCoeff(&arg);
      hit += arg == targets[i][t];
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / total : 0.0;
}

}  // namespace critlab
