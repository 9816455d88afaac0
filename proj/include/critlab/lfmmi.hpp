// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Lattice-free MMI: alignment-constrained numerator graphs, LM-composed
// denominator graphs and the objective with its occupancy gradient.

#pragma once

#include "critlab/fsa.hpp"

#include <stdexcept>
#include <vector>

namespace critlab {

struct MmiGraphPair {
  Fsa numerator;    // acyclic, alignment-constrained
  Fsa denominator;  // cyclic, LM-composed
};

/// Acceptor over frame labels in which each boundary between consecutive
/// runs of `frame_labels` may move by up to `tolerance` frames, every run
/// keeping at least one frame. State (t, k) means "frame t belongs to run
/// k"; tolerance 0 gives the single alignment path.
inline Fsa build_numerator_graph(std::span<const Label> frame_labels, int tolerance,
                                 int alphabet) {
  if (tolerance < 0) throw std::invalid_argument("tolerance must be >= 0");
  const int frames = static_cast<int>(frame_labels.size());
  Fsa g(alphabet, alphabet);
  if (frames == 0) {
    g.set_start(g.add_state());
    g.set_final(0, 0.0);
    return g;
  }
  std::vector<Label> run_label;
  std::vector<int> run_end;  // exclusive end frame of each run
  for (int t = 0; t < frames; ++t) {
    if (frame_labels[t] < 0 || frame_labels[t] >= alphabet)
      throw std::out_of_range("frame label outside the alphabet");
    if (t == 0 || frame_labels[t] != frame_labels[t - 1]) run_label.push_back(frame_labels[t]);
    if (t + 1 == frames || frame_labels[t + 1] != frame_labels[t]) run_end.push_back(t + 1);
  }
  const int runs = static_cast<int>(run_label.size());
  auto run_begin = [&](int k) { return k == 0 ? 0 : run_end[k - 1]; };
  auto inside = [&](int t, int k) {
    return t >= std::max(0, run_begin(k) - tolerance) &&
           t < std::min(frames, run_end[k] + tolerance);
  };

  std::vector<int> id(static_cast<std::size_t>(frames) * runs, -1);
  auto state = [&](int t, int k) {
    int& s = id[static_cast<std::size_t>(t) * runs + k];
    if (s < 0) s = g.add_state();
    return s;
  };
  const int start = g.add_state();
  g.set_start(start);
  g.add_arc(start, state(0, 0), run_label[0], run_label[0]);
  for (int t = 0; t + 1 < frames; ++t) {
    for (int k = 0; k < runs; ++k) {
      if (id[static_cast<std::size_t>(t) * runs + k] < 0 || !inside(t, k)) continue;
      const int src = id[static_cast<std::size_t>(t) * runs + k];
      if (inside(t + 1, k)) g.add_arc(src, state(t + 1, k), run_label[k], run_label[k]);
      // Frame t+1 starts run k+1: that boundary moved to t+1.
      if (k + 1 < runs && std::abs(t + 1 - run_begin(k + 1)) <= tolerance && inside(t + 1, k + 1))
        g.add_arc(src, state(t + 1, k + 1), run_label[k + 1], run_label[k + 1]);
    }
  }
  if (id[static_cast<std::size_t>(frames - 1) * runs + runs - 1] >= 0)
    g.set_final(id[static_cast<std::size_t>(frames - 1) * runs + runs - 1], 0.0);
  return trim(g);
}

/// compose(topology, unit LM), trimmed.
inline Fsa build_denominator_graph(const Fsa& topology, const Fsa& unit_lm) {
  Fsa den = compose_static(topology, unit_lm);
  if (den.empty()) throw std::invalid_argument("empty denominator graph");
  return den;
}

/// Restricts the denominator to the numerator's frame strings, so that the
/// numerator carries the denominator's LM weights and its paths are a
/// subset of the denominator's.
inline Fsa intersect_with_denominator(const Fsa& numerator, const Fsa& denominator) {
  return compose_static(numerator, denominator);
}

struct MmiResult {
  double loss = 0.0;
  /// d loss / d scores, T' x S.
  Matrix grad;
  double log_z_num = kLogZero;
  double log_z_den = kLogZero;
};

/// loss = logZ_den - logZ_num, grad = den occupancy - num occupancy.
/// An empty numerator gives +inf and a zero gradient.
inline MmiResult lfmmi_loss(const Matrix& scores, const Fsa& numerator, const Fsa& denominator) {
  MmiResult r;
  r.grad = Matrix::Zero(scores.rows(), scores.cols());
  const FsaPosteriors num = fsa_forward_backward(numerator, scores);
  r.log_z_num = num.log_z;
  if (num.log_z == kLogZero) {
    r.loss = kInf;
    return r;
  }
  const FsaPosteriors den = fsa_forward_backward(denominator, scores);
  r.log_z_den = den.log_z;
  if (den.log_z == kLogZero)
    throw std::domain_error("numerator path outside the denominator graph");
  r.loss = den.log_z - num.log_z;
  r.grad = den.label_occupancy - num.label_occupancy;
  return r;
}

inline MmiResult lfmmi_loss(const Matrix& scores, const MmiGraphPair& graphs) {
  return lfmmi_loss(scores, graphs.numerator, graphs.denominator);
}

}  // namespace critlab
