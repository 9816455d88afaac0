// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// CTC negative log-likelihood with the softmax fused into the gradient,
// an enumeration oracle, and greedy decoding.

#pragma once

#include "critlab/numeric.hpp"

#include <stdexcept>

namespace critlab {

struct CtcResult {
  /// -log p(y|x); +inf when no alignment exists.
  double loss = 0.0;
  /// d loss / d logits, T' x D. Rows sum to zero.
  Matrix grad;
  /// Posterior of each blank-interleaved state, T' x (2U+1).
  Matrix occupancy;
};

/// Forward-backward over the 2U+1 state chain. Logits are unnormalized,
/// one row per output frame, column 0 is blank.
inline CtcResult ctc_loss(const Matrix& logits, std::span<const Label> y) {
  const int frames = static_cast<int>(logits.rows());
  const int dim = static_cast<int>(logits.cols());
  if (frames < 1) throw std::invalid_argument("ctc_loss needs at least one frame");
  check_label_sequence(y, dim);

  const int num_labels = static_cast<int>(y.size());
  const int states = 2 * num_labels + 1;
  std::vector<Label> ext(states, kBlank);
  for (int u = 0; u < num_labels; ++u) ext[2 * u + 1] = y[u];
  // A skip from s-2 to s is allowed when s is a label different from the
  // previous label.
  auto can_skip = [&](int s) {
    return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
  };

  const Matrix logp = log_softmax_rows(logits);
  Matrix alpha = Matrix::Constant(frames, states, kLogZero);
  Matrix beta = Matrix::Constant(frames, states, kLogZero);

  alpha(0, 0) = logp(0, ext[0]);
  if (states > 1) alpha(0, 1) = logp(0, ext[1]);
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < states; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (can_skip(s)) a = log_add(a, alpha(t - 1, s - 2));
      if (a != kLogZero) alpha(t, s) = a + logp(t, ext[s]);
    }
  }

  beta(frames - 1, states - 1) = logp(frames - 1, ext[states - 1]);
  if (states > 1)
    beta(frames - 1, states - 2) = logp(frames - 1, ext[states - 2]);
  for (int t = frames - 2; t >= 0; --t) {
    for (int s = 0; s < states; ++s) {
      double b = beta(t + 1, s);
      if (s + 1 < states) b = log_add(b, beta(t + 1, s + 1));
      if (s + 2 < states && can_skip(s + 2)) b = log_add(b, beta(t + 1, s + 2));
      if (b != kLogZero) beta(t, s) = b + logp(t, ext[s]);
    }
  }

  double log_likelihood = alpha(frames - 1, states - 1);
  if (states > 1)
    log_likelihood = log_add(log_likelihood, alpha(frames - 1, states - 2));

  CtcResult result;
  result.grad = Matrix::Zero(frames, dim);
  result.occupancy = Matrix::Zero(frames, states);
  if (log_likelihood == kLogZero) {
    result.loss = kInf;
    return result;
  }
  result.loss = -log_likelihood;
  for (int t = 0; t < frames; ++t) {
    result.grad.row(t) = logp.row(t).array().exp();
    for (int s = 0; s < states; ++s) {
      if (alpha(t, s) == kLogZero || beta(t, s) == kLogZero) continue;
      // alpha and beta both include the emission at (t, s).
      const double g =
          std::exp(alpha(t, s) + beta(t, s) - logp(t, ext[s]) - log_likelihood);
      result.occupancy(t, s) = g;
      result.grad(t, ext[s]) -= g;
    }
  }
  return result;
}

/// Explicit sum over every alignment in the inverse image of y.
inline double ctc_loss_oracle(const Matrix& logits, std::span<const Label> y) {
  const int frames = static_cast<int>(logits.rows());
  const int dim = static_cast<int>(logits.cols());
  if (frames == 0) {
    if (y.empty()) return 0.0;
    return kInf;
  }
  const Matrix logp = log_softmax_rows(logits);
  std::vector<double> path_scores;
  for (const Alignment& a :
       enumerate_alignments(frames, y, dim, CollapseMode::kCtc)) {
    double s = 0.0;
    for (int t = 0; t < frames; ++t) s += logp(t, a[t]);
    path_scores.push_back(s);
  }
  if (path_scores.empty()) return kInf;
  return -log_sum_exp(path_scores);
}

/// Per-frame argmax (lowest index wins ties), then CTC collapse.
inline LabelSequence ctc_greedy_decode(const Matrix& logits) {
  Alignment best(logits.rows());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k)
      if (logits(t, k) > logits(t, arg)) arg = k;
    best[t] = static_cast<Label>(arg);
  }
  return collapse(best, CollapseMode::kCtc);
}

}  // namespace critlab
