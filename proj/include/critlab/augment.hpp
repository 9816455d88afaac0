// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// SpecAugment-style time and feature-bin masking.

#pragma once

#include "critlab/numeric.hpp"
#include "critlab/random.hpp"

#include <algorithm>
#include <string>

namespace critlab {

/// Each mask draws a width uniformly from [0, max] and a start uniformly
/// among the positions where it fits. Time widths are clipped to the
/// utterance length.
struct AugmentPolicy {
  int time_mask_count = 0;
  int max_time_mask_frames = 0;
  int freq_mask_count = 0;
  int max_freq_mask_bins = 0;

  static AugmentPolicy sm_like() { return {2, 15, 2, 3}; }
  static AugmentPolicy ld_like() { return {2, 20, 2, 5}; }
  static AugmentPolicy none() { return {}; }
  static AugmentPolicy preset(const std::string& name) {
    if (name == "SM-like" || name == "sm") return sm_like();
    if (name == "LD-like" || name == "ld") return ld_like();
    if (name == "none") return none();
    throw std::invalid_argument("unknown augment preset: " + name);
  }

  void validate(int feature_dim) const {
    if (time_mask_count < 0 || max_time_mask_frames < 0 || freq_mask_count < 0 || max_freq_mask_bins < 0)
      throw std::invalid_argument("mask parameters must be >= 0");
    if (max_freq_mask_bins > feature_dim) throw std::invalid_argument("frequency mask wider than the features");
  }
};

inline Matrix spec_augment(const Matrix& features, const AugmentPolicy& policy, std::uint64_t seed) {
  policy.validate(static_cast<int>(features.cols()));
  Matrix out = features;
  Rng rng(seed);
  auto span = [&](int max_width, int extent) {
    const int w = std::uniform_int_distribution<int>(0, std::min(max_width, extent))(rng);
    const int start = std::uniform_int_distribution<int>(0, extent - w)(rng);
    return std::pair{start, w};
  };
  const int frames = static_cast<int>(out.rows()), bins = static_cast<int>(out.cols());
  for (int i = 0; i < policy.time_mask_count; ++i) {
    const auto [s, w] = span(policy.max_time_mask_frames, frames);
    out.middleRows(s, w).setZero();
  }
  for (int i = 0; i < policy.freq_mask_count; ++i) {
    const auto [s, w] = span(policy.max_freq_mask_bins, bins);
    out.middleCols(s, w).setZero();
  }
  return out;
}

}  // namespace critlab
