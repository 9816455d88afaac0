// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "critlab/numeric.hpp"

#include <cstdint>
#include <random>

namespace critlab {

using Rng = std::mt19937_64;

/// Seed for the `index`-th independent stream derived from `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

template <typename Derived>
void fill_uniform(Eigen::PlainObjectBase<Derived>& m, Rng& rng, double range) {
  std::uniform_real_distribution<double> dist(-range, range);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

template <typename Derived>
void fill_normal(Eigen::PlainObjectBase<Derived>& m, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

}  // namespace critlab
