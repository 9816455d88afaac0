// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Random graphs and brute-force path enumeration shared by the graph tests.

#pragma once

#include "critlab/fsa.hpp"
#include "test_util.hpp"

#include <functional>
#include <map>

namespace critlab::testing {

/// Random graph whose epsilon-input arcs only go to higher-numbered states.
inline Fsa random_fsa(Rng& rng, int states, int arcs, int in_alphabet, int out_alphabet,
                      double eps_rate = 0.2) {
  Fsa g(in_alphabet, out_alphabet);
  g.add_states(states);
  g.set_start(0);
  std::uniform_real_distribution<double> w(-1.5, 0.0), coin(0.0, 1.0);
  for (int i = 0; i < arcs; ++i) {
    int src = uniform_int(rng, 0, states - 1);
    int dst = uniform_int(rng, 0, states - 1);
    int il = uniform_int(rng, 0, in_alphabet - 1);
    if (coin(rng) < eps_rate && src != dst) {
      if (src > dst) std::swap(src, dst);
      il = kEpsilon;
    }
    const int ol = coin(rng) < 0.3 ? kEpsilon : uniform_int(rng, 0, out_alphabet - 1);
    g.add_arc(src, dst, il, ol, w(rng));
  }
  for (int s = 0; s < states; ++s)
    if (coin(rng) < 0.4 || s == states - 1) g.set_final(s, w(rng));
  return g;
}

struct EnumeratedPath {
  std::vector<int> arcs;
  std::vector<int> frame_labels;
  std::vector<int> output;
  double weight = 0.0;  // graph weight including the final weight
};

/// Every start-to-final path with exactly `frames` emitting arcs.
inline std::vector<EnumeratedPath> enumerate_paths(const Fsa& g, int frames) {
  std::vector<EnumeratedPath> out;
  if (g.num_states() == 0) return out;
  EnumeratedPath cur;
  std::function<void(int)> rec = [&](int s) {
    if (static_cast<int>(cur.frame_labels.size()) == frames && g.is_final(s)) {
      EnumeratedPath p = cur;
      p.weight += g.final_weight(s);
      out.push_back(std::move(p));
    }
    for (int ai : g.arcs_from(s)) {
      const Arc& a = g.arc(ai);
      const bool emits = a.ilabel != kEpsilon;
      if (emits && static_cast<int>(cur.frame_labels.size()) == frames) continue;
      cur.arcs.push_back(ai);
      if (emits) cur.frame_labels.push_back(a.ilabel);
      if (a.olabel != kEpsilon) cur.output.push_back(a.olabel);
      cur.weight += a.weight;
      rec(a.dst);
      cur.weight -= a.weight;
      if (a.olabel != kEpsilon) cur.output.pop_back();
      if (emits) cur.frame_labels.pop_back();
      cur.arcs.pop_back();
    }
  };
  rec(g.start());
  return out;
}

inline double path_score(const EnumeratedPath& p, const Matrix& scores) {
  double s = p.weight;
  for (std::size_t t = 0; t < p.frame_labels.size(); ++t) s += scores(t, p.frame_labels[t]);
  return s;
}

/// (input string, output string) -> log-sum of path weights, for graphs
/// whose paths are finite (acyclic).
using Relation = std::map<std::pair<std::vector<int>, std::vector<int>>, double>;

inline Relation acyclic_relation(const Fsa& g) {
  Relation rel;
  if (g.num_states() == 0) return rel;
  std::vector<int> in, out;
  std::function<void(int, double)> rec = [&](int s, double w) {
    if (g.is_final(s)) {
      auto [it, ins] = rel.try_emplace({in, out}, kLogZero);
      it->second = log_add(it->second, w + g.final_weight(s));
    }
    for (int ai : g.arcs_from(s)) {
      const Arc& a = g.arc(ai);
      if (a.ilabel != kEpsilon) in.push_back(a.ilabel);
      if (a.olabel != kEpsilon) out.push_back(a.olabel);
      rec(a.dst, w + a.weight);
      if (a.olabel != kEpsilon) out.pop_back();
      if (a.ilabel != kEpsilon) in.pop_back();
    }
  };
  rec(g.start(), 0.0);
  return rel;
}

/// Random DAG (arcs only go forward).
inline Fsa random_dag(Rng& rng, int states, int arcs, int in_alphabet, int out_alphabet) {
  Fsa g(in_alphabet, out_alphabet);
  g.add_states(states);
  g.set_start(0);
  std::uniform_real_distribution<double> w(-1.0, 0.0), coin(0.0, 1.0);
  for (int i = 0; i < arcs; ++i) {
    int src = uniform_int(rng, 0, states - 2);
    int dst = uniform_int(rng, src + 1, states - 1);
    const int il = coin(rng) < 0.25 ? kEpsilon : uniform_int(rng, 0, in_alphabet - 1);
    const int ol = coin(rng) < 0.25 ? kEpsilon : uniform_int(rng, 0, out_alphabet - 1);
    g.add_arc(src, dst, il, ol, w(rng));
  }
  g.set_final(states - 1, 0.0);
  if (states > 2 && coin(rng) < 0.5) g.set_final(states - 2, w(rng));
  return g;
}

}  // namespace critlab::testing
