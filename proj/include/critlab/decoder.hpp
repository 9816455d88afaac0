// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Token-passing Viterbi beam search over the on-the-fly composition of a
// unit-to-word graph (H∘L) with a word grammar (G).

#pragma once

#include "critlab/fsa.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>
#include <vector>

namespace critlab {

struct DecodeBeam {
  /// Maximum tokens kept after each frame (counted before the epsilon
  /// closure).
  int max_active = std::numeric_limits<int>::max();
  /// Tokens scoring below best - margin are dropped after each frame.
  double margin = kInf;
};

struct DecodeResult {
  std::vector<int> words;
  double score = kLogZero;
};

/// Tokens carry (hl state, g state, score, word history). An output label w
/// on an hl arc advances g along its arcs with input w; epsilon outputs
/// leave g in place. G is expected to be epsilon-free (a bigram LM is).
inline DecodeResult dynamic_decode(const Fsa& hl, const Fsa& g,
                                   const Matrix& scores, const DecodeBeam& beam) {
  if (hl.out_alphabet() != g.in_alphabet())
    throw std::invalid_argument("alphabet mismatch between graph and grammar");
  DecodeResult result;
  if (hl.num_states() == 0 || g.num_states() == 0) return result;
  detail::check_scores(hl, scores);

  struct Token {
    double score;
    int link;  // index into links, -1 for none
  };
  struct WordLink {
    int word;
    int prev;
  };
  std::vector<WordLink> links;
  const long long g_states = g.num_states();
  auto key_of = [g_states](int h, int s) { return static_cast<long long>(h) * g_states + s; };

  std::vector<std::unordered_map<int, std::vector<int>>> g_arcs(g.num_states());
  for (int i = 0; i < g.num_arcs(); ++i) {
    if (g.arc(i).ilabel == kEpsilon)
      throw std::invalid_argument("grammar must be epsilon-free");
    g_arcs[g.arc(i).src][g.arc(i).ilabel].push_back(i);
  }

  using TokenMap = std::unordered_map<long long, Token>;
  // Applies one hl arc from token (h, s); `extra` is the acoustic score.
  auto relax = [&](TokenMap& into, int s, const Token& tok, const Arc& a,
                   double extra, std::vector<long long>* changed) {
    auto offer = [&](int gs, double score, int link) {
      const long long k = key_of(a.dst, gs);
      auto [it, inserted] = into.try_emplace(k, Token{score, link});
      if (!inserted) {
        if (score <= it->second.score) return;
        it->second = Token{score, link};
      }
      if (changed) changed->push_back(k);
    };
    const double base = tok.score + a.weight + extra;
    if (a.olabel == kEpsilon) {
      offer(s, base, tok.link);
      return;
    }
    auto it = g_arcs[s].find(a.olabel);
    if (it == g_arcs[s].end()) return;
    for (int gi : it->second) {
      const Arc& ga = g.arc(gi);
      links.push_back({ga.olabel, tok.link});
      offer(ga.dst, base + ga.weight, static_cast<int>(links.size()) - 1);
    }
  };

  auto closure = [&](TokenMap& tokens) {
    std::vector<long long> queue;
    for (auto& [k, tok] : tokens) queue.push_back(k);
    std::sort(queue.begin(), queue.end());
    while (!queue.empty()) {
      const long long k = queue.back();
      queue.pop_back();
      const Token tok = tokens.at(k);
      const int h = static_cast<int>(k / g_states), s = static_cast<int>(k % g_states);
      for (int ai : hl.arcs_from(h)) {
        const Arc& a = hl.arc(ai);
        if (a.ilabel == kEpsilon) relax(tokens, s, tok, a, 0.0, &queue);
      }
    }
  };

  auto prune = [&](TokenMap& tokens) {
    if (tokens.empty()) return;
    double best = kLogZero;
    for (auto& [k, tok] : tokens) best = std::max(best, tok.score);
    std::vector<std::pair<double, long long>> kept;
    for (auto& [k, tok] : tokens)
      if (tok.score >= best - beam.margin) kept.emplace_back(tok.score, k);
    std::sort(kept.begin(), kept.end(), [](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first > y.first;
      return x.second < y.second;
    });
    if (static_cast<long long>(kept.size()) > beam.max_active) kept.resize(beam.max_active);
    TokenMap next;
    next.reserve(kept.size());
    for (auto& [score, k] : kept) next.emplace(k, tokens.at(k));
    tokens = std::move(next);
  };

  TokenMap tokens;
  tokens.emplace(key_of(hl.start(), g.start()), Token{0.0, -1});
  closure(tokens);
  for (Eigen::Index t = 0; t < scores.rows(); ++t) {
    TokenMap next;
    // Deterministic expansion order.
    std::vector<long long> keys;
    keys.reserve(tokens.size());
    for (auto& [k, tok] : tokens) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    for (long long k : keys) {
      const Token& tok = tokens.at(k);
      const int h = static_cast<int>(k / g_states), s = static_cast<int>(k % g_states);
      for (int ai : hl.arcs_from(h)) {
        const Arc& a = hl.arc(ai);
        if (a.ilabel == kEpsilon) continue;
        relax(next, s, tok, a, scores(t, a.ilabel), nullptr);
      }
    }
    // Pruning happens on the tokens that consumed frame t; their epsilon
    // successors are added afterwards so that a word-end token and its
    // return to the lexicon root survive together.
    prune(next);
    closure(next);
    tokens = std::move(next);
    if (tokens.empty()) return result;
  }

  int best_link = -1;
  long long best_key = -1;
  for (auto& [k, tok] : tokens) {
    const int h = static_cast<int>(k / g_states), s = static_cast<int>(k % g_states);
    if (!hl.is_final(h) || !g.is_final(s)) continue;
    const double v = tok.score + hl.final_weight(h) + g.final_weight(s);
    if (v > result.score || (v == result.score && k < best_key)) {
      result.score = v;
      best_link = tok.link;
      best_key = k;
    }
  }
  for (int l = best_link; l >= 0; l = links[l].prev) result.words.push_back(links[l].word);
  std::reverse(result.words.begin(), result.words.end());
  return result;
}

}  // namespace critlab
