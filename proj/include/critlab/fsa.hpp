// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Weighted finite-state acceptors/transducers in the log semiring:
// construction of topology (H), lexicon (L) and bigram (G) machines,
// composition, frame-synchronous forward-backward and Viterbi alignment,
// and a line-oriented text format.
//
// Input label kEpsilon marks a non-emitting arc; every other input label
// consumes exactly one frame and indexes a column of the frame scores.
// Weights are log-probabilities (larger is better).

#pragma once

#include "critlab/numeric.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace critlab {

inline constexpr int kEpsilon = -1;

struct Arc {
  int src = 0;
  int dst = 0;
  int ilabel = kEpsilon;
  int olabel = kEpsilon;
  double weight = 0.0;
};

class Fsa {
 public:
  Fsa() = default;
  /// Labels are drawn from [0, in_alphabet) and [0, out_alphabet).
  Fsa(int in_alphabet, int out_alphabet)
      : in_alphabet_(in_alphabet), out_alphabet_(out_alphabet) {}

  int add_state() {
    final_.push_back(kLogZero);
    out_.emplace_back();
    return num_states() - 1;
  }
  void add_states(int n) {
    for (int i = 0; i < n; ++i) add_state();
  }

  int add_arc(int src, int dst, int ilabel, int olabel, double weight = 0.0) {
    if (src < 0 || src >= num_states() || dst < 0 || dst >= num_states())
      throw std::out_of_range("arc endpoint out of range");
    if (ilabel < kEpsilon || ilabel >= in_alphabet_ || olabel < kEpsilon ||
        olabel >= out_alphabet_)
      throw std::out_of_range("arc label outside the declared alphabet");
    arcs_.push_back({src, dst, ilabel, olabel, weight});
    out_[src].push_back(static_cast<int>(arcs_.size()) - 1);
    return static_cast<int>(arcs_.size()) - 1;
  }

  void set_start(int s) {
    if (s < 0 || s >= num_states()) throw std::out_of_range("start state");
    start_ = s;
  }
  void set_final(int s, double weight = 0.0) { final_.at(s) = weight; }

  int num_states() const { return static_cast<int>(final_.size()); }
  int num_arcs() const { return static_cast<int>(arcs_.size()); }
  int start() const { return start_; }
  int in_alphabet() const { return in_alphabet_; }
  int out_alphabet() const { return out_alphabet_; }
  const std::vector<Arc>& arcs() const { return arcs_; }
  const Arc& arc(int i) const { return arcs_[i]; }
  /// Outgoing arc indices of `s`, in insertion order.
  const std::vector<int>& arcs_from(int s) const { return out_[s]; }
  double final_weight(int s) const { return final_[s]; }
  bool is_final(int s) const { return final_[s] != kLogZero; }

  /// No state or no final state reachable from start.
  bool empty() const;

 private:
  int in_alphabet_ = 0;
  int out_alphabet_ = 0;
  int start_ = 0;
  std::vector<Arc> arcs_;
  std::vector<double> final_;
  std::vector<std::vector<int>> out_;
};

namespace detail {

inline std::vector<bool> accessible(const Fsa& g) {
  std::vector<bool> seen(g.num_states(), false);
  if (g.num_states() == 0) return seen;
  std::vector<int> stack{g.start()};
  seen[g.start()] = true;
  while (!stack.empty()) {
    int s = stack.back();
    stack.pop_back();
    for (int a : g.arcs_from(s)) {
      int d = g.arc(a).dst;
      if (!seen[d]) {
        seen[d] = true;
        stack.push_back(d);
      }
    }
  }
  return seen;
}

inline std::vector<bool> coaccessible(const Fsa& g) {
  std::vector<std::vector<int>> in(g.num_states());
  for (int a = 0; a < g.num_arcs(); ++a) in[g.arc(a).dst].push_back(g.arc(a).src);
  std::vector<bool> seen(g.num_states(), false);
  std::vector<int> stack;
  for (int s = 0; s < g.num_states(); ++s)
    if (g.is_final(s)) {
      seen[s] = true;
      stack.push_back(s);
    }
  while (!stack.empty()) {
    int s = stack.back();
    stack.pop_back();
    for (int p : in[s])
      if (!seen[p]) {
        seen[p] = true;
        stack.push_back(p);
      }
  }
  return seen;
}

}  // namespace detail

inline bool Fsa::empty() const {
  if (num_states() == 0) return true;
  auto acc = detail::accessible(*this);
  for (int s = 0; s < num_states(); ++s)
    if (acc[s] && is_final(s)) return false;
  return true;
}

/// Removes states that are not on some start-to-final path. Surviving
/// states keep their relative order; an empty result has zero states.
inline Fsa trim(const Fsa& g) {
  auto acc = detail::accessible(g);
  auto coacc = detail::coaccessible(g);
  std::vector<int> remap(g.num_states(), -1);
  Fsa out(g.in_alphabet(), g.out_alphabet());
  for (int s = 0; s < g.num_states(); ++s)
    if (acc[s] && coacc[s]) remap[s] = out.add_state();
  if (out.num_states() == 0) return out;
  out.set_start(remap[g.start()]);
  for (int s = 0; s < g.num_states(); ++s)
    if (remap[s] >= 0 && g.is_final(s)) out.set_final(remap[s], g.final_weight(s));
  for (const Arc& a : g.arcs())
    if (remap[a.src] >= 0 && remap[a.dst] >= 0)
      out.add_arc(remap[a.src], remap[a.dst], a.ilabel, a.olabel, a.weight);
  return out;
}

// ---------------------------------------------------------------------------
// Text format
//
//   # fsa states=<n> start=<s> in=<I> out=<O>
//   <src> <dst> <ilabel> <olabel> <weight>     one line per arc, arc order
//   F <state> <weight>                          one line per final state
//
// Epsilon is written as -1. Weights use the shortest decimal form that
// round-trips to the same double, so write(read(x)) is byte-identical.

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error("bad number in fsa text: " + s);
  return v;
}

}  // namespace detail

inline void write_fsa(std::ostream& os, const Fsa& g) {
  os << "# fsa states=" << g.num_states() << " start=" << g.start()
     << " in=" << g.in_alphabet() << " out=" << g.out_alphabet() << '\n';
  for (const Arc& a : g.arcs())
    os << a.src << ' ' << a.dst << ' ' << a.ilabel << ' ' << a.olabel << ' '
       << detail::format_double(a.weight) << '\n';
  for (int s = 0; s < g.num_states(); ++s)
    if (g.is_final(s)) os << "F " << s << ' ' << detail::format_double(g.final_weight(s)) << '\n';
}

inline std::string fsa_to_text(const Fsa& g) {
  std::ostringstream os;
  write_fsa(os, g);
  return os.str();
}

inline Fsa read_fsa(std::istream& is) {
  std::string line;
  int states = -1, start = 0, in = 0, out = 0;
  std::vector<Arc> arcs;
  std::vector<std::pair<int, double>> finals;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string tok;
      while (ls >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        const int val = std::stoi(tok.substr(eq + 1));
        if (key == "states") states = val;
        else if (key == "start") start = val;
        else if (key == "in") in = val;
        else if (key == "out") out = val;
      }
      continue;
    }
    std::istringstream ls(line);
    if (line[0] == 'F') {
      std::string f, w;
      int s;
      if (!(ls >> f >> s >> w)) throw std::runtime_error("bad final line: " + line);
      finals.emplace_back(s, detail::parse_double(w));
      continue;
    }
    Arc a;
    std::string w;
    if (!(ls >> a.src >> a.dst >> a.ilabel >> a.olabel >> w))
      throw std::runtime_error("bad arc line: " + line);
    a.weight = detail::parse_double(w);
    arcs.push_back(a);
  }
  int max_state = states - 1;
  for (const Arc& a : arcs) {
    max_state = std::max({max_state, a.src, a.dst});
    in = std::max(in, a.ilabel + 1);
    out = std::max(out, a.olabel + 1);
  }
  for (auto& [s, w] : finals) max_state = std::max(max_state, s);
  Fsa g(in, out);
  g.add_states(max_state + 1);
  if (g.num_states() > 0) g.set_start(start);
  for (const Arc& a : arcs) g.add_arc(a.src, a.dst, a.ilabel, a.olabel, a.weight);
  for (auto& [s, w] : finals) g.set_final(s, w);
  return g;
}

inline Fsa fsa_from_text(const std::string& text) {
  std::istringstream is(text);
  return read_fsa(is);
}

// ---------------------------------------------------------------------------
// Builders

/// Add-k smoothed bigram acceptor over labels 1..alphabet_size-1 (label 0 is
/// reserved, matching the blank convention of unit inventories). State 0 is
/// the sentence-start history, state v the history "last label was v".
/// Final weights carry the end-of-sentence probability, so the outgoing
/// probabilities of every state sum to one. An empty corpus gives the
/// uniform bigram.
inline Fsa estimate_bigram_lm(const std::vector<LabelSequence>& corpus,
                              int alphabet_size, double smoothing_k) {
  if (!(smoothing_k > 0.0)) throw std::invalid_argument("smoothing_k must be > 0");
  if (alphabet_size < 2) throw std::invalid_argument("alphabet needs a label");
  const int v = alphabet_size - 1;
  // counts[h][w], w = v+1 encodes end of sentence; h = 0 is start.
  std::vector<std::vector<double>> counts(v + 1, std::vector<double>(v + 2, 0.0));
  for (const auto& seq : corpus) {
    int h = 0;
    for (Label l : seq) {
      if (l < 1 || l > v) throw std::out_of_range("lm label out of range");
      counts[h][l] += 1.0;
      h = l;
    }
    counts[h][v + 1] += 1.0;
  }
  Fsa g(alphabet_size, alphabet_size);
  g.add_states(v + 1);
  g.set_start(0);
  for (int h = 0; h <= v; ++h) {
    double total = 0.0;
    for (int w = 1; w <= v + 1; ++w) total += counts[h][w];
    const double denom = total + smoothing_k * (v + 1);
    for (int w = 1; w <= v; ++w)
      g.add_arc(h, w, w, w, std::log((counts[h][w] + smoothing_k) / denom));
    g.set_final(h, std::log((counts[h][v + 1] + smoothing_k) / denom));
  }
  return g;
}

/// Trie-shaped lexicon transducer: unit input labels, the word output label
/// on the last arc of each pronunciation, and an epsilon arc from each
/// word-end state back to the root. The root is the only final state.
/// Duplicate (word, pronunciation) pairs are collapsed.
inline Fsa build_lexicon_fst(const std::vector<std::pair<int, LabelSequence>>& lexicon,
                             int num_units, int num_words) {
  Fsa g(num_units, num_words);
  const int root = g.add_state();
  g.set_start(root);
  g.set_final(root, 0.0);
  std::map<std::pair<int, Label>, int> trie;  // (state, unit) -> state
  std::set<std::pair<int, LabelSequence>> seen;
  for (const auto& [word, pron] : lexicon) {
    if (pron.empty()) throw std::invalid_argument("empty pronunciation");
    if (word < 0 || word >= num_words) throw std::out_of_range("word id");
    check_label_sequence(pron, num_units);
    if (!seen.insert({word, pron}).second) continue;
    int s = root;
    for (std::size_t i = 0; i + 1 < pron.size(); ++i) {
      auto [it, inserted] = trie.try_emplace({s, pron[i]}, -1);
      if (inserted) {
        it->second = g.add_state();
        g.add_arc(s, it->second, pron[i], kEpsilon);
      }
      s = it->second;
    }
    const int end = g.add_state();
    g.add_arc(s, end, pron.back(), word);
    g.add_arc(end, root, kEpsilon, kEpsilon);
  }
  return g;
}

enum class TopologyMode { kCtc, kHmm1 };

/// Frame-level topology over a D-symbol inventory (0 = blank).
///
/// kCtc: state 0 is "after blank/start", state k is "last frame was unit
/// k". Entering unit k from anywhere but state k outputs k; repeating k or
/// emitting blank outputs epsilon, so paths map to collapse(., ctc).
/// kHmm1: one emitting state per unit with a self-loop; blank is unused.
inline Fsa build_topology_fst(int dim, TopologyMode mode) {
  if (dim < 2) throw std::invalid_argument("inventory needs a label");
  Fsa g(dim, dim);
  g.add_states(dim);
  g.set_start(0);
  for (int s = 0; s < dim; ++s) {
    if (mode == TopologyMode::kCtc) g.add_arc(s, 0, kBlank, kEpsilon);
    for (int k = 1; k < dim; ++k) g.add_arc(s, k, k, s == k ? kEpsilon : k);
    g.set_final(s, 0.0);
  }
  return g;
}

/// Linear acceptor for a label sequence.
inline Fsa linear_acceptor(std::span<const Label> labels, int alphabet) {
  Fsa g(alphabet, alphabet);
  g.add_states(static_cast<int>(labels.size()) + 1);
  g.set_start(0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    g.add_arc(static_cast<int>(i), static_cast<int>(i) + 1, labels[i], labels[i]);
  g.set_final(static_cast<int>(labels.size()), 0.0);
  return g;
}

// ---------------------------------------------------------------------------
// Composition

/// Weighted composition matching A's output labels to B's input labels.
///
/// Epsilons use the sequencing filter: a state remembers whether B has
/// moved alone since the last matched label; while it has, A may not move
/// alone. This keeps exactly one interleaving of A-side output epsilons and
/// B-side input epsilons. The result is trimmed.
inline Fsa compose_static(const Fsa& a, const Fsa& b) {
  if (a.out_alphabet() != b.in_alphabet())
    throw std::invalid_argument("alphabet mismatch in composition");
  Fsa out(a.in_alphabet(), b.out_alphabet());
  if (a.num_states() == 0 || b.num_states() == 0) return out;

  using Key = std::tuple<int, int, int>;
  std::map<Key, int> ids;
  std::deque<Key> queue;
  auto id_of = [&](int sa, int sb, int f) {
    auto [it, inserted] = ids.try_emplace({sa, sb, f}, 0);
    if (inserted) {
      it->second = out.add_state();
      queue.push_back(it->first);
    }
    return it->second;
  };
  out.set_start(id_of(a.start(), b.start(), 0));

  // B arcs grouped by input label for matching.
  std::vector<std::map<int, std::vector<int>>> b_by_label(b.num_states());
  for (int i = 0; i < b.num_arcs(); ++i) b_by_label[b.arc(i).src][b.arc(i).ilabel].push_back(i);

  while (!queue.empty()) {
    auto [sa, sb, f] = queue.front();
    queue.pop_front();
    const int src = ids.at({sa, sb, f});
    if (a.is_final(sa) && b.is_final(sb))
      out.set_final(src, a.final_weight(sa) + b.final_weight(sb));
    for (int ai : a.arcs_from(sa)) {
      const Arc& x = a.arc(ai);
      if (x.olabel == kEpsilon) {
        if (f == 0) out.add_arc(src, id_of(x.dst, sb, 0), x.ilabel, kEpsilon, x.weight);
        continue;
      }
      auto it = b_by_label[sb].find(x.olabel);
      if (it == b_by_label[sb].end()) continue;
      for (int bi : it->second) {
        const Arc& y = b.arc(bi);
        out.add_arc(src, id_of(x.dst, y.dst, 0), x.ilabel, y.olabel, x.weight + y.weight);
      }
    }
    auto eps = b_by_label[sb].find(kEpsilon);
    if (eps != b_by_label[sb].end())
      for (int bi : eps->second) {
        const Arc& y = b.arc(bi);
        out.add_arc(src, id_of(sa, y.dst, 1), kEpsilon, y.olabel, y.weight);
      }
  }
  return trim(out);
}

// ---------------------------------------------------------------------------
// Forward-backward and Viterbi over frame scores

namespace detail {

/// States ordered so that every epsilon-input arc goes forward.
inline std::vector<int> epsilon_order(const Fsa& g) {
  std::vector<int> indeg(g.num_states(), 0);
  for (const Arc& a : g.arcs())
    if (a.ilabel == kEpsilon) ++indeg[a.dst];
  std::vector<int> order, stack;
  for (int s = g.num_states() - 1; s >= 0; --s)
    if (indeg[s] == 0) stack.push_back(s);
  while (!stack.empty()) {
    int s = stack.back();
    stack.pop_back();
    order.push_back(s);
    for (int ai : g.arcs_from(s)) {
      const Arc& a = g.arc(ai);
      if (a.ilabel == kEpsilon && --indeg[a.dst] == 0) stack.push_back(a.dst);
    }
  }
  if (static_cast<int>(order.size()) != g.num_states())
    throw std::invalid_argument("epsilon-input arcs form a cycle");
  return order;
}

inline void check_scores(const Fsa& g, const Matrix& scores) {
  for (const Arc& a : g.arcs())
    if (a.ilabel != kEpsilon && a.ilabel >= scores.cols())
      throw std::out_of_range("arc input label outside the frame scores");
}

}  // namespace detail

struct FsaPosteriors {
  double log_z = kLogZero;
  /// num_arcs x T'; entry (a, t) is the posterior that frame t is consumed
  /// by emitting arc a. Epsilon arcs have zero rows.
  Matrix arc_occupancy;
  /// T' x S; arc occupancies summed by input label.
  Matrix label_occupancy;
};

/// Log-semiring sum over every start-to-final path with exactly T' emitting
/// arcs. No path gives log_z = -inf and zero occupancies.
inline FsaPosteriors fsa_forward_backward(const Fsa& g, const Matrix& scores) {
  const int frames = static_cast<int>(scores.rows());
  FsaPosteriors post;
  post.arc_occupancy = Matrix::Zero(g.num_arcs(), frames);
  post.label_occupancy = Matrix::Zero(frames, scores.cols());
  if (g.num_states() == 0) return post;
  detail::check_scores(g, scores);
  const auto order = detail::epsilon_order(g);
  const int n = g.num_states();

  Matrix alpha = Matrix::Constant(frames + 1, n, kLogZero);
  Matrix beta = Matrix::Constant(frames + 1, n, kLogZero);
  auto close_forward = [&](int t) {
    for (int s : order) {
      if (alpha(t, s) == kLogZero) continue;
      for (int ai : g.arcs_from(s)) {
        const Arc& a = g.arc(ai);
        if (a.ilabel == kEpsilon) alpha(t, a.dst) = log_add(alpha(t, a.dst), alpha(t, s) + a.weight);
      }
    }
  };
  alpha(0, g.start()) = 0.0;
  close_forward(0);
  for (int t = 1; t <= frames; ++t) {
    for (int s = 0; s < n; ++s) {
      if (alpha(t - 1, s) == kLogZero) continue;
      for (int ai : g.arcs_from(s)) {
        const Arc& a = g.arc(ai);
        if (a.ilabel == kEpsilon) continue;
        alpha(t, a.dst) = log_add(alpha(t, a.dst),
                                  alpha(t - 1, s) + a.weight + scores(t - 1, a.ilabel));
      }
    }
    close_forward(t);
  }

  for (int t = frames; t >= 0; --t) {
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const int s = *it;
      double b = t == frames ? g.final_weight(s) : kLogZero;
      for (int ai : g.arcs_from(s)) {
        const Arc& a = g.arc(ai);
        if (a.ilabel == kEpsilon)
          b = log_add(b, a.weight + beta(t, a.dst));
        else if (t < frames)
          b = log_add(b, a.weight + scores(t, a.ilabel) + beta(t + 1, a.dst));
      }
      beta(t, s) = b;
    }
  }

  post.log_z = beta(0, g.start());
  if (post.log_z == kLogZero) return post;
  for (int ai = 0; ai < g.num_arcs(); ++ai) {
    const Arc& a = g.arc(ai);
    if (a.ilabel == kEpsilon) continue;
    for (int t = 0; t < frames; ++t) {
      const double lp = alpha(t, a.src) + a.weight + scores(t, a.ilabel) +
                        beta(t + 1, a.dst) - post.log_z;
      if (lp == kLogZero) continue;
      const double p = std::exp(lp);
      post.arc_occupancy(ai, t) = p;
      post.label_occupancy(t, a.ilabel) += p;
    }
  }
  return post;
}

struct ViterbiPath {
  double score = kLogZero;
  /// Arc indices along the path, including epsilon arcs.
  std::vector<int> arcs;
  /// Input label consumed at each frame.
  std::vector<Label> frame_labels;
  /// Non-epsilon output labels along the path.
  std::vector<int> output;
};

/// Best path in the tropical semiring. Ties go to the lowest arc index at
/// each relaxation. Returns nullopt when no path of T' frames exists.
inline std::optional<ViterbiPath> viterbi_align(const Fsa& g, const Matrix& scores) {
  const int frames = static_cast<int>(scores.rows());
  if (g.num_states() == 0) return std::nullopt;
  detail::check_scores(g, scores);
  const auto order = detail::epsilon_order(g);
  const int n = g.num_states();
  Matrix best = Matrix::Constant(frames + 1, n, kLogZero);
  // Back-pointer: arc index that reached (t, s); -1 for the start.
  std::vector<std::vector<int>> back(frames + 1, std::vector<int>(n, -1));

  auto relax_eps = [&](int t) {
    for (int s : order) {
      if (best(t, s) == kLogZero) continue;
      for (int ai : g.arcs_from(s)) {
        const Arc& a = g.arc(ai);
        if (a.ilabel != kEpsilon) continue;
        const double v = best(t, s) + a.weight;
        if (v > best(t, a.dst)) {
          best(t, a.dst) = v;
          back[t][a.dst] = ai;
        }
      }
    }
  };
  best(0, g.start()) = 0.0;
  relax_eps(0);
  for (int t = 1; t <= frames; ++t) {
    for (int ai = 0; ai < g.num_arcs(); ++ai) {
      const Arc& a = g.arc(ai);
      if (a.ilabel == kEpsilon || best(t - 1, a.src) == kLogZero) continue;
      const double v = best(t - 1, a.src) + a.weight + scores(t - 1, a.ilabel);
      if (v > best(t, a.dst)) {
        best(t, a.dst) = v;
        back[t][a.dst] = ai;
      }
    }
    relax_eps(t);
  }

  int end = -1;
  double end_score = kLogZero;
  for (int s = 0; s < n; ++s) {
    if (!g.is_final(s) || best(frames, s) == kLogZero) continue;
    const double v = best(frames, s) + g.final_weight(s);
    if (v > end_score) {
      end_score = v;
      end = s;
    }
  }
  if (end < 0) return std::nullopt;

  ViterbiPath path;
  path.score = end_score;
  int t = frames, s = end;
  while (back[t][s] >= 0) {
    const int ai = back[t][s];
    const Arc& a = g.arc(ai);
    path.arcs.push_back(ai);
    if (a.ilabel != kEpsilon) {
      path.frame_labels.push_back(a.ilabel);
      --t;
    }
    if (a.olabel != kEpsilon) path.output.push_back(a.olabel);
    s = a.src;
  }
  std::reverse(path.arcs.begin(), path.arcs.end());
  std::reverse(path.frame_labels.begin(), path.frame_labels.end());
  std::reverse(path.output.begin(), path.output.end());
  return path;
}

}  // namespace critlab
