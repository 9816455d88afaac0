// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Modeling units: pair-merge (BPE) wordpieces with an end-of-word marker,
// or plain graphemes.

#pragma once

#include "critlab/numeric.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace critlab {

inline constexpr const char* kEndOfWord = "</w>";

enum class UnitMode { kWordpiece, kGrapheme };

inline std::vector<std::string> split_words(const std::string& transcript) {
  std::istringstream is(transcript);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

class UnitModel {
 public:
  using Merge = std::pair<std::string, std::string>;

  UnitModel() = default;

  /// One unit per character, no word-boundary information.
  static UnitModel graphemes(const std::vector<char>& chars) {
    UnitModel m;
    m.mode_ = UnitMode::kGrapheme;
    for (char c : chars) m.base_.emplace_back(1, c);
    std::sort(m.base_.begin(), m.base_.end());
    m.base_.erase(std::unique(m.base_.begin(), m.base_.end()), m.base_.end());
    m.rebuild();
    return m;
  }

  static UnitModel wordpieces(std::vector<std::string> base, std::vector<Merge> merges) {
    UnitModel m;
    m.mode_ = UnitMode::kWordpiece;
    m.base_ = std::move(base);
    m.merges_ = std::move(merges);
    m.rebuild();
    return m;
  }

  UnitMode mode() const { return mode_; }
  const std::vector<std::string>& base() const { return base_; }
  const std::vector<Merge>& merges() const { return merges_; }
  const LabelInventory& inventory() const { return inventory_; }

  /// Initial symbols of a word: its characters, the last one carrying the
  /// end-of-word marker in wordpiece mode.
  std::vector<std::string> initial_symbols(const std::string& word) const {
    std::vector<std::string> s;
    for (char c : word) s.emplace_back(1, c);
    if (mode_ == UnitMode::kWordpiece && !s.empty()) s.back() += kEndOfWord;
    return s;
  }

  std::vector<std::string> segment_word(const std::string& word) const {
    auto s = initial_symbols(word);
    for (const auto& [a, b] : merges_) apply_merge(s, a, b);
    return s;
  }

  LabelSequence encode_word(const std::string& word) const {
    LabelSequence y;
    for (const auto& piece : segment_word(word)) {
      if (!inventory_.contains(piece))
        throw std::invalid_argument("unencodable unit '" + piece + "' in word '" + word + "'");
      y.push_back(inventory_.index_of(piece));
    }
    return y;
  }

  LabelSequence encode(const std::string& transcript) const {
    LabelSequence y;
    for (const auto& w : split_words(transcript)) {
      const auto piece = encode_word(w);
      y.insert(y.end(), piece.begin(), piece.end());
    }
    return y;
  }

  /// Wordpieces are joined and split at end-of-word markers; graphemes are
  /// concatenated.
  std::string decode(std::span<const Label> y) const {
    std::string out;
    const std::string marker = kEndOfWord;
    for (Label l : y) {
      std::string piece = inventory_.symbol(l);
      if (mode_ == UnitMode::kWordpiece && piece.size() >= marker.size() &&
          piece.compare(piece.size() - marker.size(), marker.size(), marker) == 0) {
        piece.resize(piece.size() - marker.size());
        out += piece;
        out += ' ';
      } else {
        out += piece;
      }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& [a, b] : merges_) merges.push_back({a, b});
    return {{"mode", mode_ == UnitMode::kWordpiece ? "wordpiece" : "grapheme"},
            {"base", base_},
            {"merges", merges}};
  }

  static UnitModel from_json(const nlohmann::json& j) {
    const auto mode = j.at("mode").get<std::string>();
    auto base = j.at("base").get<std::vector<std::string>>();
    if (mode == "grapheme") {
      std::vector<char> chars;
      for (const auto& b : base) {
        if (b.size() != 1) throw std::invalid_argument("grapheme units must be single characters");
        chars.push_back(b[0]);
      }
      return graphemes(chars);
    }
    if (mode != "wordpiece") throw std::invalid_argument("unknown unit mode: " + mode);
    std::vector<Merge> merges;
    for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
    return wordpieces(std::move(base), std::move(merges));
  }

  static void apply_merge(std::vector<std::string>& s, const std::string& a, const std::string& b) {
    std::vector<std::string> out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i + 1 < s.size() && s[i] == a && s[i + 1] == b) {
        out.push_back(a + b);
        ++i;
      } else {
        out.push_back(s[i]);
      }
    }
    s = std::move(out);
  }

 private:
  void rebuild() {
    inventory_ = LabelInventory();
    for (const auto& b : base_) inventory_.add(b);
    for (const auto& [a, b] : merges_)
      if (!inventory_.contains(a + b)) inventory_.add(a + b);
  }

  UnitMode mode_ = UnitMode::kGrapheme;
  std::vector<std::string> base_;
  std::vector<Merge> merges_;
  LabelInventory inventory_;
};

/// Greedy pair-merge training over whitespace-delimited words. The most
/// frequent adjacent pair is merged first, ties going to the
/// lexicographically smallest pair; training stops when the inventory
/// reaches `target_vocab_size` units or no pair is left.
inline UnitModel train_wordpieces(const std::vector<std::string>& transcripts, int target_vocab_size) {
  std::map<std::string, long long> word_counts;
  for (const auto& t : transcripts)
    for (const auto& w : split_words(t)) ++word_counts[w];

  const UnitModel empty = UnitModel::wordpieces({}, {});
  std::vector<std::pair<std::vector<std::string>, long long>> types;
  std::set<std::string> base;
  for (const auto& [w, n] : word_counts) {
    types.emplace_back(empty.initial_symbols(w), n);
    base.insert(types.back().first.begin(), types.back().first.end());
  }
  if (target_vocab_size < static_cast<int>(base.size()))
    throw std::invalid_argument("target vocabulary smaller than the base character set");

  std::set<std::string> pieces = base;
  std::vector<UnitModel::Merge> merges;
  while (static_cast<int>(pieces.size()) < target_vocab_size) {
    std::map<UnitModel::Merge, long long> pairs;
    for (const auto& [s, n] : types)
      for (std::size_t i = 0; i + 1 < s.size(); ++i) pairs[{s[i], s[i + 1]}] += n;
    if (pairs.empty()) break;
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it)
      if (it->second > best->second) best = it;  // map order keeps the smallest pair on ties
    const auto merge = best->first;
    merges.push_back(merge);
    pieces.insert(merge.first + merge.second);
    for (auto& [s, n] : types) UnitModel::apply_merge(s, merge.first, merge.second);
  }
  return UnitModel::wordpieces({base.begin(), base.end()}, std::move(merges));
}

}  // namespace critlab
