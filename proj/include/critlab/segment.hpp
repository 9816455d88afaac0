// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Splitting long utterances at word boundaries taken from a frame
// alignment.

#pragma once

#include "critlab/data.hpp"
#include "critlab/wordpiece.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace critlab {

struct Segment {
  CorpusItem item;
  /// A single word longer than the limit, kept whole.
  bool unsplittable = false;
};

/// Exclusive end frame of every word, from the runs of a grapheme
/// alignment (adjacent characters always differ, so one run per grapheme).
inline std::vector<int> word_end_frames(const CorpusItem& item) {
  std::vector<int> run_end;
  for (std::size_t t = 0; t < item.alignment.size(); ++t)
    if (t + 1 == item.alignment.size() || item.alignment[t + 1] != item.alignment[t])
      run_end.push_back(static_cast<int>(t + 1));
  if (run_end.size() != item.units.size())
    throw std::invalid_argument("alignment of " + item.id + " does not match its transcript");
  std::vector<int> ends;
  std::size_t chars = 0;
  for (const auto& w : split_words(item.transcript)) {
    chars += w.size();
    ends.push_back(run_end.at(chars - 1));
  }
  return ends;
}

inline CorpusItem slice_item(const CorpusItem& item, int first_word, int last_word, int begin, int end,
                             int index) {
  CorpusItem s;
  s.id = item.id + "/" + std::to_string(index);
  s.features = item.features.middleRows(begin, end - begin);
  s.words.assign(item.words.begin() + first_word, item.words.begin() + last_word);
  const auto words = split_words(item.transcript);
  for (int w = first_word; w < last_word; ++w) {
    if (!s.transcript.empty()) s.transcript += ' ';
    s.transcript += words[w];
  }
  std::size_t skip = 0, take = 0;
  for (int w = 0; w < last_word; ++w) (w < first_word ? skip : take) += words[w].size();
  s.units.assign(item.units.begin() + skip, item.units.begin() + skip + take);
  s.alignment.assign(item.alignment.begin() + begin, item.alignment.begin() + end);
  s.duration_s = (end - begin) * 0.01;
  return s;
}

/// Greedy left-to-right packing of whole words into segments of at most
/// `max_duration_s`. Items that already fit are returned unchanged.
inline std::vector<Segment> segment_item(const CorpusItem& item, double max_duration_s) {
  if (max_duration_s <= 0.0) throw std::invalid_argument("max duration must be positive");
  const int max_frames = static_cast<int>(std::floor(max_duration_s * 100.0 + 1e-9));
  const int frames = static_cast<int>(item.features.rows());
  if (frames <= max_frames) return {Segment{item, false}};
  const auto ends = word_end_frames(item);
  std::vector<Segment> out;
  int first = 0, begin = 0;
  const int n = static_cast<int>(ends.size());
  while (first < n) {
    int last = first;
    while (last < n && ends[last] - begin <= max_frames) ++last;
    const bool unsplittable = last == first;
    if (unsplittable) last = first + 1;
    const int end = last == n ? frames : ends[last - 1];
    out.push_back({slice_item(item, first, last, begin, end, static_cast<int>(out.size())), unsplittable});
    first = last;
    begin = end;
  }
  return out;
}

inline std::vector<Segment> segment_corpus(const std::vector<CorpusItem>& items, double max_duration_s) {
  std::vector<Segment> out;
  for (const auto& item : items) {
    auto s = segment_item(item, max_duration_s);
    out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return out;
}

}  // namespace critlab
