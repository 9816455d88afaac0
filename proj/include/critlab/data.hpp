// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic streaming-ASR corpora with known frame alignments.
//
// A world fixes the vocabulary, the word bigram LM and the acoustic
// embedding of every character. Corpora drawn from the same world differ
// only in utterance seed and noise level, so train/test splits and noise
// tiers share one vocabulary.

#pragma once

#include "critlab/binary_io.hpp"
#include "critlab/numeric.hpp"
#include "critlab/random.hpp"

#include <boost/crc.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace critlab {

struct CorpusSpec {
  int vocab_words = 20;
  int alphabet = 8;  // characters 'a', 'b', ...
  int min_word_chars = 2;
  int max_word_chars = 4;
  int min_unit_frames = 6;
  int max_unit_frames = 10;
  int feature_dim = 16;
  int min_words = 2;
  int max_words = 5;
  std::uint64_t world_seed = 1;

  void validate() const {
    if (vocab_words < 1) throw std::invalid_argument("vocabulary must not be empty");
    if (alphabet < 3 || alphabet > 26) throw std::invalid_argument("alphabet must be in [3, 26]");
    if (min_word_chars < 1 || max_word_chars < min_word_chars)
      throw std::invalid_argument("bad word length range");
    if (min_unit_frames < 1 || max_unit_frames < min_unit_frames)
      throw std::invalid_argument("bad unit duration range");
    if (min_words < 1 || max_words < min_words) throw std::invalid_argument("bad utterance length range");
    if (feature_dim < 1) throw std::invalid_argument("feature_dim must be positive");
  }
};

struct SyntheticWorld {
  CorpusSpec spec;
  std::vector<std::string> words;
  /// (V+1) x V transition matrix; row 0 is the sentence start, row w+1
  /// follows word w. A word never follows one ending in its first letter.
  Matrix word_lm;
  /// alphabet x F unit embeddings.
  Matrix embeddings;

  int num_words() const { return static_cast<int>(words.size()); }
  /// Grapheme label of character c (labels start at 1).
  Label grapheme(char c) const { return static_cast<Label>(c - 'a' + 1); }
};

inline SyntheticWorld build_world(const CorpusSpec& spec) {
  spec.validate();
  SyntheticWorld w;
  w.spec = spec;
  Rng rng(derive_seed(spec.world_seed, 0));
  std::uniform_int_distribution<int> length(spec.min_word_chars, spec.max_word_chars);
  std::uniform_int_distribution<int> letter(0, spec.alphabet - 1);
  std::set<std::string> seen;
  for (int attempt = 0; static_cast<int>(w.words.size()) < spec.vocab_words; ++attempt) {
    if (attempt > 100000) throw std::invalid_argument("cannot draw enough distinct words");
    std::string s;
    const int n = length(rng);
    while (static_cast<int>(s.size()) < n) {
      const char c = static_cast<char>('a' + letter(rng));
      if (s.empty() || s.back() != c) s.push_back(c);
    }
    if (seen.insert(s).second) w.words.push_back(s);
  }

  const int v = spec.vocab_words;
  w.word_lm = Matrix::Zero(v + 1, v);
  std::exponential_distribution<double> gamma1(1.0);
  for (int h = 0; h <= v; ++h) {
    for (int j = 0; j < v; ++j) {
      const double weight = gamma1(rng);
      if (h > 0 && w.words[h - 1].back() == w.words[j].front()) continue;
      w.word_lm(h, j) = weight;
    }
    const double total = w.word_lm.row(h).sum();
    if (total <= 0.0) throw std::invalid_argument("a word has no admissible successor");
    w.word_lm.row(h) /= total;
  }

  w.embeddings.resize(spec.alphabet, spec.feature_dim);
  fill_normal(w.embeddings, rng, 1.0);
  return w;
}

struct CorpusItem {
  std::string id;
  Matrix features;             // T x F
  std::vector<int> words;      // word indices into the world vocabulary
  std::string transcript;      // space-separated words
  LabelSequence units;         // graphemes
  std::vector<Label> alignment;  // per-frame grapheme labels
  double duration_s = 0.0;
};

inline std::string join_words(const SyntheticWorld& w, const std::vector<int>& ids) {
  std::string s;
  for (int id : ids) {
    if (!s.empty()) s += ' ';
    s += w.words.at(id);
  }
  return s;
}

/// Graphemes of a transcript, spaces dropped.
inline LabelSequence grapheme_units(const SyntheticWorld& w, const std::string& transcript) {
  LabelSequence y;
  for (char c : transcript) {
    if (c == ' ') continue;
    if (c < 'a' || c >= 'a' + w.spec.alphabet) throw std::invalid_argument(std::string("unencodable character: ") + c);
    y.push_back(w.grapheme(c));
  }
  return y;
}

inline LabelInventory grapheme_inventory(const SyntheticWorld& w) {
  LabelInventory inv;
  for (int i = 0; i < w.spec.alphabet; ++i) inv.add(std::string(1, static_cast<char>('a' + i)));
  return inv;
}

/// Utterance `index` of a corpus; depends only on (world, noise, seed, index).
inline CorpusItem generate_item(const SyntheticWorld& w, double noise, std::uint64_t seed,
                                std::size_t index, const std::string& prefix = "utt") {
  const auto& spec = w.spec;
  Rng rng(derive_seed(seed, index));
  std::uniform_int_distribution<int> count(spec.min_words, spec.max_words);
  std::uniform_int_distribution<int> frames(spec.min_unit_frames, spec.max_unit_frames);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CorpusItem item;
  item.id = prefix + "-" + std::to_string(index);
  const int n = count(rng);
  int history = 0;
  for (int i = 0; i < n; ++i) {
    std::discrete_distribution<int> next(w.word_lm.row(history).begin(), w.word_lm.row(history).end());
    const int word = next(rng);
    item.words.push_back(word);
    history = word + 1;
  }
  item.transcript = join_words(w, item.words);
  item.units = grapheme_units(w, item.transcript);
  for (Label u : item.units) item.alignment.insert(item.alignment.end(), frames(rng), u);
  const auto t = static_cast<Eigen::Index>(item.alignment.size());
  item.features.resize(t, spec.feature_dim);
  for (Eigen::Index i = 0; i < t; ++i) {
    item.features.row(i) = w.embeddings.row(item.alignment[i] - 1);
    if (noise > 0.0)
      for (int f = 0; f < spec.feature_dim; ++f) item.features(i, f) += noise * gauss(rng);
  }
  item.duration_s = static_cast<double>(t) * 0.01;
  return item;
}

inline std::vector<CorpusItem> generate_corpus(const SyntheticWorld& w, std::size_t count,
                                               double noise, std::uint64_t seed,
                                               const std::string& prefix = "utt") {
  if (noise < 0.0) throw std::invalid_argument("noise must be >= 0");
  std::vector<CorpusItem> items;
  items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) items.push_back(generate_item(w, noise, seed, i, prefix));
  return items;
}

// ---------------------------------------------------------------------------
// Persistence
//
// <dir>/manifest.jsonl holds one JSON object per utterance: id, duration,
// transcript, features (path relative to dir), words, alignment.
// Feature files: int32 T, int32 F, then T*F float64 row-major, little-endian.

inline void write_features(std::ostream& os, const Matrix& m) {
  io::write_i32(os, static_cast<std::int32_t>(m.rows()));
  io::write_i32(os, static_cast<std::int32_t>(m.cols()));
  io::write_tensor(os, m);
}

inline Matrix read_features(std::istream& is) {
  const int t = io::read_i32(is), f = io::read_i32(is);
  if (t < 0 || f < 0) throw std::runtime_error("corrupt feature header");
  Matrix m(t, f);
  io::read_tensor(is, m);
  return m;
}

inline nlohmann::json manifest_record(const CorpusItem& item) {
  return {{"id", item.id},
          {"duration", item.duration_s},
          {"transcript", item.transcript},
          {"features", "feats/" + item.id + ".bin"},
          {"words", item.words},
          {"alignment", item.alignment}};
}

inline void write_corpus(const std::filesystem::path& dir, const std::vector<CorpusItem>& items) {
  std::filesystem::create_directories(dir / "feats");
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.jsonl").string());
  for (const auto& item : items) {
    const auto rec = manifest_record(item);
    manifest << rec.dump() << '\n';
    std::ofstream feats(dir / rec["features"].get<std::string>(), std::ios::binary);
    write_features(feats, item.features);
    if (!feats) throw std::runtime_error("cannot write features for " + item.id);
  }
}

inline std::vector<CorpusItem> read_corpus(const std::filesystem::path& dir, const SyntheticWorld& w) {
  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("cannot read " + (dir / "manifest.jsonl").string());
  std::vector<CorpusItem> items;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    CorpusItem item;
    item.id = rec.at("id").get<std::string>();
    item.duration_s = rec.at("duration").get<double>();
    item.transcript = rec.at("transcript").get<std::string>();
    item.words = rec.at("words").get<std::vector<int>>();
    item.alignment = rec.at("alignment").get<std::vector<Label>>();
    item.units = grapheme_units(w, item.transcript);
    std::ifstream feats(dir / rec.at("features").get<std::string>(), std::ios::binary);
    if (!feats) throw std::runtime_error("missing features for " + item.id);
    item.features = read_features(feats);
    items.push_back(std::move(item));
  }
  return items;
}

/// CRC-32 of the serialized corpus (manifest records and feature bytes).
inline std::uint32_t corpus_checksum(const std::vector<CorpusItem>& items) {
  boost::crc_32_type crc;
  for (const auto& item : items) {
    std::ostringstream os;
    os << manifest_record(item).dump() << '\n';
    write_features(os, item.features);
    const std::string bytes = os.str();
    crc.process_bytes(bytes.data(), bytes.size());
  }
  return crc.checksum();
}

}  // namespace critlab
