// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end comparison pipeline: corpus, units, training, decoding and
// reporting for each training criterion, driven by an INI config.

#pragma once

#include "critlab/augment.hpp"
#include "critlab/binary_io.hpp"
#include "critlab/data.hpp"
#include "critlab/decoder.hpp"
#include "critlab/encoder.hpp"
#include "critlab/lfmmi.hpp"
#include "critlab/metrics.hpp"
#include "critlab/report.hpp"
#include "critlab/rnnt.hpp"
#include "critlab/segment.hpp"
#include "critlab/train.hpp"
#include "critlab/wordpiece.hpp"

#include <boost/crc.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include <array>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace critlab {

/// Error raised by a pipeline stage; what() starts with "[stage]".
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <typename F>
auto run_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline constexpr std::array<const char*, 3> kTierNames = {"clean", "noisy", "extreme"};

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string language = "synthetic";
  std::vector<Criterion> criteria = {Criterion::kLfmmi, Criterion::kCtc, Criterion::kRnnt};

  // [corpus]
  CorpusSpec corpus;
  std::uint64_t data_seed = 1;
  std::size_t train_utterances = 200;
  std::size_t valid_utterances = 50;
  std::size_t test_utterances = 50;
  double train_noise = 0.1;
  double valid_noise = 2.5;
  std::array<double, 3> test_noise = {2.0, 2.5, 3.0};
  double max_segment_s = 10.0;

  // [units]
  int wordpiece_vocab = 24;
  double lm_smoothing = 0.5;

  // [model]
  int hidden = 64;
  int rnnt_encoder_dim = 32;
  int rnnt_embed_dim = 16;
  int rnnt_pred_hidden = 32;
  int rnnt_join_hidden = 32;

  // [train]
  std::uint64_t train_seed = 1;
  int ce_epochs = 20;
  int epochs = 200;
  std::array<int, 3> criterion_epochs = {40, 400, 200};  // lfmmi, ctc, rnnt; -1 = `epochs`
  int batch_size = 4;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  int threads = 1;
  std::vector<Criterion> ce_pretrain = {Criterion::kLfmmi, Criterion::kRnnt};
  int numerator_tolerance = 1;
  std::string augment_lfmmi = "sm";
  std::string augment_ctc = "sm";
  std::string augment_rnnt = "ld";

  // [decode]
  std::vector<int> beams = {1, 4, 16};
  double graph_margin = 15.0;
  int max_symbols_per_frame = 4;
  int chunk_frames = 0;  // 0 = the criterion's training chunk
  bool int8 = true;

  // [report]
  std::string output_prefix;

  bool pretrains(Criterion c) const {
    return std::find(ce_pretrain.begin(), ce_pretrain.end(), c) != ce_pretrain.end();
  }

  int epochs_for(Criterion c) const {
    const int e = criterion_epochs[static_cast<int>(c)];
    return e < 0 ? epochs : e;
  }

  const std::string& augment_for(Criterion c) const {
    switch (c) {
      case Criterion::kLfmmi: return augment_lfmmi;
      case Criterion::kCtc: return augment_ctc;
      case Criterion::kRnnt: return augment_rnnt;
    }
    return augment_ctc;
  }

  void validate() const {
    corpus.validate();
    if (criteria.empty()) throw std::invalid_argument("no criteria selected");
    if (train_utterances == 0 || valid_utterances == 0 || test_utterances == 0)
      throw std::invalid_argument("every split needs utterances");
    if (beams.empty()) throw std::invalid_argument("no beam candidates");
    for (int b : beams)
      if (b < 1) throw std::invalid_argument("beam candidates must be >= 1");
    if (max_segment_s <= 0.0) throw std::invalid_argument("max_segment_s must be positive");
    if (epochs < 0 || ce_epochs < 0 || batch_size < 1 || threads < 1 ||
        *std::min_element(criterion_epochs.begin(), criterion_epochs.end()) < -1)
      throw std::invalid_argument("bad training schedule");
    for (Criterion c : criteria) AugmentPolicy::preset(augment_for(c)).validate(corpus.feature_dim);
  }
};

namespace detail {

template <typename T>
std::vector<T> parse_list(const std::string& s, const std::function<T(const std::string&)>& conv) {
  std::vector<T> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(conv(item));
  }
  return out;
}

inline std::vector<Criterion> parse_criteria(const std::string& s) {
  return parse_list<Criterion>(s, parse_criterion);
}

inline std::string join_criteria(const std::vector<Criterion>& v) {
  std::string s;
  for (Criterion c : v) s += (s.empty() ? "" : ",") + to_string(c);
  return s;
}

}  // namespace detail

/// Reads an INI document; absent keys keep their defaults, unknown keys
/// are rejected.
inline ExperimentConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  pt::read_ini(is, tree);
  ExperimentConfig c;
  const std::map<std::string, std::set<std::string>> known = {
      {"experiment", {"language", "criteria"}},
      {"corpus",
       {"seed", "world_seed", "vocab_words", "alphabet", "feature_dim", "min_words", "max_words",
        "min_word_chars", "max_word_chars", "min_unit_frames", "max_unit_frames",
        "train_utterances", "valid_utterances", "test_utterances", "train_noise", "valid_noise",
        "clean_noise", "noisy_noise", "extreme_noise", "max_segment_s"}},
      {"units", {"wordpiece_vocab", "lm_smoothing"}},
      {"model", {"hidden", "rnnt_encoder_dim", "rnnt_embed_dim", "rnnt_pred_hidden", "rnnt_join_hidden"}},
      {"train",
       {"seed", "ce_epochs", "epochs", "lfmmi_epochs", "ctc_epochs", "rnnt_epochs", "batch_size", "learning_rate", "clip_norm", "threads", "ce_pretrain",
        "numerator_tolerance", "augment_lfmmi", "augment_ctc", "augment_rnnt"}},
      {"decode", {"beams", "graph_margin", "max_symbols_per_frame", "chunk_frames", "int8"}},
      {"report", {"output"}}};
  for (const auto& [section, body] : tree) {
    const auto it = known.find(section);
    if (it == known.end()) throw std::invalid_argument("unknown config section [" + section + "]");
    for (const auto& [key, value] : body)
      if (!it->second.count(key)) throw std::invalid_argument("unknown config key " + section + "." + key);
  }
  auto get = [&](const char* path, auto& field) {
    field = tree.get<std::decay_t<decltype(field)>>(path, field);
  };
  get("experiment.language", c.language);
  if (auto s = tree.get_optional<std::string>("experiment.criteria")) c.criteria = detail::parse_criteria(*s);

  get("corpus.seed", c.data_seed);
  get("corpus.world_seed", c.corpus.world_seed);
  get("corpus.vocab_words", c.corpus.vocab_words);
  get("corpus.alphabet", c.corpus.alphabet);
  get("corpus.feature_dim", c.corpus.feature_dim);
  get("corpus.min_words", c.corpus.min_words);
  get("corpus.min_word_chars", c.corpus.min_word_chars);
  get("corpus.max_word_chars", c.corpus.max_word_chars);
  get("corpus.min_unit_frames", c.corpus.min_unit_frames);
  get("corpus.max_unit_frames", c.corpus.max_unit_frames);
  get("corpus.max_words", c.corpus.max_words);
  get("corpus.train_utterances", c.train_utterances);
  get("corpus.valid_utterances", c.valid_utterances);
  get("corpus.test_utterances", c.test_utterances);
  get("corpus.train_noise", c.train_noise);
  get("corpus.valid_noise", c.valid_noise);
  get("corpus.clean_noise", c.test_noise[0]);
  get("corpus.noisy_noise", c.test_noise[1]);
  get("corpus.extreme_noise", c.test_noise[2]);
  get("corpus.max_segment_s", c.max_segment_s);

  get("units.wordpiece_vocab", c.wordpiece_vocab);
  get("units.lm_smoothing", c.lm_smoothing);

  get("model.hidden", c.hidden);
  get("model.rnnt_encoder_dim", c.rnnt_encoder_dim);
  get("model.rnnt_embed_dim", c.rnnt_embed_dim);
  get("model.rnnt_pred_hidden", c.rnnt_pred_hidden);
  get("model.rnnt_join_hidden", c.rnnt_join_hidden);

  get("train.seed", c.train_seed);
  get("train.ce_epochs", c.ce_epochs);
  get("train.epochs", c.epochs);
  get("train.lfmmi_epochs", c.criterion_epochs[0]);
  get("train.ctc_epochs", c.criterion_epochs[1]);
  get("train.rnnt_epochs", c.criterion_epochs[2]);
  get("train.batch_size", c.batch_size);
  get("train.learning_rate", c.learning_rate);
  get("train.clip_norm", c.clip_norm);
  get("train.threads", c.threads);
  if (auto s = tree.get_optional<std::string>("train.ce_pretrain")) c.ce_pretrain = detail::parse_criteria(*s);
  get("train.numerator_tolerance", c.numerator_tolerance);
  get("train.augment_lfmmi", c.augment_lfmmi);
  get("train.augment_ctc", c.augment_ctc);
  get("train.augment_rnnt", c.augment_rnnt);

  if (auto s = tree.get_optional<std::string>("decode.beams"))
    c.beams = detail::parse_list<int>(*s, [](const std::string& x) { return std::stoi(x); });
  get("decode.graph_margin", c.graph_margin);
  get("decode.max_symbols_per_frame", c.max_symbols_per_frame);
  get("decode.chunk_frames", c.chunk_frames);
  get("decode.int8", c.int8);

  get("report.output", c.output_prefix);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config " + path.string());
  return parse_config(is);
}

// ---------------------------------------------------------------------------
// Corpus

struct CorpusBundle {
  SyntheticWorld world;
  std::vector<CorpusItem> train, valid;
  std::array<std::vector<CorpusItem>, 3> test;  // clean, noisy, extreme

  std::uint32_t checksum() const {
    boost::crc_32_type crc;
    for (const auto* split : {&train, &valid, &test[0], &test[1], &test[2]}) {
      const std::uint32_t c = corpus_checksum(*split);
      crc.process_bytes(&c, sizeof c);
    }
    return crc.checksum();
  }
};

/// Every split comes from the same world; the test tiers share one seed,
/// so they hold the same utterances at three noise levels.
inline CorpusBundle make_corpus(const ExperimentConfig& c) {
  CorpusBundle b;
  b.world = build_world(c.corpus);
  b.train = generate_corpus(b.world, c.train_utterances, c.train_noise, derive_seed(c.data_seed, 1), "train");
  b.valid = generate_corpus(b.world, c.valid_utterances, c.valid_noise, derive_seed(c.data_seed, 2), "valid");
  for (int k = 0; k < 3; ++k)
    b.test[k] = generate_corpus(b.world, c.test_utterances, c.test_noise[k], derive_seed(c.data_seed, 3),
                                std::string("test-") + kTierNames[k]);
  return b;
}

inline nlohmann::json spec_to_json(const CorpusSpec& s) {
  return {{"vocab_words", s.vocab_words},     {"alphabet", s.alphabet},
          {"min_word_chars", s.min_word_chars}, {"max_word_chars", s.max_word_chars},
          {"min_unit_frames", s.min_unit_frames}, {"max_unit_frames", s.max_unit_frames},
          {"feature_dim", s.feature_dim},     {"min_words", s.min_words},
          {"max_words", s.max_words},         {"world_seed", s.world_seed}};
}

inline CorpusSpec spec_from_json(const nlohmann::json& j) {
  CorpusSpec s;
  j.at("vocab_words").get_to(s.vocab_words);
  j.at("alphabet").get_to(s.alphabet);
  j.at("min_word_chars").get_to(s.min_word_chars);
  j.at("max_word_chars").get_to(s.max_word_chars);
  j.at("min_unit_frames").get_to(s.min_unit_frames);
  j.at("max_unit_frames").get_to(s.max_unit_frames);
  j.at("feature_dim").get_to(s.feature_dim);
  j.at("min_words").get_to(s.min_words);
  j.at("max_words").get_to(s.max_words);
  j.at("world_seed").get_to(s.world_seed);
  return s;
}

/// Layout: world.json plus one corpus directory per split.
inline void save_corpus(const std::filesystem::path& dir, const CorpusBundle& b) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "world.json") << spec_to_json(b.world.spec).dump(2) << '\n';
  write_corpus(dir / "train", b.train);
  write_corpus(dir / "valid", b.valid);
  for (int k = 0; k < 3; ++k) write_corpus(dir / (std::string("test-") + kTierNames[k]), b.test[k]);
}

inline CorpusBundle load_corpus(const std::filesystem::path& dir) {
  std::ifstream is(dir / "world.json");
  if (!is) throw std::runtime_error("no world.json in " + dir.string());
  CorpusBundle b;
  b.world = build_world(spec_from_json(nlohmann::json::parse(is)));
  b.train = read_corpus(dir / "train", b.world);
  b.valid = read_corpus(dir / "valid", b.world);
  for (int k = 0; k < 3; ++k) b.test[k] = read_corpus(dir / (std::string("test-") + kTierNames[k]), b.world);
  return b;
}

// ---------------------------------------------------------------------------
// Units

struct UnitSet {
  UnitModel graphemes;
  UnitModel wordpieces;

  const UnitModel& for_criterion(Criterion c) const {
    return c == Criterion::kLfmmi ? graphemes : wordpieces;
  }

  nlohmann::json to_json() const { return {{"grapheme", graphemes.to_json()}, {"wordpiece", wordpieces.to_json()}}; }

  static UnitSet from_json(const nlohmann::json& j) {
    return {UnitModel::from_json(j.at("grapheme")), UnitModel::from_json(j.at("wordpiece"))};
  }

  std::uint32_t checksum() const {
    const std::string s = to_json().dump();
    boost::crc_32_type crc;
    crc.process_bytes(s.data(), s.size());
    return crc.checksum();
  }
};

inline UnitSet train_units(const ExperimentConfig& c, const CorpusBundle& b) {
  std::vector<char> chars;
  for (int i = 0; i < b.world.spec.alphabet; ++i) chars.push_back(static_cast<char>('a' + i));
  std::vector<std::string> transcripts;
  for (const auto& item : b.train) transcripts.push_back(item.transcript);
  return {UnitModel::graphemes(chars), train_wordpieces(transcripts, c.wordpiece_vocab)};
}

// ---------------------------------------------------------------------------
// Models and checkpoints

struct AsrModel {
  Criterion criterion = Criterion::kCtc;
  EncoderParams encoder;
  std::optional<RnntDecoderModel> decoder;
};

inline void save_decoder(std::ostream& os, const RnntDecoderModel& m) {
  io::write_i32(os, io::magic("CLDE"));
  const auto& c = m.config;
  for (int v : {c.num_units, c.enc_dim, c.embed_dim, c.pred_hidden, c.join_hidden}) io::write_i32(os, v);
  m.visit_tensors([&](const auto& t) { io::write_tensor(os, t); });
  if (!os) throw std::runtime_error("decoder checkpoint write failed");
}

inline RnntDecoderModel load_decoder(std::istream& is) {
  io::expect_magic(is, "CLDE");
  RnntDecoderConfig c;
  for (int* v : {&c.num_units, &c.enc_dim, &c.embed_dim, &c.pred_hidden, &c.join_hidden}) *v = io::read_i32(is);
  if (!is || c.num_units < 2 || c.enc_dim < 1 || c.embed_dim < 1 || c.pred_hidden < 1 || c.join_hidden < 1 ||
      c.num_units > (1 << 20))
    throw std::runtime_error("corrupt decoder header");
  RnntDecoderModel m = RnntDecoderModel::zeros(c);
  m.visit_tensors([&](auto& t) { io::read_tensor(is, t); });
  if (!is) throw std::runtime_error("truncated decoder checkpoint");
  return m;
}

/// Layout: meta.json, encoder.bin and, for transducers, decoder.bin.
inline void save_model(const std::filesystem::path& dir, const AsrModel& m, bool int8 = false) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "meta.json") << nlohmann::json{{"criterion", to_string(m.criterion)}, {"int8", int8}}.dump(2)
                                   << '\n';
  std::ofstream enc(dir / "encoder.bin", std::ios::binary);
  if (int8) {
    save_encoder(enc, quantize_int8(m.encoder));
  } else {
    save_encoder(enc, m.encoder);
  }
  if (!enc) throw std::runtime_error("cannot write " + (dir / "encoder.bin").string());
  if (m.decoder) {
    std::ofstream dec(dir / "decoder.bin", std::ios::binary);
    save_decoder(dec, *m.decoder);
  }
}

inline AsrModel load_model(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "meta.json");
  if (!meta) throw std::runtime_error("no meta.json in " + dir.string());
  AsrModel m;
  m.criterion = parse_criterion(nlohmann::json::parse(meta).at("criterion").get<std::string>());
  std::ifstream enc(dir / "encoder.bin", std::ios::binary);
  if (!enc) throw std::runtime_error("no encoder.bin in " + dir.string());
  m.encoder = load_encoder(enc);
  if (m.criterion == Criterion::kRnnt) {
    std::ifstream dec(dir / "decoder.bin", std::ios::binary);
    if (!dec) throw std::runtime_error("no decoder.bin in " + dir.string());
    m.decoder = load_decoder(dec);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Training

struct TrainingReport {
  std::size_t segments = 0;
  std::size_t unsplittable = 0;
  TrainLog ce;
  TrainLog main;
  double cpu_seconds = 0.0;
};

namespace detail {

inline double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

inline TrainOptions train_options(const ExperimentConfig& c, int epochs, const AugmentPolicy& augment,
                                  std::uint64_t salt) {
  TrainOptions o;
  o.epochs = epochs;
  o.batch_size = c.batch_size;
  o.adam.learning_rate = c.learning_rate;
  o.adam.clip_norm = c.clip_norm;
  o.seed = derive_seed(c.train_seed, salt);
  o.augment = augment;
  o.threads = c.threads;
  return o;
}

inline EncoderConfig encoder_config(const ExperimentConfig& c, Criterion crit, int output_dim) {
  EncoderConfig e = make_strided_config(crit, c.corpus.feature_dim, output_dim);
  e.hidden = c.hidden;
  return e;
}

inline Fsa unit_bigram(const std::vector<LabelSequence>& seqs, int dim, double k) {
  return estimate_bigram_lm(seqs, dim, k);
}

}  // namespace detail

/// Word-level grammar over labels 1..V (word w has label w + 1).
inline Fsa word_grammar(const CorpusBundle& b, double smoothing) {
  std::vector<LabelSequence> seqs;
  for (const auto& item : b.train) {
    LabelSequence s;
    for (int w : item.words) s.push_back(w + 1);
    seqs.push_back(std::move(s));
  }
  return estimate_bigram_lm(seqs, b.world.num_words() + 1, smoothing);
}

/// Grapheme-level denominator graph: 1-state HMM topology composed with a
/// grapheme bigram of the training transcripts.
inline Fsa lfmmi_denominator(const CorpusBundle& b, const UnitSet& units, double smoothing) {
  const int dim = units.graphemes.inventory().size();
  std::vector<LabelSequence> seqs;
  for (const auto& item : b.train) seqs.push_back(units.graphemes.encode(item.transcript));
  return build_denominator_graph(build_topology_fst(dim, TopologyMode::kHmm1),
                                 detail::unit_bigram(seqs, dim, smoothing));
}

/// Trains one criterion on the segmented training split. Optional frame
/// cross-entropy pretraining uses the gold grapheme alignments on an
/// encoder of the same shape; its recurrent and mixing layers seed the
/// final model.
inline AsrModel train_model(const ExperimentConfig& c, Criterion crit, const CorpusBundle& b, const UnitSet& units,
                            TrainingReport* report = nullptr) {
  TrainingReport local;
  TrainingReport& rep = report ? *report : local;
  const double cpu0 = detail::cpu_seconds();
  const auto segments = run_stage("segment", [&] { return segment_corpus(b.train, c.max_segment_s); });
  rep.segments = segments.size();
  std::vector<Matrix> features;
  for (const auto& s : segments) {
    rep.unsplittable += s.unsplittable;
    features.push_back(s.item.features);
  }
  const UnitModel& unit_model = units.for_criterion(crit);
  const int dim = unit_model.inventory().size();
  const int graphemes = units.graphemes.inventory().size();
  const AugmentPolicy augment = AugmentPolicy::preset(c.augment_for(crit));

  AsrModel m;
  m.criterion = crit;
  const int out_dim = crit == Criterion::kRnnt ? c.rnnt_encoder_dim : dim;
  m.encoder = EncoderParams::init(detail::encoder_config(c, crit, out_dim), derive_seed(c.train_seed, 10));

  if (c.pretrains(crit) && c.ce_epochs > 0) {
    run_stage("pretrain", [&] {
      EncoderParams ce = EncoderParams::init(detail::encoder_config(c, crit, graphemes), derive_seed(c.train_seed, 10));
      const int stride = ce.config.stride();
      std::vector<std::vector<Label>> targets;
      for (const auto& s : segments) targets.push_back(frame_targets(s.item.alignment, stride));
      rep.ce = train_ce(ce, features, targets, detail::train_options(c, c.ce_epochs, augment, 11));
      m.encoder.layers = ce.layers;
      m.encoder.mix = ce.mix;
      m.encoder.mix_bias = ce.mix_bias;
      if (ce.config.output_dim == out_dim) {
        m.encoder.proj = ce.proj;
        m.encoder.proj_bias = ce.proj_bias;
      }
      return 0;
    });
  }

  run_stage("train", [&] {
    const TrainOptions opt = detail::train_options(c, c.epochs_for(crit), augment, 12);
    switch (crit) {
      case Criterion::kCtc: {
        std::vector<LabelSequence> y;
        for (const auto& s : segments) y.push_back(unit_model.encode(s.item.transcript));
        rep.main = train_ctc(m.encoder, features, y, opt);
        break;
      }
      case Criterion::kRnnt: {
        std::vector<LabelSequence> y;
        for (const auto& s : segments) y.push_back(unit_model.encode(s.item.transcript));
        m.decoder = RnntDecoderModel::random(
            {dim, c.rnnt_encoder_dim, c.rnnt_embed_dim, c.rnnt_pred_hidden, c.rnnt_join_hidden},
            derive_seed(c.train_seed, 13));
        rep.main = train_rnnt(m.encoder, *m.decoder, features, y, opt);
        break;
      }
      case Criterion::kLfmmi: {
        const Fsa den = lfmmi_denominator(b, units, c.lm_smoothing);
        const int stride = m.encoder.config.stride();
        std::vector<Fsa> nums;
        for (std::size_t i = 0; i < segments.size(); ++i) {
          const auto& item = segments[i].item;
          // Numerator frame labels: forced alignment under the current
          // model, falling back to the gold alignment when it fails.
          std::vector<Label> labels = frame_targets(item.alignment, stride);
          if (c.pretrains(crit) && c.ce_epochs > 0 && !labels.empty()) {
            const Matrix scores = log_softmax_rows(encoder_forward(m.encoder, features[i]));
            if (auto path = force_align(scores, item.units)) labels = std::move(*path);
          }
          nums.push_back(labels.empty() ? Fsa(dim, dim)
                                        : intersect_with_denominator(
                                              build_numerator_graph(labels, c.numerator_tolerance, dim), den));
        }
        rep.main = train_lfmmi(m.encoder, features, nums, den, opt);
        break;
      }
    }
    return 0;
  });
  rep.cpu_seconds = detail::cpu_seconds() - cpu0;
  return m;
}

// ---------------------------------------------------------------------------
// Recognition

/// Streams features through the encoder in fixed chunks and searches the
/// criterion's output space; returns the word transcript.
class Recognizer {
 public:
  Recognizer(const AsrModel& model, const CorpusBundle& b, const UnitSet& units, const ExperimentConfig& c)
      : model_(model), world_(&b.world), units_(&units.for_criterion(model.criterion)) {
    chunk_ = c.chunk_frames > 0 ? c.chunk_frames : model.encoder.config.chunk_frames;
    margin_ = c.graph_margin;
    max_symbols_ = c.max_symbols_per_frame;
    if (model.criterion == Criterion::kRnnt) {
      if (!model.decoder) throw std::invalid_argument("transducer model without decoder");
      return;
    }
    const int dim = units_->inventory().size();
    std::vector<std::pair<int, LabelSequence>> lexicon;
    for (int w = 0; w < b.world.num_words(); ++w) lexicon.emplace_back(w + 1, units_->encode_word(b.world.words[w]));
    const Fsa l = build_lexicon_fst(lexicon, dim, b.world.num_words() + 1);
    const auto mode = model.criterion == Criterion::kCtc ? TopologyMode::kCtc : TopologyMode::kHmm1;
    hl_ = compose_static(build_topology_fst(dim, mode), l);
    g_ = word_grammar(b, c.lm_smoothing);
  }

  void set_beam(int beam) { beam_ = beam; }
  int beam() const { return beam_; }
  const AsrModel& model() const { return model_; }

  std::string recognize(const Matrix& features) const {
    const Matrix out = encoder_forward_chunked(model_.encoder, features, chunk_);
    if (model_.criterion == Criterion::kRnnt) {
      if (out.rows() == 0) return "";
      const auto hyps = rnnt_beam_search(out, *model_.decoder, {beam_, max_symbols_});
      return hyps.empty() ? "" : units_->decode(hyps.front().labels);
    }
    const Matrix scores = model_.criterion == Criterion::kCtc ? log_softmax_rows(out) : out;
    const DecodeResult r = dynamic_decode(hl_, g_, scores, {beam_, margin_});
    std::vector<int> ids;
    for (int w : r.words) ids.push_back(w - 1);
    return join_words(*world_, ids);
  }

  ErrorCounts evaluate(const std::vector<CorpusItem>& items) const {
    ErrorCounts total;
    for (const auto& item : items) total += error_rate(item.transcript, recognize(item.features));
    return total;
  }

 private:
  AsrModel model_;
  const SyntheticWorld* world_;
  const UnitModel* units_;
  Fsa hl_, g_;
  int chunk_ = 128;
  int beam_ = 4;
  double margin_ = kInf;
  int max_symbols_ = 4;
};

/// Picks the candidate with the lowest WER on `items`; ties go to the
/// smaller beam.
inline int tune_beam(Recognizer& r, const std::vector<CorpusItem>& items, std::vector<int> candidates) {
  std::sort(candidates.begin(), candidates.end());
  int best = candidates.front();
  double best_wer = kInf;
  for (int b : candidates) {
    r.set_beam(b);
    const double wer = r.evaluate(items).rate();
    if (wer < best_wer) {
      best_wer = wer;
      best = b;
    }
  }
  r.set_beam(best);
  return best;
}

inline AsrModel quantized_copy(const AsrModel& m) {
  AsrModel q = m;
  q.encoder = quantize_int8(m.encoder).dequantize();
  return q;
}

// ---------------------------------------------------------------------------
// Experiment

struct CriterionResult {
  Criterion criterion = Criterion::kCtc;
  EvalTriplet wer;       // reported model
  EvalTriplet wer_fp64;  // unquantized encoder
  double rtf = 0.0;
  int beam = 0;
  std::uint32_t corpus_checksum = 0;
  std::uint32_t units_checksum = 0;
  TrainingReport training;
};

struct ExperimentResult {
  std::vector<CriterionResult> results;
  std::vector<ReportRow> rows;
};

using ProgressFn = std::function<void(const std::string&)>;

inline EvalTriplet evaluate_tiers(const Recognizer& r, const CorpusBundle& b) {
  return {r.evaluate(b.test[0]).rate(), r.evaluate(b.test[1]).rate(), r.evaluate(b.test[2]).rate()};
}

/// Corpus, units, training and evaluation for one criterion. The corpus
/// and units are rebuilt from the config, so every criterion sees the same
/// data.
inline CriterionResult run_criterion(const ExperimentConfig& c, Criterion crit, const ProgressFn& progress = {}) {
  auto say = [&](const std::string& s) {
    if (progress) progress(to_string(crit) + ": " + s);
  };
  CriterionResult res;
  res.criterion = crit;
  const CorpusBundle b = run_stage("corpus", [&] { return make_corpus(c); });
  res.corpus_checksum = b.checksum();
  const UnitSet units = run_stage("units", [&] { return train_units(c, b); });
  res.units_checksum = units.checksum();
  say("training");
  const AsrModel model = train_model(c, crit, b, units, &res.training);
  say("decoding");
  run_stage("decode", [&] {
    Recognizer fp(model, b, units, c);
    res.beam = tune_beam(fp, b.valid, c.beams);
    res.wer_fp64 = evaluate_tiers(fp, b);
    Recognizer used = c.int8 ? Recognizer(quantized_copy(model), b, units, c) : fp;
    used.set_beam(res.beam);
    res.wer = c.int8 ? evaluate_tiers(used, b) : res.wer_fp64;
    std::vector<const CorpusItem*> all;
    std::vector<double> durations;
    for (const auto& tier : b.test)
      for (const auto& item : tier) {
        all.push_back(&item);
        durations.push_back(item.duration_s);
      }
    res.rtf = measure_rtf([&](std::size_t i) { used.recognize(all[i]->features); }, durations);
    return 0;
  });
  return res;
}

inline std::vector<ReportRow> report_rows(const std::string& language, const std::vector<CriterionResult>& results) {
  const CriterionResult* baseline = nullptr;
  for (const auto& r : results)
    if (r.criterion == Criterion::kLfmmi) baseline = &r;
  std::vector<ReportRow> rows;
  for (const auto& r : results) {
    ReportRow row{language, to_string(r.criterion), r.wer, std::nullopt, r.rtf};
    if (baseline && &r != baseline && baseline->wer.clean > 0 && baseline->wer.noisy > 0 && baseline->wer.extreme > 0)
      row.avg_werr = werr_average(baseline->wer, r.wer);
    rows.push_back(row);
  }
  return rows;
}

/// Runs every configured criterion. With an output prefix the report is
/// rewritten after each criterion, so a failure leaves the finished rows
/// on disk.
inline ExperimentResult run_experiment(const ExperimentConfig& c, const ProgressFn& progress = {}) {
  run_stage("config", [&] {
    c.validate();
    return 0;
  });
  ExperimentResult out;
  for (Criterion crit : c.criteria) {
    out.results.push_back(run_criterion(c, crit, progress));
    out.rows = report_rows(c.language, out.results);
    if (!c.output_prefix.empty()) run_stage("report", [&] {
        emit_report(c.output_prefix, out.rows);
        return 0;
      });
  }
  return out;
}

}  // namespace critlab
