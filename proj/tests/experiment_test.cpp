// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "critlab/experiment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

namespace critlab {
namespace {

namespace fs = std::filesystem;

ExperimentConfig config_from(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

ExperimentConfig smoke() { return load_config(fs::path(CRITLAB_SOURCE_DIR) / "configs" / "smoke.ini"); }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("critlab_experiment_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Config, EmptyDocumentGivesDefaults) {
  const auto c = config_from("");
  const ExperimentConfig d;
  EXPECT_EQ(c.criteria, d.criteria);
  EXPECT_EQ(c.train_utterances, 200u);
  EXPECT_EQ(c.epochs_for(Criterion::kCtc), d.criterion_epochs[1]);
}

TEST(Config, KeysAndLists) {
  const auto c = config_from(
      "[experiment]\ncriteria = rnnt, ctc\n[train]\nepochs = 7\nctc_epochs = -1\nce_pretrain =\n"
      "[decode]\nbeams = 3,9\nint8 = false\n[corpus]\nclean_noise = 0.25\n");
  EXPECT_EQ(c.criteria, (std::vector<Criterion>{Criterion::kRnnt, Criterion::kCtc}));
  EXPECT_EQ(c.epochs_for(Criterion::kCtc), 7);
  EXPECT_FALSE(c.pretrains(Criterion::kRnnt));
  EXPECT_EQ(c.beams, (std::vector<int>{3, 9}));
  EXPECT_FALSE(c.int8);
  EXPECT_DOUBLE_EQ(c.test_noise[0], 0.25);
}

TEST(Config, RejectsUnknownAndInvalid) {
  EXPECT_THROW(config_from("[train]\nepoch = 3\n"), std::invalid_argument);
  EXPECT_THROW(config_from("[nope]\nx = 1\n"), std::invalid_argument);
  EXPECT_THROW(config_from("[experiment]\ncriteria = hmm\n"), std::invalid_argument);
  EXPECT_THROW(config_from("[decode]\nbeams = 0\n"), std::invalid_argument);
  EXPECT_THROW(config_from("[corpus]\nfeature_dim = 1\n"), std::invalid_argument);  // masks wider than F
}

TEST(Config, ShippedConfigsParse) {
  for (const auto& entry : fs::directory_iterator(fs::path(CRITLAB_SOURCE_DIR) / "configs"))
    EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
  const auto d = load_config(fs::path(CRITLAB_SOURCE_DIR) / "configs" / "default.ini");
  const ExperimentConfig builtin;
  EXPECT_EQ(d.test_noise, builtin.test_noise);
  EXPECT_EQ(d.criterion_epochs, builtin.criterion_epochs);
  EXPECT_EQ(d.corpus.max_unit_frames, builtin.corpus.max_unit_frames);
}

TEST(Corpus, TiersShareTranscripts) {
  const auto b = make_corpus(smoke());
  for (std::size_t i = 0; i < b.test[0].size(); ++i) {
    EXPECT_EQ(b.test[0][i].transcript, b.test[2][i].transcript);
    EXPECT_NE(b.test[0][i].features, b.test[2][i].features);
  }
  EXPECT_EQ(make_corpus(smoke()).checksum(), b.checksum());
}

TEST(Corpus, DiskRoundTrip) {
  const auto b = make_corpus(smoke());
  const auto dir = scratch("corpus");
  save_corpus(dir, b);
  EXPECT_EQ(load_corpus(dir).checksum(), b.checksum());
  EXPECT_THROW(load_corpus(dir / "missing"), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Checkpoint, TransducerModelRoundTrip) {
  const auto c = smoke();
  const auto b = make_corpus(c);
  const auto units = train_units(c, b);
  const AsrModel m = train_model(c, Criterion::kRnnt, b, units);
  const auto dir = scratch("model");
  save_model(dir, m);
  const AsrModel back = load_model(dir);
  ASSERT_TRUE(back.decoder.has_value());
  Recognizer a(m, b, units, c), r(back, b, units, c);
  for (const auto& item : b.test[1]) EXPECT_EQ(a.recognize(item.features), r.recognize(item.features));

  std::stringstream junk("CLDE\x01");
  EXPECT_THROW(load_decoder(junk), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Checkpoint, Int8EncoderMatchesQuantizedCopy) {
  const auto c = smoke();
  const auto b = make_corpus(c);
  const auto units = train_units(c, b);
  const AsrModel m = train_model(c, Criterion::kLfmmi, b, units);
  const auto dir = scratch("int8");
  save_model(dir, m, true);
  const AsrModel back = load_model(dir);
  const AsrModel q = quantized_copy(m);
  const Matrix& x = b.test[0][0].features;
  EXPECT_EQ(encoder_forward(back.encoder, x), encoder_forward(q.encoder, x));
  fs::remove_all(dir);
}

TEST(Experiment, SmokeRunIsLiveAndControlled) {
  const auto result = run_experiment(smoke());
  ASSERT_EQ(result.rows.size(), 3u);
  for (const auto& row : result.rows) {
    EXPECT_TRUE(std::isfinite(row.wer.clean) && std::isfinite(row.wer.noisy) && std::isfinite(row.wer.extreme));
    EXPECT_GT(row.rtf, 0.0);
  }
  EXPECT_FALSE(result.rows[0].avg_werr.has_value());  // the baseline row
  for (const auto& r : result.results) {
    EXPECT_EQ(r.corpus_checksum, result.results[0].corpus_checksum);
    EXPECT_EQ(r.units_checksum, result.results[0].units_checksum);
  }
}

TEST(Experiment, SameSeedSameWers) {
  auto c = smoke();
  c.criteria = {Criterion::kCtc, Criterion::kRnnt};
  const auto a = run_experiment(c), b = run_experiment(c);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].wer, b.rows[i].wer);
  c.train_seed = 99;
  c.threads = 2;
  const auto d = run_experiment(c);
  c.threads = 1;
  const auto e = run_experiment(c);
  for (std::size_t i = 0; i < d.rows.size(); ++i) EXPECT_EQ(d.rows[i].wer, e.rows[i].wer);
}

TEST(Experiment, FailureKeepsFinishedRows) {
  auto c = smoke();
  c.criteria = {Criterion::kLfmmi, Criterion::kCtc};
  const auto dir = scratch("partial");
  c.output_prefix = (dir / "report").string();
  EXPECT_THROW(run_experiment(c,
                              [](const std::string& msg) {
                                if (msg == "ctc: training") throw std::runtime_error("interrupted");
                              }),
               std::runtime_error);
  std::ifstream is(dir / "report.csv");
  ASSERT_TRUE(is.good());
  const auto rows = parse_report_csv(is);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].criterion, "lfmmi");
  fs::remove_all(dir);
}

TEST(Experiment, ErrorsCarryTheStage) {
  auto c = smoke();
  c.wordpiece_vocab = 3;  // below the base character set
  try {
    run_experiment(c);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "units");
    EXPECT_EQ(std::string(e.what()).rfind("[units] ", 0), 0u);
  }
  c = smoke();
  c.output_prefix = "/nonexistent-dir/report";
  try {
    run_experiment(c);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "report");
  }
}

}  // namespace
}  // namespace critlab
