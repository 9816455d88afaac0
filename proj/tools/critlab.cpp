// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "critlab/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace critlab;

ExperimentConfig config_or_default(const std::string& path) {
  return run_stage("config", [&] { return path.empty() ? ExperimentConfig{} : load_config(path); });
}

UnitSet read_units(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return UnitSet::from_json(nlohmann::json::parse(is));
}

const std::vector<CorpusItem>& split_of(const CorpusBundle& b, const std::string& name) {
  if (name == "train") return b.train;
  if (name == "valid") return b.valid;
  for (int k = 0; k < 3; ++k)
    if (name == std::string("test-") + kTierNames[k]) return b.test[k];
  throw std::invalid_argument("unknown split: " + name);
}

void progress(const std::string& s) { std::cerr << s << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming ASR training-criterion comparison"};
  app.require_subcommand(1);
  std::string config_path, corpus_dir, units_path, model_dir, out, criterion = "ctc", split = "test-clean", input;
  int beam = 0;
  bool int8 = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  gen->add_option("--config", config_path, "INI config")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory")->required();

  auto* units_cmd = app.add_subcommand("train-units", "Train grapheme and wordpiece inventories");
  units_cmd->add_option("--config", config_path, "INI config")->check(CLI::ExistingFile);
  units_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  units_cmd->add_option("--out", out, "Output JSON file")->required();

  auto* train = app.add_subcommand("train", "Train one criterion");
  train->add_option("--config", config_path, "INI config")->check(CLI::ExistingFile);
  train->add_option("--corpus", corpus_dir, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--units", units_path, "Units JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--criterion", criterion, "lfmmi, ctc or rnnt")->check(CLI::IsMember({"lfmmi", "ctc", "rnnt"}));
  train->add_option("--out", out, "Model directory")->required();
  train->add_flag("--int8", int8, "Store the encoder as INT8");

  auto* decode = app.add_subcommand("decode", "Decode a split and print its WER");
  decode->add_option("--config", config_path, "INI config")->check(CLI::ExistingFile);
  decode->add_option("--corpus", corpus_dir, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  decode->add_option("--units", units_path, "Units JSON")->required()->check(CLI::ExistingFile);
  decode->add_option("--model", model_dir, "Model directory")->required()->check(CLI::ExistingDirectory);
  decode->add_option("--split", split, "train, valid, test-clean, test-noisy or test-extreme");
  decode->add_option("--beam", beam, "Beam (0 = tune on valid)");
  decode->add_flag("--int8", int8, "Quantize the encoder before decoding");

  auto* report = app.add_subcommand("report", "Render a results CSV as a table");
  report->add_option("--input", input, "Results CSV")->required()->check(CLI::ExistingFile);
  report->add_option("--out", out, "Also write <out>.csv and <out>.txt");

  auto* run = app.add_subcommand("run", "Run the full comparison");
  run->add_option("--config", config_path, "INI config")->check(CLI::ExistingFile);
  run->add_option("--out", out, "Report prefix (overrides the config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto c = config_or_default(config_path);
      const auto b = run_stage("corpus", [&] { return make_corpus(c); });
      run_stage("corpus", [&] {
        save_corpus(out, b);
        return 0;
      });
      std::cout << "corpus checksum " << std::hex << b.checksum() << std::dec << '\n';
    } else if (units_cmd->parsed()) {
      const auto c = config_or_default(config_path);
      const auto b = run_stage("corpus", [&] { return load_corpus(corpus_dir); });
      const auto u = run_stage("units", [&] { return train_units(c, b); });
      run_stage("units", [&] {
        std::ofstream os(out);
        os << u.to_json().dump(2) << '\n';
        if (!os) throw std::runtime_error("cannot write " + out);
        return 0;
      });
      std::cout << "wordpieces " << u.wordpieces.inventory().num_labels() << ", graphemes "
                << u.graphemes.inventory().num_labels() << '\n';
    } else if (train->parsed()) {
      const auto c = config_or_default(config_path);
      const auto b = run_stage("corpus", [&] { return load_corpus(corpus_dir); });
      const auto u = run_stage("units", [&] { return read_units(units_path); });
      TrainingReport rep;
      const auto m = train_model(c, parse_criterion(criterion), b, u, &rep);
      run_stage("checkpoint", [&] {
        save_model(out, m, int8);
        return 0;
      });
      std::cout << "segments " << rep.segments << ", final epoch loss "
                << (rep.main.epoch_losses.empty() ? 0.0 : rep.main.epoch_losses.back()) << ", cpu "
                << rep.cpu_seconds << " s\n";
    } else if (decode->parsed()) {
      const auto c = config_or_default(config_path);
      const auto b = run_stage("corpus", [&] { return load_corpus(corpus_dir); });
      const auto u = run_stage("units", [&] { return read_units(units_path); });
      auto m = run_stage("checkpoint", [&] { return load_model(model_dir); });
      if (int8) m = quantized_copy(m);
      run_stage("decode", [&] {
        Recognizer r(m, b, u, c);
        r.set_beam(beam > 0 ? beam : tune_beam(r, b.valid, c.beams));
        ErrorCounts total;
        for (const auto& item : split_of(b, split)) {
          const std::string hyp = r.recognize(item.features);
          total += error_rate(item.transcript, hyp);
          std::cout << item.id << '\t' << hyp << '\n';
        }
        std::cout << "WER " << fixed(total.rate(), 2) << " (" << total.edits() << "/" << total.reference_length
                  << "), beam " << r.beam() << '\n';
        return 0;
      });
    } else if (report->parsed()) {
      const auto rows = run_stage("report", [&] {
        std::ifstream is(input);
        return parse_report_csv(is);
      });
      write_report_table(std::cout, rows);
      if (!out.empty()) run_stage("report", [&] {
          emit_report(out, rows);
          return 0;
        });
    } else if (run->parsed()) {
      auto c = config_or_default(config_path);
      if (!out.empty()) c.output_prefix = out;
      const auto result = run_experiment(c, progress);
      write_report_table(std::cout, result.rows);
      for (const auto& r : result.results)
        std::cerr << to_string(r.criterion) << ": beam " << r.beam << ", train cpu " << r.training.cpu_seconds
                  << " s, corpus " << std::hex << r.corpus_checksum << ", units " << r.units_checksum << std::dec
                  << '\n';
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: [internal] " << e.what() << '\n';
    return 2;
  }
  return 0;
}
