#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sentspan/model.hpp"
#include "sentspan/trainer.hpp"

namespace sentspan {

/// Declarative run configuration: `key = value` lines, '#' comments.
/// Unknown keys are an error so typos fail loudly. Command-line --set
/// overrides reuse the same key names.
struct RunConfig {
  // Paths.
  std::string train_csv;
  std::string val_csv;
  std::string test_csv;
  std::string vocab_file = "out/vocab.txt";
  std::string prepared_dir = "out/prepared";
  std::string checkpoint_dir = "out/checkpoints";
  std::string output_dir = "out";

  // Preparation.
  int max_source_length = 96;
  int vocab_max_size = 8192;
  std::optional<std::array<double, 3>> split_ratios;  // split train_csv when set
  uint64_t split_seed = 13;

  // Model (vocab_size is filled from the built vocabulary at run time).
  ModelConfig model;

  // Training.
  TrainConfig train;
  bool checkpoint_every_epoch = false;

  static RunConfig from_file(const std::string& path);
  void apply_override(const std::string& key_equals_value);  // "key=value"
  std::string serialize() const;
};

namespace cli {

/// Build the vocabulary from the training split, align every split, and
/// write vocab + prepared JSONL datasets + alignment audit + findings.
void cmd_prepare(const RunConfig& config);

/// Train on the prepared datasets; writes checkpoints and the train log.
void cmd_train(const RunConfig& config);

/// Evaluate a checkpoint on the requested prepared splits; writes one JSON
/// report per split plus a combined metrics table.
void cmd_eval(const RunConfig& config, const std::string& checkpoint_path,
              const std::vector<std::string>& splits);

/// Extract the sentiment span for one raw text; prints it on stdout.
void cmd_predict(const RunConfig& config, const std::string& checkpoint_path,
                 const std::string& sentiment, const std::string& raw_text);

/// Per-example alignment audit joining the prepared dataset back to the
/// source CSV; reports round-trip Jaccard of the gold span against both the
/// decoded target ids and the raw selected text.
void cmd_inspect_alignment(const RunConfig& config);

}  // namespace cli
}  // namespace sentspan
