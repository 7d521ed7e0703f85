#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tracegen/config.hpp"

namespace tracegen {

/// Options shared by every CLI verb. Paths in `extra_log_dirs` and
/// `checkpoint` are taken relative to the output directory unless absolute.
struct CommandOptions {
  std::string config_path;
  std::string out_override;                    // --out
  std::optional<std::uint64_t> seed_override;  // --seed
  bool force = false;                          // --force
  std::string checkpoint;                      // --checkpoint
  std::vector<std::string> extra_log_dirs;     // --extra-logs
};

/// Loads the config, applies the overrides, validates.
ExperimentConfig load_config(const CommandOptions& opts, bool check_files = true);

/// prepare: parse, filter, label, split chronologically, fit the encoding,
/// write the prepared splits and the dataset summary.
void cmd_prepare(const CommandOptions& opts);

/// train: encode the prepared splits and run the training loop; writes the
/// best-validation checkpoint and the epoch history. `--checkpoint` resumes.
void cmd_train(const CommandOptions& opts);

/// generate: decode n_logs conditioned logs from the checkpoint (default
/// <out>/model/checkpoint.cbor), each with seed (global seed + log index).
void cmd_generate(const CommandOptions& opts);

/// evaluate: score generated logs (plus any --extra-logs directories) against
/// the test split, with the train_log block baseline; writes report JSON and
/// long-format CSV.
void cmd_evaluate(const CommandOptions& opts);

/// report: render boxplot SVGs and Markdown tables from the evaluate output.
void cmd_report(const CommandOptions& opts);

}  // namespace tracegen
