#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tracegen/eventlog.hpp"
#include "tracegen/model.hpp"
#include "tracegen/train.hpp"

namespace tracegen {

struct DatasetConfig {
  std::string name;  // short identifier used in reports and file names
  std::string path;
  LogFormat format = LogFormat::XES;
  CsvColumnMap columns;  // CSV only
  ParseOptions parse;
  std::vector<TraceFilter> filters;
};

struct LabelConfig {
  std::string attr = "condition";
  LabelerSpec spec;
};

struct GenerationConfig {
  int n_logs = 10;
  int n_traces = 0;           // 0: size of the test log
  double target_ratio = -1.0; // < 0: conditional ratio of the training log
  std::string tau;            // ISO-8601 anchor; empty: first timestamp of the full log
  int max_len = 0;            // 0: longest training trace
  int resample_limit = 10;
  bool bernoulli_conditions = false;
  int what_if_pairs = 0;      // counterfactual pairs to emit alongside; 0 skips
};

struct MetricOptions {
  double declare_support = 0.9;
  int baseline_blocks = 4;
};

/// The experiment document: one JSON file drives the whole pipeline. The
/// schema is versioned; `hash()` fingerprints the canonical dump so artifacts
/// from different configurations never mix silently.
struct ExperimentConfig {
  DatasetConfig dataset;
  LabelConfig label;
  SplitFractions split;
  ModelConfig model;  // hyperparameters only; shapes are bound during prepare
  TrainConfig train;
  GenerationConfig gen;
  MetricOptions metrics;
  std::string out_dir = "out";
  std::uint64_t seed = 42;

  /// Keeps the training seed in lockstep with the global one.
  void set_seed(std::uint64_t s);

  /// Throws ConfigError naming the offending field. File existence is only
  /// checked when `check_files` is set (report/evaluate reuse parsed configs
  /// whose inputs may have moved).
  void validate(bool check_files = true) const;

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::string& path);

  /// Stable fingerprint of the canonical serialization.
  std::string hash() const;
};

}  // namespace tracegen
