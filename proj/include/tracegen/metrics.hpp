#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tracegen/declare.hpp"
#include "tracegen/eventlog.hpp"

namespace tracegen {

/// Exact 1-D first Wasserstein distance between two empirical distributions
/// (equal mass per sample within each side; sides may differ in size).
double emd_1d(std::vector<double> a, std::vector<double> b);

/// EMD between the multisets of event offsets from their trace's first event,
/// in hours ("relative event distribution").
double relative_event_distribution(const EventLog& gen, const EventLog& ref);

/// EMD between the per-trace cycle times, in hours.
double cycle_time_distribution(const EventLog& gen, const EventLog& ref);

/// Half L1 distance between 2-gram frequency profiles, with virtual start/end
/// markers around every trace. 0 for identical profiles, 1 for disjoint.
double two_gram_distance(const EventLog& gen, const EventLog& ref);

struct VariantStats {
  size_t total = 0;     // distinct variants in the generated log
  size_t in_train = 0;  // of those, seen in training
  size_t in_test = 0;   // seen in the test log
  size_t novel = 0;     // seen in neither
};
VariantStats variant_stats(const EventLog& gen, const std::set<Variant>& train_variants,
                           const std::set<Variant>& test_variants);

/// Mean constraint-satisfaction fraction over generated traces whose variant
/// never occurs in training; nullopt when there are no such traces.
std::optional<double> conformance_score(const EventLog& gen, const DeclareModel& model,
                                        const std::set<Variant>& train_variants);

/// Share of traces the labeler marks True when re-applied to generated traces
/// (the condition attribute the generator wrote is stripped first).
double aposteriori_ratio(const EventLog& gen, const LabelerSpec& labeler,
                         const std::string& condition_attr);

/// Distribution metrics restricted to one condition value on both sides.
struct ConditionSlice {
  double red = 0.0, ctd = 0.0, two_gd = 0.0;
  size_t n_gen = 0, n_ref = 0;
};

struct LogMetrics {
  double red = 0.0;
  double ctd = 0.0;
  double two_gd = 0.0;
  std::optional<double> conf;
  VariantStats variants;
  double requested_ratio = 0.0;  // condition ratio carried by the log itself
  std::optional<double> aposteriori;
  std::map<std::string, ConditionSlice> by_condition;  // keys "True"/"False" when computable
};

struct EvalInputs {
  const EventLog* test = nullptr;
  const DeclareModel* declare_model = nullptr;
  const std::set<Variant>* train_variants = nullptr;
  const std::set<Variant>* test_variants = nullptr;
  const LabelerSpec* labeler = nullptr;  // optional; enables the a-posteriori ratio
  std::string condition_attr;
};

LogMetrics compute_log_metrics(const EventLog& gen, const EvalInputs& in);

/// Newest test-sized chronological blocks of train+val: real historical data
/// as a fidelity floor for the distribution metrics. Fewer than `max_blocks`
/// when train+val is too small; empty when it cannot fill one block.
std::vector<EventLog> baseline_blocks(const EventLog& train_plus_val, size_t test_size,
                                      size_t max_blocks = 4);

struct MetricAggregate {
  std::vector<double> values;
  double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;  // population stddev
};
MetricAggregate aggregate(const std::vector<double>& values);

struct ModelEvaluation {
  std::string name;
  std::vector<LogMetrics> per_log;
  MetricAggregate red, ctd, two_gd;
  std::optional<MetricAggregate> conf;  // over logs where conformance was defined
  double mean_variants = 0.0, mean_in_train = 0.0, mean_in_test = 0.0, mean_novel = 0.0;
  std::optional<double> mean_aposteriori;
  std::optional<double> mean_requested;
};

ModelEvaluation evaluate_model(const std::string& name, const std::vector<EventLog>& gen_logs,
                               const EvalInputs& in);

struct EvaluationReport {
  std::string dataset;
  std::string condition_attr;
  double train_ratio = 0.0;  // share of condition = True in the training split
  double test_ratio = 0.0;   // share in test
  size_t test_traces = 0;
  size_t test_variants = 0;
  std::vector<ModelEvaluation> models;
};

std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const std::string& text);

/// Long-format CSV: model,log_index,metric,value.
void write_metrics_csv(const EvaluationReport& report, const std::string& path);

}  // namespace tracegen
