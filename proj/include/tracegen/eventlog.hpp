#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tracegen/util.hpp"

namespace tracegen {

struct Event {
  std::string activity;
  std::int64_t timestamp_ms = 0;
};

/// One process execution: ordered events plus static trace attributes.
struct Trace {
  std::string id;
  std::vector<Event> events;
  std::map<std::string, std::string> attrs_cat;
  std::map<std::string, double> attrs_num;

  /// Trace start time: the timestamp of the first event.
  std::int64_t start_ms() const { return events.front().timestamp_ms; }
  std::int64_t end_ms() const { return events.back().timestamp_ms; }
};

struct EventLog {
  std::vector<Trace> traces;
  std::set<std::string> activity_alphabet;
  std::map<std::string, std::string> metadata;  // log-level annotations (provenance etc.)

  size_t size() const { return traces.size(); }
  bool empty() const { return traces.empty(); }
};

/// Builds a log from traces, computing the alphabet and validating the trace
/// invariants (non-empty, time-sorted, finite numeric attributes).
EventLog make_log(std::vector<Trace> traces);

// ---------------------------------------------------------------------------
// Parsing / serialization
// ---------------------------------------------------------------------------

enum class LogFormat { XES, CSV };

/// Declares how CSV columns map onto the log model. Columns not listed
/// anywhere are classified automatically: numerical iff every non-empty value
/// parses as a finite decimal, categorical otherwise.
struct CsvColumnMap {
  std::string case_id = "case_id";
  std::string activity = "activity";
  std::string timestamp = "timestamp";
  std::vector<std::string> cat_attrs;  // explicit categorical trace attributes
  std::vector<std::string> num_attrs;  // explicit numerical trace attributes
  bool auto_classify_rest = true;
};

struct ParseOptions {
  /// Concatenate "lifecycle:transition" onto the activity label (XES only),
  /// e.g. "O_CREATED" + "COMPLETE" -> "O_CREATED-COMPLETE".
  bool concat_lifecycle = false;
};

EventLog parse_xes(const std::string& path, const ParseOptions& opts = {});
EventLog parse_csv(const std::string& path, const CsvColumnMap& columns = {});
EventLog parse_log(const std::string& path, LogFormat format,
                   const std::optional<CsvColumnMap>& columns = std::nullopt,
                   const ParseOptions& opts = {});

void write_xes(const EventLog& log, const std::string& path);
void write_csv(const EventLog& log, const std::string& path, const CsvColumnMap& columns = {});

// ---------------------------------------------------------------------------
// Trace filters (dataset preparation is configuration-driven)
// ---------------------------------------------------------------------------

struct TraceFilter {
  enum class Type {
    RequireAnyOf,     ///< keep traces containing at least one of `activities`
    RequireAnyPrefix, ///< keep traces with at least one activity starting with `prefix`
    DropIfLast,       ///< drop traces whose last activity is `activity`
    MinEvents,        ///< keep traces with >= `min_events` events
  };
  Type type;
  std::vector<std::string> activities;
  std::string prefix;
  std::string activity;
  int min_events = 1;
};

EventLog apply_filters(const EventLog& log, const std::vector<TraceFilter>& filters);

// ---------------------------------------------------------------------------
// Conditional labeling
// ---------------------------------------------------------------------------

struct LabelerSpec {
  enum class Kind {
    ActivityPresence,    ///< target activity occurs
    ActivityMultiplicity,///< target activity occurs >= min_count times
    ReturnWithinDelta,   ///< a trigger activity is followed by the return
                         ///< activity within delta
    ActivitySetPresence, ///< any activity of the set occurs
  };
  Kind kind = Kind::ActivityPresence;
  std::vector<std::string> activities;          // target activity / set / return activity
  std::vector<std::string> trigger_activities;  // ReturnWithinDelta only
  int min_count = 2;                            // ActivityMultiplicity only
  std::int64_t delta_ms = 0;                    // ReturnWithinDelta only

  void validate() const;
};

/// Evaluates the labeling predicate on a single trace.
bool evaluate_labeler(const Trace& trace, const LabelerSpec& spec);

/// Returns a copy of the log where every trace carries the categorical
/// attribute `attr_name` in {"True","False"}. Events are untouched.
EventLog apply_labeler(const EventLog& log, const LabelerSpec& spec, const std::string& attr_name);

/// Removes `attr_name` from all traces (no-op where absent).
EventLog strip_attribute(const EventLog& log, const std::string& attr_name);

/// Fraction of traces whose `attr_name` equals "True". Every trace must carry
/// the attribute.
double conditional_ratio(const EventLog& log, const std::string& attr_name);

// ---------------------------------------------------------------------------
// Splitting and variants
// ---------------------------------------------------------------------------

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct LogSplit {
  EventLog train;
  EventLog val;
  EventLog test;
};

/// Orders traces by first-event timestamp (ties by id) and partitions them
/// contiguously; sizes are round(n*f) for train and val, remainder to test.
LogSplit chronological_split(const EventLog& log, const SplitFractions& fractions);

using Variant = std::vector<std::string>;

Variant variant_of(const Trace& trace);
std::set<Variant> variant_set(const EventLog& log);

// ---------------------------------------------------------------------------
// Summary statistics (dataset description table)
// ---------------------------------------------------------------------------

struct LogSummary {
  size_t traces = 0;
  size_t variants = 0;
  size_t activities = 0;
  double avg_trace_length = 0.0;
  double avg_cycle_time_hours = 0.0;
  std::optional<double> cond_ratio;  // present when the label attribute exists
};

LogSummary summarize(const EventLog& log, const std::optional<std::string>& label_attr);

}  // namespace tracegen
