#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tracegen/eventlog.hpp"

namespace tracegen {

/// Reserved numerical-attribute name for the normalized trace arrival offset
/// (first timestamp relative to the reference instant).
inline constexpr const char* kArrivalAttr = "__trace_arrival__";

/// Everything needed to map traces to model tensors and back, fitted on the
/// training split only and persisted alongside the model.
struct EncodingSpec {
  std::vector<std::string> activities;  // sorted labels; EOT takes index activities.size()
  std::map<std::string, std::vector<std::string>> cat_attr_values;  // sorted per attribute
  std::map<std::string, std::pair<double, double>> num_attr_minmax;  // includes kArrivalAttr
  double interarrival_p95_s = 1.0;  // 95th percentile of training interarrivals, seconds
  std::int64_t t1_reference_ms = 0; // earliest training trace start
  int max_len = 1;                  // longest training trace, in events
  std::string condition_attr;       // binary trace attribute carried as the condition channel

  int eot_index() const { return static_cast<int>(activities.size()); }
  int pad_index() const { return static_cast<int>(activities.size()) + 1; }
  int vocab_size() const { return static_cast<int>(activities.size()) + 1; }  // activities + EOT
  int activity_index(const std::string& label) const;  // throws on out-of-vocabulary labels
  int cat_value_index(const std::string& attr, const std::string& value) const;

  std::string to_json() const;
  static EncodingSpec from_json(const std::string& text);
  void save(const std::string& path) const;
  static EncodingSpec load(const std::string& path);
};

/// One trace in model coordinates. `activity_ids` carries the events plus a
/// trailing end-of-trace symbol; `interarrivals` carries one entry per event
/// (the first is always 0), normalized by the training 95th percentile.
struct EncodedTrace {
  std::vector<int> activity_ids;
  std::vector<double> interarrivals;
  std::map<std::string, int> cat_attr_ids;
  std::map<std::string, double> num_attrs;  // normalized, includes kArrivalAttr
  double condition = 0.0;

  size_t n_events() const { return interarrivals.size(); }
};

/// Raw model outputs for one generated trace, before mapping back to labels
/// and wall-clock timestamps. `activity_ids` excludes the end-of-trace symbol.
struct RawDecoded {
  std::vector<int> activity_ids;
  std::vector<double> interarrivals;  // normalized, aligned with activity_ids
  std::map<std::string, int> cat_attr_ids;
  std::map<std::string, double> num_attrs;  // normalized, includes kArrivalAttr
  bool truncated = false;
};

EncodingSpec fit_encoding(const EventLog& train, const std::string& condition_attr);

EncodedTrace encode_trace(const Trace& trace, const EncodingSpec& spec);
std::vector<EncodedTrace> encode_log(const EventLog& log, const EncodingSpec& spec);

/// Map raw outputs back to a trace anchored at reference instant `tau_ms`.
/// Negative interarrivals and attribute values below the training minimum are
/// clamped, so timestamps are always non-decreasing.
Trace decode_outputs(const RawDecoded& raw, const EncodingSpec& spec, std::int64_t tau_ms);

}  // namespace tracegen
