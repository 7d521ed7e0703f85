#include "tracegen/eventlog.hpp"

#include <algorithm>
#include <cmath>

namespace tracegen {

EventLog make_log(std::vector<Trace> traces) {
  EventLog log;
  for (auto& t : traces) {
    if (t.events.empty()) throw ValidationError("trace '" + t.id + "' has no events");
    for (size_t i = 0; i + 1 < t.events.size(); ++i) {
      if (t.events[i].timestamp_ms > t.events[i + 1].timestamp_ms)
        throw ValidationError("trace '" + t.id + "' events are not time-ordered");
    }
    for (const auto& e : t.events) {
      if (e.activity.empty()) throw ValidationError("trace '" + t.id + "' has an empty activity label");
      log.activity_alphabet.insert(e.activity);
    }
    for (const auto& [k, v] : t.attrs_num) {
      if (!std::isfinite(v))
        throw ValidationError("trace '" + t.id + "' attribute '" + k + "' is not finite");
    }
  }
  log.traces = std::move(traces);
  return log;
}

EventLog parse_log(const std::string& path, LogFormat format,
                   const std::optional<CsvColumnMap>& columns, const ParseOptions& opts) {
  switch (format) {
    case LogFormat::XES:
      return parse_xes(path, opts);
    case LogFormat::CSV:
      return parse_csv(path, columns.value_or(CsvColumnMap{}));
  }
  throw ConfigError("unknown log format");
}

EventLog apply_filters(const EventLog& log, const std::vector<TraceFilter>& filters) {
  std::vector<Trace> kept;
  for (const auto& t : log.traces) {
    bool keep = true;
    for (const auto& f : filters) {
      switch (f.type) {
        case TraceFilter::Type::RequireAnyOf: {
          bool found = std::any_of(t.events.begin(), t.events.end(), [&](const Event& e) {
            return std::find(f.activities.begin(), f.activities.end(), e.activity) !=
                   f.activities.end();
          });
          keep = keep && found;
          break;
        }
        case TraceFilter::Type::RequireAnyPrefix: {
          bool found = std::any_of(t.events.begin(), t.events.end(), [&](const Event& e) {
            return starts_with(e.activity, f.prefix);
          });
          keep = keep && found;
          break;
        }
        case TraceFilter::Type::DropIfLast:
          keep = keep && t.events.back().activity != f.activity;
          break;
        case TraceFilter::Type::MinEvents:
          keep = keep && static_cast<int>(t.events.size()) >= f.min_events;
          break;
      }
      if (!keep) break;
    }
    if (keep) kept.push_back(t);
  }
  return make_log(std::move(kept));
}

void LabelerSpec::validate() const {
  switch (kind) {
    case Kind::ActivityPresence:
      if (activities.size() != 1) throw ConfigError("activity-presence labeler needs exactly one activity");
      break;
    case Kind::ActivityMultiplicity:
      if (activities.size() != 1) throw ConfigError("activity-multiplicity labeler needs exactly one activity");
      if (min_count < 1) throw ConfigError("activity-multiplicity labeler needs min_count >= 1");
      break;
    case Kind::ReturnWithinDelta:
      if (activities.size() != 1) throw ConfigError("return-within-delta labeler needs exactly one return activity");
      if (trigger_activities.empty()) throw ConfigError("return-within-delta labeler needs trigger activities");
      if (delta_ms <= 0) throw ConfigError("return-within-delta labeler needs a positive time window");
      break;
    case Kind::ActivitySetPresence:
      if (activities.empty()) throw ConfigError("activity-set-presence labeler needs a non-empty set");
      break;
  }
}

bool evaluate_labeler(const Trace& trace, const LabelerSpec& spec) {
  switch (spec.kind) {
    case LabelerSpec::Kind::ActivityPresence: {
      const std::string& target = spec.activities.front();
      return std::any_of(trace.events.begin(), trace.events.end(),
                         [&](const Event& e) { return e.activity == target; });
    }
    case LabelerSpec::Kind::ActivityMultiplicity: {
      const std::string& target = spec.activities.front();
      int count = 0;
      for (const auto& e : trace.events)
        if (e.activity == target) ++count;
      return count >= spec.min_count;
    }
    case LabelerSpec::Kind::ReturnWithinDelta: {
      const std::string& ret = spec.activities.front();
      for (size_t i = 0; i < trace.events.size(); ++i) {
        const auto& ei = trace.events[i];
        bool is_trigger = std::find(spec.trigger_activities.begin(), spec.trigger_activities.end(),
                                    ei.activity) != spec.trigger_activities.end();
        if (!is_trigger) continue;
        for (size_t j = i + 1; j < trace.events.size(); ++j) {
          if (trace.events[j].activity != ret) continue;
          if (trace.events[j].timestamp_ms - ei.timestamp_ms <= spec.delta_ms) return true;
        }
      }
      return false;
    }
    case LabelerSpec::Kind::ActivitySetPresence: {
      return std::any_of(trace.events.begin(), trace.events.end(), [&](const Event& e) {
        return std::find(spec.activities.begin(), spec.activities.end(), e.activity) !=
               spec.activities.end();
      });
    }
  }
  throw Error("unreachable labeler kind");
}

EventLog apply_labeler(const EventLog& log, const LabelerSpec& spec, const std::string& attr_name) {
  spec.validate();
  EventLog out = log;
  for (auto& t : out.traces) {
    if (t.attrs_cat.count(attr_name) || t.attrs_num.count(attr_name))
      throw ValidationError("attribute '" + attr_name + "' already present on trace '" + t.id + "'");
    t.attrs_cat[attr_name] = evaluate_labeler(t, spec) ? "True" : "False";
  }
  return out;
}

EventLog strip_attribute(const EventLog& log, const std::string& attr_name) {
  EventLog out = log;
  for (auto& t : out.traces) {
    t.attrs_cat.erase(attr_name);
    t.attrs_num.erase(attr_name);
  }
  return out;
}

double conditional_ratio(const EventLog& log, const std::string& attr_name) {
  if (log.empty()) throw ValidationError("conditional ratio of an empty log is undefined");
  size_t positives = 0;
  for (const auto& t : log.traces) {
    auto it = t.attrs_cat.find(attr_name);
    if (it == t.attrs_cat.end())
      throw ValidationError("trace '" + t.id + "' is missing attribute '" + attr_name + "'");
    if (it->second == "True") ++positives;
  }
  return static_cast<double>(positives) / static_cast<double>(log.size());
}

LogSplit chronological_split(const EventLog& log, const SplitFractions& f) {
  if (log.size() < 3) throw ValidationError("cannot split a log with fewer than 3 traces");
  if (f.train <= 0 || f.val <= 0 || f.test <= 0)
    throw ConfigError("split fractions must be positive");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");

  std::vector<Trace> ordered = log.traces;
  std::sort(ordered.begin(), ordered.end(), [](const Trace& a, const Trace& b) {
    if (a.start_ms() != b.start_ms()) return a.start_ms() < b.start_ms();
    return a.id < b.id;
  });

  const auto n = static_cast<long long>(ordered.size());
  long long n_train = round_half_away(static_cast<double>(n) * f.train);
  long long n_val = round_half_away(static_cast<double>(n) * f.val);
  n_train = std::clamp<long long>(n_train, 1, n - 2);
  n_val = std::clamp<long long>(n_val, 1, n - n_train - 1);

  LogSplit split;
  split.train = make_log({ordered.begin(), ordered.begin() + n_train});
  split.val = make_log({ordered.begin() + n_train, ordered.begin() + n_train + n_val});
  split.test = make_log({ordered.begin() + n_train + n_val, ordered.end()});
  return split;
}

Variant variant_of(const Trace& trace) {
  Variant v;
  v.reserve(trace.events.size());
  for (const auto& e : trace.events) v.push_back(e.activity);
  return v;
}

std::set<Variant> variant_set(const EventLog& log) {
  std::set<Variant> set;
  for (const auto& t : log.traces) set.insert(variant_of(t));
  return set;
}

LogSummary summarize(const EventLog& log, const std::optional<std::string>& label_attr) {
  LogSummary s;
  s.traces = log.size();
  s.variants = variant_set(log).size();
  s.activities = log.activity_alphabet.size();
  double total_events = 0, total_cycle_ms = 0;
  for (const auto& t : log.traces) {
    total_events += static_cast<double>(t.events.size());
    total_cycle_ms += static_cast<double>(t.end_ms() - t.start_ms());
  }
  if (!log.empty()) {
    s.avg_trace_length = total_events / static_cast<double>(log.size());
    s.avg_cycle_time_hours = total_cycle_ms / static_cast<double>(log.size()) / 3.6e6;
  }
  if (label_attr) s.cond_ratio = conditional_ratio(log, *label_attr);
  return s;
}

}  // namespace tracegen
