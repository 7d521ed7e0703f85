#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"

#include "tracegen/preprocess.hpp"
#include "tracegen/util.hpp"

namespace tracegen {

using json = nlohmann::ordered_json;

int EncodingSpec::activity_index(const std::string& label) const {
  auto it = std::lower_bound(activities.begin(), activities.end(), label);
  if (it == activities.end() || *it != label)
    throw ValidationError("out-of-vocabulary activity '" + label + "'");
  return static_cast<int>(it - activities.begin());
}

int EncodingSpec::cat_value_index(const std::string& attr, const std::string& value) const {
  auto ait = cat_attr_values.find(attr);
  if (ait == cat_attr_values.end())
    throw ValidationError("unknown categorical attribute '" + attr + "'");
  const auto& values = ait->second;
  auto it = std::lower_bound(values.begin(), values.end(), value);
  if (it == values.end() || *it != value)
    throw ValidationError("out-of-vocabulary value '" + value + "' for attribute '" + attr + "'");
  return static_cast<int>(it - values.begin());
}

std::string EncodingSpec::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "encoding";
  j["activities"] = activities;
  json cats = json::object();
  for (const auto& [k, v] : cat_attr_values) cats[k] = v;
  j["cat_attr_values"] = cats;
  json nums = json::object();
  for (const auto& [k, mm] : num_attr_minmax) nums[k] = {mm.first, mm.second};
  j["num_attr_minmax"] = nums;
  j["interarrival_p95_s"] = interarrival_p95_s;
  j["t1_reference_ms"] = t1_reference_ms;
  j["max_len"] = max_len;
  j["condition_attr"] = condition_attr;
  return j.dump(2) + "\n";
}

EncodingSpec EncodingSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("bad encoding document: ") + e.what());
  }
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1 ||
      j.value("kind", "") != "encoding")
    throw ParseError("not a version-1 encoding document");
  EncodingSpec spec;
  spec.activities = j.at("activities").get<std::vector<std::string>>();
  for (const auto& [k, v] : j.at("cat_attr_values").items())
    spec.cat_attr_values[k] = v.get<std::vector<std::string>>();
  for (const auto& [k, v] : j.at("num_attr_minmax").items())
    spec.num_attr_minmax[k] = {v.at(0).get<double>(), v.at(1).get<double>()};
  spec.interarrival_p95_s = j.at("interarrival_p95_s").get<double>();
  spec.t1_reference_ms = j.at("t1_reference_ms").get<std::int64_t>();
  spec.max_len = j.at("max_len").get<int>();
  spec.condition_attr = j.at("condition_attr").get<std::string>();
  return spec;
}

void EncodingSpec::save(const std::string& path) const { write_text_file(path, to_json()); }

EncodingSpec EncodingSpec::load(const std::string& path) {
  return from_json(read_text_file(path));
}

EncodingSpec fit_encoding(const EventLog& train, const std::string& condition_attr) {
  if (train.traces.empty()) throw ValidationError("cannot fit an encoding on an empty log");
  EncodingSpec spec;
  spec.condition_attr = condition_attr;
  spec.activities.assign(train.activity_alphabet.begin(), train.activity_alphabet.end());

  // Categorical vocabularies (the condition channel is not an attribute).
  std::map<std::string, std::set<std::string>> cat_values;
  std::set<std::string> num_names;
  bool condition_seen = false;
  for (const auto& t : train.traces) {
    for (const auto& [k, v] : t.attrs_cat) {
      if (k == condition_attr) {
        if (v != "True" && v != "False")
          throw ValidationError("trace '" + t.id + "': condition attribute '" + condition_attr +
                                "' must be 'True' or 'False', got '" + v + "'");
        condition_seen = true;
        continue;
      }
      cat_values[k].insert(v);
    }
    for (const auto& [k, v] : t.attrs_num) num_names.insert(k);
  }
  if (!condition_seen)
    throw ValidationError("condition attribute '" + condition_attr + "' not present in the training log");
  for (auto& [k, values] : cat_values)
    spec.cat_attr_values[k] = std::vector<std::string>(values.begin(), values.end());

  // Interarrival scale: nearest-rank 95th percentile over all gaps, seconds.
  std::vector<double> gaps;
  std::int64_t t1_min = train.traces.front().start_ms();
  int max_len = 1;
  for (const auto& t : train.traces) {
    t1_min = std::min(t1_min, t.start_ms());
    max_len = std::max(max_len, static_cast<int>(t.events.size()));
    for (size_t i = 1; i < t.events.size(); ++i)
      gaps.push_back(static_cast<double>(t.events[i].timestamp_ms - t.events[i - 1].timestamp_ms) / 1000.0);
  }
  spec.t1_reference_ms = t1_min;
  spec.max_len = max_len;
  if (gaps.empty()) {
    std::fprintf(stderr, "warning: no interarrival observations in training log; scale set to 1s\n");
    spec.interarrival_p95_s = 1.0;
  } else {
    std::sort(gaps.begin(), gaps.end());
    size_t rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(gaps.size())));
    rank = std::max<size_t>(rank, 1);
    double p95 = gaps[rank - 1];
    if (p95 <= 0.0) {
      std::fprintf(stderr, "warning: degenerate interarrival distribution (p95 = %s s); scale set to 1s\n",
                   format_double(p95).c_str());
      p95 = 1.0;
    }
    spec.interarrival_p95_s = p95;
  }

  // Min-max ranges for numerical attributes plus the trace arrival offset.
  for (const auto& name : num_names) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const auto& t : train.traces) {
      auto it = t.attrs_num.find(name);
      if (it == t.attrs_num.end())
        throw ValidationError("trace '" + t.id + "': missing numerical attribute '" + name + "'");
      if (first) {
        lo = hi = it->second;
        first = false;
      } else {
        lo = std::min(lo, it->second);
        hi = std::max(hi, it->second);
      }
    }
    spec.num_attr_minmax[name] = {lo, hi};
  }
  {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const auto& t : train.traces) {
      double v = static_cast<double>(t.start_ms() - t1_min) / 1000.0;
      if (first) {
        lo = hi = v;
        first = false;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    spec.num_attr_minmax[kArrivalAttr] = {lo, hi};
  }
  return spec;
}

namespace {

double minmax_encode(double x, double lo, double hi) {
  if (hi <= lo) return 0.0;  // degenerate range: constant attribute
  double v = (x - lo) / (hi - lo);
  return v < 0.0 ? 0.0 : v;  // clamp below the training minimum only
}

double minmax_decode(double v, double lo, double hi) {
  if (hi <= lo) return lo;
  if (v < 0.0) v = 0.0;
  return lo + v * (hi - lo);
}

}  // namespace

EncodedTrace encode_trace(const Trace& trace, const EncodingSpec& spec) {
  if (trace.events.empty()) throw ValidationError("trace '" + trace.id + "' has no events");
  EncodedTrace enc;
  enc.activity_ids.reserve(trace.events.size() + 1);
  enc.interarrivals.reserve(trace.events.size());
  for (size_t i = 0; i < trace.events.size(); ++i) {
    enc.activity_ids.push_back(spec.activity_index(trace.events[i].activity));
    if (i == 0) {
      enc.interarrivals.push_back(0.0);
    } else {
      double gap_s =
          static_cast<double>(trace.events[i].timestamp_ms - trace.events[i - 1].timestamp_ms) / 1000.0;
      enc.interarrivals.push_back(gap_s / spec.interarrival_p95_s);
    }
  }
  enc.activity_ids.push_back(spec.eot_index());

  for (const auto& [attr, values] : spec.cat_attr_values) {
    auto it = trace.attrs_cat.find(attr);
    if (it == trace.attrs_cat.end())
      throw ValidationError("trace '" + trace.id + "': missing categorical attribute '" + attr + "'");
    enc.cat_attr_ids[attr] = spec.cat_value_index(attr, it->second);
  }
  for (const auto& [attr, mm] : spec.num_attr_minmax) {
    if (attr == kArrivalAttr) continue;
    auto it = trace.attrs_num.find(attr);
    if (it == trace.attrs_num.end())
      throw ValidationError("trace '" + trace.id + "': missing numerical attribute '" + attr + "'");
    enc.num_attrs[attr] = minmax_encode(it->second, mm.first, mm.second);
  }
  {
    const auto& mm = spec.num_attr_minmax.at(kArrivalAttr);
    double v = static_cast<double>(trace.start_ms() - spec.t1_reference_ms) / 1000.0;
    enc.num_attrs[kArrivalAttr] = minmax_encode(v, mm.first, mm.second);
  }

  auto it = trace.attrs_cat.find(spec.condition_attr);
  if (it == trace.attrs_cat.end())
    throw ValidationError("trace '" + trace.id + "': missing condition attribute '" +
                          spec.condition_attr + "'");
  if (it->second == "True") enc.condition = 1.0;
  else if (it->second == "False") enc.condition = 0.0;
  else
    throw ValidationError("trace '" + trace.id + "': condition attribute '" + spec.condition_attr +
                          "' must be 'True' or 'False', got '" + it->second + "'");
  return enc;
}

std::vector<EncodedTrace> encode_log(const EventLog& log, const EncodingSpec& spec) {
  std::vector<EncodedTrace> out;
  out.reserve(log.traces.size());
  for (const auto& t : log.traces) out.push_back(encode_trace(t, spec));
  return out;
}

Trace decode_outputs(const RawDecoded& raw, const EncodingSpec& spec, std::int64_t tau_ms) {
  if (raw.activity_ids.empty())
    throw ValidationError("cannot decode an empty activity sequence");
  if (raw.activity_ids.size() != raw.interarrivals.size())
    throw ValidationError("decoded activities and interarrivals are misaligned (" +
                          std::to_string(raw.activity_ids.size()) + " vs " +
                          std::to_string(raw.interarrivals.size()) + ")");
  Trace t;
  const auto& arrival_mm = spec.num_attr_minmax.at(kArrivalAttr);
  double t1_offset_s =
      minmax_decode(raw.num_attrs.at(kArrivalAttr), arrival_mm.first, arrival_mm.second);
  double elapsed_s = 0.0;
  for (size_t i = 0; i < raw.activity_ids.size(); ++i) {
    int id = raw.activity_ids[i];
    if (id < 0 || id >= static_cast<int>(spec.activities.size()))
      throw ValidationError("decoded activity id " + std::to_string(id) + " out of range");
    if (i > 0) elapsed_s += std::max(raw.interarrivals[i], 0.0) * spec.interarrival_p95_s;
    std::int64_t ts = tau_ms + std::llround((t1_offset_s + elapsed_s) * 1000.0);
    t.events.push_back(Event{spec.activities[static_cast<size_t>(id)], ts});
  }
  for (const auto& [attr, id] : raw.cat_attr_ids) {
    const auto& values = spec.cat_attr_values.at(attr);
    if (id < 0 || id >= static_cast<int>(values.size()))
      throw ValidationError("decoded value id " + std::to_string(id) + " out of range for attribute '" +
                            attr + "'");
    t.attrs_cat[attr] = values[static_cast<size_t>(id)];
  }
  for (const auto& [attr, v] : raw.num_attrs) {
    if (attr == kArrivalAttr) continue;
    const auto& mm = spec.num_attr_minmax.at(attr);
    t.attrs_num[attr] = minmax_decode(v, mm.first, mm.second);
  }
  return t;
}

}  // namespace tracegen
