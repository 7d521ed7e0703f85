#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

#include "tracegen/metrics.hpp"
#include "tracegen/util.hpp"

namespace tracegen {

using json = nlohmann::ordered_json;

double emd_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ValidationError("emd_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const size_t na = a.size(), nb = b.size();
  size_t i = 0, j = 0;
  double cost = 0.0, u = 0.0;
  while (i < na && j < nb) {
    // Next quantile breakpoints as exact fractions i+1/na vs j+1/nb.
    const unsigned long long ca = static_cast<unsigned long long>(i + 1) * nb;
    const unsigned long long cb = static_cast<unsigned long long>(j + 1) * na;
    const double next = ca <= cb ? static_cast<double>(i + 1) / static_cast<double>(na)
                                 : static_cast<double>(j + 1) / static_cast<double>(nb);
    cost += (next - u) * std::abs(a[i] - b[j]);
    u = next;
    if (ca <= cb) ++i;
    if (cb <= ca) ++j;
  }
  return cost;
}

namespace {

constexpr double kMsPerHour = 3600.0 * 1000.0;

std::vector<double> event_offsets_hours(const EventLog& log) {
  std::vector<double> out;
  for (const auto& t : log.traces) {
    const std::int64_t t1 = t.start_ms();
    for (const auto& e : t.events)
      out.push_back(static_cast<double>(e.timestamp_ms - t1) / kMsPerHour);
  }
  return out;
}

std::vector<double> cycle_times_hours(const EventLog& log) {
  std::vector<double> out;
  out.reserve(log.traces.size());
  for (const auto& t : log.traces)
    out.push_back(static_cast<double>(t.end_ms() - t.start_ms()) / kMsPerHour);
  return out;
}

std::map<std::pair<std::string, std::string>, double> two_gram_profile(const EventLog& log) {
  std::map<std::pair<std::string, std::string>, double> counts;
  double total = 0.0;
  for (const auto& t : log.traces) {
    std::string prev = "__START__";
    for (const auto& e : t.events) {
      counts[{prev, e.activity}] += 1.0;
      total += 1.0;
      prev = e.activity;
    }
    counts[{prev, "__END__"}] += 1.0;
    total += 1.0;
  }
  for (auto& [k, v] : counts) v /= total;
  return counts;
}

EventLog subset_by_attr(const EventLog& log, const std::string& attr, const std::string& value) {
  EventLog out;
  for (const auto& t : log.traces) {
    auto it = t.attrs_cat.find(attr);
    if (it != t.attrs_cat.end() && it->second == value) out.traces.push_back(t);
  }
  for (const auto& t : out.traces)
    for (const auto& e : t.events) out.activity_alphabet.insert(e.activity);
  return out;
}

}  // namespace

double relative_event_distribution(const EventLog& gen, const EventLog& ref) {
  return emd_1d(event_offsets_hours(gen), event_offsets_hours(ref));
}

double cycle_time_distribution(const EventLog& gen, const EventLog& ref) {
  return emd_1d(cycle_times_hours(gen), cycle_times_hours(ref));
}

double two_gram_distance(const EventLog& gen, const EventLog& ref) {
  if (gen.traces.empty() || ref.traces.empty())
    throw ValidationError("two_gram_distance: empty log");
  const auto p = two_gram_profile(gen);
  const auto q = two_gram_profile(ref);
  double l1 = 0.0;
  auto pi = p.begin();
  auto qi = q.begin();
  while (pi != p.end() || qi != q.end()) {
    if (qi == q.end() || (pi != p.end() && pi->first < qi->first)) {
      l1 += pi->second;
      ++pi;
    } else if (pi == p.end() || qi->first < pi->first) {
      l1 += qi->second;
      ++qi;
    } else {
      l1 += std::abs(pi->second - qi->second);
      ++pi;
      ++qi;
    }
  }
  return 0.5 * l1;
}

VariantStats variant_stats(const EventLog& gen, const std::set<Variant>& train_variants,
                           const std::set<Variant>& test_variants) {
  VariantStats s;
  const auto variants = variant_set(gen);
  s.total = variants.size();
  for (const auto& v : variants) {
    const bool tr = train_variants.count(v) > 0;
    const bool te = test_variants.count(v) > 0;
    if (tr) ++s.in_train;
    if (te) ++s.in_test;
    if (!tr && !te) ++s.novel;
  }
  return s;
}

std::optional<double> conformance_score(const EventLog& gen, const DeclareModel& model,
                                        const std::set<Variant>& train_variants) {
  double sum = 0.0;
  size_t count = 0;
  for (const auto& t : gen.traces) {
    const Variant v = variant_of(t);
    if (train_variants.count(v)) continue;
    sum += trace_conformance(v, model);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

double aposteriori_ratio(const EventLog& gen, const LabelerSpec& labeler,
                         const std::string& condition_attr) {
  EventLog stripped = strip_attribute(gen, condition_attr);
  EventLog relabeled = apply_labeler(stripped, labeler, condition_attr);
  return conditional_ratio(relabeled, condition_attr);
}

LogMetrics compute_log_metrics(const EventLog& gen, const EvalInputs& in) {
  if (!in.test || !in.declare_model || !in.train_variants || !in.test_variants)
    throw ValidationError("compute_log_metrics: incomplete evaluation inputs");
  LogMetrics m;
  m.red = relative_event_distribution(gen, *in.test);
  m.ctd = cycle_time_distribution(gen, *in.test);
  m.two_gd = two_gram_distance(gen, *in.test);
  m.conf = conformance_score(gen, *in.declare_model, *in.train_variants);
  m.variants = variant_stats(gen, *in.train_variants, *in.test_variants);
  m.requested_ratio = conditional_ratio(gen, in.condition_attr);
  if (in.labeler) m.aposteriori = aposteriori_ratio(gen, *in.labeler, in.condition_attr);
  for (const std::string value : {"True", "False"}) {
    EventLog gs = subset_by_attr(gen, in.condition_attr, value);
    EventLog rs = subset_by_attr(*in.test, in.condition_attr, value);
    if (gs.traces.empty() || rs.traces.empty()) continue;
    ConditionSlice slice;
    slice.red = relative_event_distribution(gs, rs);
    slice.ctd = cycle_time_distribution(gs, rs);
    slice.two_gd = two_gram_distance(gs, rs);
    slice.n_gen = gs.traces.size();
    slice.n_ref = rs.traces.size();
    m.by_condition[value] = slice;
  }
  return m;
}

std::vector<EventLog> baseline_blocks(const EventLog& train_plus_val, size_t test_size,
                                      size_t max_blocks) {
  if (test_size == 0) throw ValidationError("baseline_blocks: test size is zero");
  std::vector<const Trace*> ordered;
  ordered.reserve(train_plus_val.traces.size());
  for (const auto& t : train_plus_val.traces) ordered.push_back(&t);
  std::sort(ordered.begin(), ordered.end(), [](const Trace* a, const Trace* b) {
    if (a->start_ms() != b->start_ms()) return a->start_ms() < b->start_ms();
    return a->id < b->id;
  });
  const size_t n = ordered.size();
  const size_t available = std::min(max_blocks, n / test_size);
  std::vector<EventLog> blocks;
  for (size_t k = 0; k < available; ++k) {
    // Block 0 is the newest window, immediately preceding the test period.
    std::vector<Trace> traces;
    traces.reserve(test_size);
    const size_t begin = n - (k + 1) * test_size;
    for (size_t i = begin; i < begin + test_size; ++i) traces.push_back(*ordered[i]);
    blocks.push_back(make_log(std::move(traces)));
  }
  return blocks;
}

MetricAggregate aggregate(const std::vector<double>& values) {
  MetricAggregate a;
  a.values = values;
  if (values.empty()) return a;
  double sum = 0.0;
  a.min = values.front();
  a.max = values.front();
  for (double v : values) {
    sum += v;
    a.min = std::min(a.min, v);
    a.max = std::max(a.max, v);
  }
  a.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return a;
}

ModelEvaluation evaluate_model(const std::string& name, const std::vector<EventLog>& gen_logs,
                               const EvalInputs& in) {
  ModelEvaluation ev;
  ev.name = name;
  std::vector<double> reds, ctds, tgds, confs, aposts, reqs;
  for (const auto& log : gen_logs) {
    LogMetrics m = compute_log_metrics(log, in);
    reds.push_back(m.red);
    ctds.push_back(m.ctd);
    tgds.push_back(m.two_gd);
    if (m.conf) confs.push_back(*m.conf);
    if (m.aposteriori) aposts.push_back(*m.aposteriori);
    reqs.push_back(m.requested_ratio);
    ev.mean_variants += static_cast<double>(m.variants.total);
    ev.mean_in_train += static_cast<double>(m.variants.in_train);
    ev.mean_in_test += static_cast<double>(m.variants.in_test);
    ev.mean_novel += static_cast<double>(m.variants.novel);
    ev.per_log.push_back(std::move(m));
  }
  const double n = static_cast<double>(gen_logs.size());
  if (n > 0) {
    ev.mean_variants /= n;
    ev.mean_in_train /= n;
    ev.mean_in_test /= n;
    ev.mean_novel /= n;
  }
  ev.red = aggregate(reds);
  ev.ctd = aggregate(ctds);
  ev.two_gd = aggregate(tgds);
  if (!confs.empty()) ev.conf = aggregate(confs);
  if (!aposts.empty())
    ev.mean_aposteriori = aggregate(aposts).mean;
  if (!reqs.empty()) ev.mean_requested = aggregate(reqs).mean;
  return ev;
}

// ---- serialization ----------------------------------------------------------

namespace {

json aggregate_to_json(const MetricAggregate& a) {
  json j;
  j["mean"] = a.mean;
  j["stddev"] = a.stddev;
  j["min"] = a.min;
  j["max"] = a.max;
  j["values"] = a.values;
  return j;
}

MetricAggregate aggregate_from_json(const json& j) {
  MetricAggregate a;
  a.mean = j.at("mean").get<double>();
  a.stddev = j.at("stddev").get<double>();
  a.min = j.at("min").get<double>();
  a.max = j.at("max").get<double>();
  a.values = j.at("values").get<std::vector<double>>();
  return a;
}

json log_metrics_to_json(const LogMetrics& m) {
  json j;
  j["red"] = m.red;
  j["ctd"] = m.ctd;
  j["two_gd"] = m.two_gd;
  if (m.conf) j["conf"] = *m.conf;
  else j["conf"] = nullptr;
  j["variants"] = {{"total", m.variants.total},
                   {"in_train", m.variants.in_train},
                   {"in_test", m.variants.in_test},
                   {"novel", m.variants.novel}};
  j["requested_ratio"] = m.requested_ratio;
  if (m.aposteriori) j["aposteriori"] = *m.aposteriori;
  else j["aposteriori"] = nullptr;
  json slices = json::object();
  for (const auto& [value, s] : m.by_condition)
    slices[value] = {{"red", s.red},    {"ctd", s.ctd},     {"two_gd", s.two_gd},
                     {"n_gen", s.n_gen}, {"n_ref", s.n_ref}};
  j["by_condition"] = slices;
  return j;
}

LogMetrics log_metrics_from_json(const json& j) {
  LogMetrics m;
  m.red = j.at("red").get<double>();
  m.ctd = j.at("ctd").get<double>();
  m.two_gd = j.at("two_gd").get<double>();
  if (!j.at("conf").is_null()) m.conf = j.at("conf").get<double>();
  const json& v = j.at("variants");
  m.variants.total = v.at("total").get<size_t>();
  m.variants.in_train = v.at("in_train").get<size_t>();
  m.variants.in_test = v.at("in_test").get<size_t>();
  m.variants.novel = v.at("novel").get<size_t>();
  m.requested_ratio = j.at("requested_ratio").get<double>();
  if (!j.at("aposteriori").is_null()) m.aposteriori = j.at("aposteriori").get<double>();
  for (const auto& [value, s] : j.at("by_condition").items()) {
    ConditionSlice slice;
    slice.red = s.at("red").get<double>();
    slice.ctd = s.at("ctd").get<double>();
    slice.two_gd = s.at("two_gd").get<double>();
    slice.n_gen = s.at("n_gen").get<size_t>();
    slice.n_ref = s.at("n_ref").get<size_t>();
    m.by_condition[value] = slice;
  }
  return m;
}

}  // namespace

std::string report_to_json(const EvaluationReport& report) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "evaluation";
  j["dataset"] = report.dataset;
  j["condition_attr"] = report.condition_attr;
  j["train_ratio"] = report.train_ratio;
  j["test_ratio"] = report.test_ratio;
  j["test_traces"] = report.test_traces;
  j["test_variants"] = report.test_variants;
  json models = json::array();
  for (const auto& ev : report.models) {
    json m;
    m["name"] = ev.name;
    json per_log = json::array();
    for (const auto& lm : ev.per_log) per_log.push_back(log_metrics_to_json(lm));
    m["per_log"] = per_log;
    m["red"] = aggregate_to_json(ev.red);
    m["ctd"] = aggregate_to_json(ev.ctd);
    m["two_gd"] = aggregate_to_json(ev.two_gd);
    if (ev.conf) m["conf"] = aggregate_to_json(*ev.conf);
    else m["conf"] = nullptr;
    m["mean_variants"] = ev.mean_variants;
    m["mean_in_train"] = ev.mean_in_train;
    m["mean_in_test"] = ev.mean_in_test;
    m["mean_novel"] = ev.mean_novel;
    if (ev.mean_aposteriori) m["mean_aposteriori"] = *ev.mean_aposteriori;
    else m["mean_aposteriori"] = nullptr;
    if (ev.mean_requested) m["mean_requested"] = *ev.mean_requested;
    else m["mean_requested"] = nullptr;
    models.push_back(std::move(m));
  }
  j["models"] = std::move(models);
  return j.dump(2) + "\n";
}

EvaluationReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("bad evaluation document: ") + e.what());
  }
  if (j.value("schema_version", 0) != 1 || j.value("kind", "") != "evaluation")
    throw ParseError("not a version-1 evaluation document");
  EvaluationReport r;
  r.dataset = j.at("dataset").get<std::string>();
  r.condition_attr = j.at("condition_attr").get<std::string>();
  r.train_ratio = j.at("train_ratio").get<double>();
  r.test_ratio = j.at("test_ratio").get<double>();
  r.test_traces = j.at("test_traces").get<size_t>();
  r.test_variants = j.at("test_variants").get<size_t>();
  for (const auto& m : j.at("models")) {
    ModelEvaluation ev;
    ev.name = m.at("name").get<std::string>();
    for (const auto& lm : m.at("per_log")) ev.per_log.push_back(log_metrics_from_json(lm));
    ev.red = aggregate_from_json(m.at("red"));
    ev.ctd = aggregate_from_json(m.at("ctd"));
    ev.two_gd = aggregate_from_json(m.at("two_gd"));
    if (!m.at("conf").is_null()) ev.conf = aggregate_from_json(m.at("conf"));
    ev.mean_variants = m.at("mean_variants").get<double>();
    ev.mean_in_train = m.at("mean_in_train").get<double>();
    ev.mean_in_test = m.at("mean_in_test").get<double>();
    ev.mean_novel = m.at("mean_novel").get<double>();
    if (!m.at("mean_aposteriori").is_null())
      ev.mean_aposteriori = m.at("mean_aposteriori").get<double>();
    if (!m.at("mean_requested").is_null()) ev.mean_requested = m.at("mean_requested").get<double>();
    r.models.push_back(std::move(ev));
  }
  return r;
}

void write_metrics_csv(const EvaluationReport& report, const std::string& path) {
  std::ostringstream out;
  out << "model,log_index,metric,value\n";
  for (const auto& ev : report.models) {
    for (size_t i = 0; i < ev.per_log.size(); ++i) {
      const LogMetrics& m = ev.per_log[i];
      out << ev.name << ',' << i << ",red," << format_double(m.red) << '\n';
      out << ev.name << ',' << i << ",ctd," << format_double(m.ctd) << '\n';
      out << ev.name << ',' << i << ",two_gd," << format_double(m.two_gd) << '\n';
      if (m.conf) out << ev.name << ',' << i << ",conf," << format_double(*m.conf) << '\n';
      out << ev.name << ',' << i << ",variants," << m.variants.total << '\n';
      out << ev.name << ',' << i << ",variants_in_train," << m.variants.in_train << '\n';
      out << ev.name << ',' << i << ",variants_in_test," << m.variants.in_test << '\n';
      out << ev.name << ',' << i << ",requested_ratio," << format_double(m.requested_ratio) << '\n';
      if (m.aposteriori)
        out << ev.name << ',' << i << ",aposteriori," << format_double(*m.aposteriori) << '\n';
    }
  }
  write_text_file(path, out.str());
}

}  // namespace tracegen
