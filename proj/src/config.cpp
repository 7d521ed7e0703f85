#include <cmath>
#include <filesystem>

#include "json.hpp"

#include "tracegen/config.hpp"
#include "tracegen/util.hpp"

namespace tracegen {

using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

const json& require(const json& j, const std::string& path, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) fail(path + "." + key, "missing");
  return *it;
}

template <typename T>
T get_as(const json& j, const std::string& path, const char* key) {
  try {
    return require(j, path, key).get<T>();
  } catch (const json::exception&) {
    fail(path + "." + key, "wrong type");
  }
}

template <typename T>
T get_or(const json& j, const std::string& path, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail(path + "." + key, "wrong type");
  }
}

std::string labeler_kind_name(LabelerSpec::Kind k) {
  switch (k) {
    case LabelerSpec::Kind::ActivityPresence: return "activity_presence";
    case LabelerSpec::Kind::ActivityMultiplicity: return "activity_multiplicity";
    case LabelerSpec::Kind::ReturnWithinDelta: return "return_within_delta";
    case LabelerSpec::Kind::ActivitySetPresence: return "activity_set_presence";
  }
  return "?";
}

LabelerSpec::Kind labeler_kind_of(const std::string& name, const std::string& path) {
  if (name == "activity_presence") return LabelerSpec::Kind::ActivityPresence;
  if (name == "activity_multiplicity") return LabelerSpec::Kind::ActivityMultiplicity;
  if (name == "return_within_delta") return LabelerSpec::Kind::ReturnWithinDelta;
  if (name == "activity_set_presence") return LabelerSpec::Kind::ActivitySetPresence;
  fail(path, "unknown labeler kind '" + name + "'");
}

std::string filter_type_name(TraceFilter::Type t) {
  switch (t) {
    case TraceFilter::Type::RequireAnyOf: return "require_any_of";
    case TraceFilter::Type::RequireAnyPrefix: return "require_any_prefix";
    case TraceFilter::Type::DropIfLast: return "drop_if_last";
    case TraceFilter::Type::MinEvents: return "min_events";
  }
  return "?";
}

TraceFilter::Type filter_type_of(const std::string& name, const std::string& path) {
  if (name == "require_any_of") return TraceFilter::Type::RequireAnyOf;
  if (name == "require_any_prefix") return TraceFilter::Type::RequireAnyPrefix;
  if (name == "drop_if_last") return TraceFilter::Type::DropIfLast;
  if (name == "min_events") return TraceFilter::Type::MinEvents;
  fail(path, "unknown filter type '" + name + "'");
}

json dataset_to_json(const DatasetConfig& d) {
  json j;
  j["name"] = d.name;
  j["path"] = d.path;
  j["format"] = d.format == LogFormat::XES ? "xes" : "csv";
  if (d.format == LogFormat::CSV) {
    json c;
    c["case_id"] = d.columns.case_id;
    c["activity"] = d.columns.activity;
    c["timestamp"] = d.columns.timestamp;
    c["cat_attrs"] = d.columns.cat_attrs;
    c["num_attrs"] = d.columns.num_attrs;
    c["auto_classify_rest"] = d.columns.auto_classify_rest;
    j["columns"] = c;
  }
  j["concat_lifecycle"] = d.parse.concat_lifecycle;
  json filters = json::array();
  for (const auto& f : d.filters) {
    json g;
    g["type"] = filter_type_name(f.type);
    switch (f.type) {
      case TraceFilter::Type::RequireAnyOf: g["activities"] = f.activities; break;
      case TraceFilter::Type::RequireAnyPrefix: g["prefix"] = f.prefix; break;
      case TraceFilter::Type::DropIfLast: g["activity"] = f.activity; break;
      case TraceFilter::Type::MinEvents: g["min_events"] = f.min_events; break;
    }
    filters.push_back(std::move(g));
  }
  j["filters"] = std::move(filters);
  return j;
}

DatasetConfig dataset_from_json(const json& j) {
  DatasetConfig d;
  const std::string path = "dataset";
  d.name = get_as<std::string>(j, path, "name");
  d.path = get_as<std::string>(j, path, "path");
  const std::string fmt = get_as<std::string>(j, path, "format");
  if (fmt == "xes") d.format = LogFormat::XES;
  else if (fmt == "csv") d.format = LogFormat::CSV;
  else fail(path + ".format", "expected 'xes' or 'csv', got '" + fmt + "'");
  if (auto it = j.find("columns"); it != j.end()) {
    const std::string cp = path + ".columns";
    d.columns.case_id = get_or<std::string>(*it, cp, "case_id", d.columns.case_id);
    d.columns.activity = get_or<std::string>(*it, cp, "activity", d.columns.activity);
    d.columns.timestamp = get_or<std::string>(*it, cp, "timestamp", d.columns.timestamp);
    d.columns.cat_attrs = get_or<std::vector<std::string>>(*it, cp, "cat_attrs", {});
    d.columns.num_attrs = get_or<std::vector<std::string>>(*it, cp, "num_attrs", {});
    d.columns.auto_classify_rest = get_or<bool>(*it, cp, "auto_classify_rest", true);
  }
  d.parse.concat_lifecycle = get_or<bool>(j, path, "concat_lifecycle", false);
  if (auto it = j.find("filters"); it != j.end()) {
    if (!it->is_array()) fail(path + ".filters", "expected an array");
    for (size_t i = 0; i < it->size(); ++i) {
      const json& g = (*it)[i];
      const std::string fp = path + ".filters[" + std::to_string(i) + "]";
      TraceFilter f;
      f.type = filter_type_of(get_as<std::string>(g, fp, "type"), fp + ".type");
      switch (f.type) {
        case TraceFilter::Type::RequireAnyOf:
          f.activities = get_as<std::vector<std::string>>(g, fp, "activities");
          if (f.activities.empty()) fail(fp + ".activities", "must not be empty");
          break;
        case TraceFilter::Type::RequireAnyPrefix:
          f.prefix = get_as<std::string>(g, fp, "prefix");
          if (f.prefix.empty()) fail(fp + ".prefix", "must not be empty");
          break;
        case TraceFilter::Type::DropIfLast:
          f.activity = get_as<std::string>(g, fp, "activity");
          if (f.activity.empty()) fail(fp + ".activity", "must not be empty");
          break;
        case TraceFilter::Type::MinEvents:
          f.min_events = get_as<int>(g, fp, "min_events");
          if (f.min_events < 1) fail(fp + ".min_events", "must be at least 1");
          break;
      }
      d.filters.push_back(std::move(f));
    }
  }
  return d;
}

json label_to_json(const LabelConfig& l) {
  json j;
  j["attr"] = l.attr;
  j["kind"] = labeler_kind_name(l.spec.kind);
  switch (l.spec.kind) {
    case LabelerSpec::Kind::ActivityPresence:
    case LabelerSpec::Kind::ActivitySetPresence:
      j["activities"] = l.spec.activities;
      break;
    case LabelerSpec::Kind::ActivityMultiplicity:
      j["activities"] = l.spec.activities;
      j["min_count"] = l.spec.min_count;
      break;
    case LabelerSpec::Kind::ReturnWithinDelta:
      j["activities"] = l.spec.activities;
      j["trigger_activities"] = l.spec.trigger_activities;
      j["delta_ms"] = l.spec.delta_ms;
      break;
  }
  return j;
}

LabelConfig label_from_json(const json& j) {
  LabelConfig l;
  const std::string path = "label";
  l.attr = get_or<std::string>(j, path, "attr", "condition");
  l.spec.kind = labeler_kind_of(get_as<std::string>(j, path, "kind"), path + ".kind");
  l.spec.activities = get_as<std::vector<std::string>>(j, path, "activities");
  if (l.spec.kind == LabelerSpec::Kind::ActivityMultiplicity)
    l.spec.min_count = get_as<int>(j, path, "min_count");
  if (l.spec.kind == LabelerSpec::Kind::ReturnWithinDelta) {
    l.spec.trigger_activities = get_as<std::vector<std::string>>(j, path, "trigger_activities");
    if (j.contains("delta_ms")) {
      l.spec.delta_ms = get_as<std::int64_t>(j, path, "delta_ms");
    } else if (j.contains("delta_days")) {
      const double days = get_as<double>(j, path, "delta_days");
      l.spec.delta_ms = static_cast<std::int64_t>(std::llround(days * 86400.0 * 1000.0));
    } else {
      fail(path, "return_within_delta needs delta_ms or delta_days");
    }
  }
  return l;
}

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
}

void ExperimentConfig::validate(bool check_files) const {
  if (dataset.name.empty()) fail("dataset.name", "must not be empty");
  if (dataset.path.empty()) fail("dataset.path", "must not be empty");
  if (check_files && !std::filesystem::exists(dataset.path))
    fail("dataset.path", "file not found: " + dataset.path);
  if (label.attr.empty()) fail("label.attr", "must not be empty");
  try {
    label.spec.validate();
  } catch (const Error& e) {
    fail("label", e.what());
  }
  if (split.train <= 0 || split.val <= 0 || split.test <= 0)
    fail("split", "fractions must be positive");
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9)
    fail("split", "fractions must sum to 1");
  if (model.embedding_size <= 0 || model.lstm_hidden <= 0 || model.latent_dim <= 0 ||
      model.upsample_dim <= 0 || model.attr_feature_dim <= 0 || model.attr_head_hidden <= 0)
    fail("model", "all dimensions must be positive");
  if (model.dropout < 0.0 || model.dropout >= 1.0) fail("model.dropout", "must be in [0, 1)");
  train.validate();
  if (gen.n_logs < 1) fail("gen.n_logs", "must be at least 1");
  if (gen.n_traces < 0) fail("gen.n_traces", "must be non-negative");
  if (gen.target_ratio > 1.0) fail("gen.target_ratio", "must be at most 1");
  if (gen.max_len < 0) fail("gen.max_len", "must be non-negative");
  if (gen.resample_limit < 1) fail("gen.resample_limit", "must be at least 1");
  if (gen.what_if_pairs < 0) fail("gen.what_if_pairs", "must be non-negative");
  if (!gen.tau.empty()) {
    try {
      parse_iso8601_ms(gen.tau);
    } catch (const Error& e) {
      fail("gen.tau", e.what());
    }
  }
  if (metrics.declare_support <= 0.0 || metrics.declare_support > 1.0)
    fail("metrics.declare_support", "must be in (0, 1]");
  if (metrics.baseline_blocks < 0) fail("metrics.baseline_blocks", "must be non-negative");
  if (out_dir.empty()) fail("out_dir", "must not be empty");
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "experiment";
  j["dataset"] = dataset_to_json(dataset);
  j["label"] = label_to_json(label);
  j["split"] = {{"train", split.train}, {"val", split.val}, {"test", split.test}};
  j["model"] = {{"embedding_size", model.embedding_size},
                {"lstm_hidden", model.lstm_hidden},
                {"latent_dim", model.latent_dim},
                {"upsample_dim", model.upsample_dim},
                {"attr_feature_dim", model.attr_feature_dim},
                {"attr_head_hidden", model.attr_head_hidden},
                {"dropout", model.dropout}};
  j["train"] = {{"learning_rate", train.learning_rate},
                {"batch_size", train.batch_size},
                {"max_epochs", train.max_epochs},
                {"patience", train.patience},
                {"kl_cycles", train.kl_cycles},
                {"ramp_ratio", train.ramp_ratio},
                {"grad_clip", train.grad_clip},
                {"max_tokens_per_batch", train.max_tokens_per_batch}};
  j["gen"] = {{"n_logs", gen.n_logs},
              {"n_traces", gen.n_traces},
              {"target_ratio", gen.target_ratio},
              {"tau", gen.tau},
              {"max_len", gen.max_len},
              {"resample_limit", gen.resample_limit},
              {"bernoulli_conditions", gen.bernoulli_conditions},
              {"what_if_pairs", gen.what_if_pairs}};
  j["metrics"] = {{"declare_support", metrics.declare_support},
                  {"baseline_blocks", metrics.baseline_blocks}};
  j["out_dir"] = out_dir;
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  const int version = get_or<int>(j, "", "schema_version", 0);
  if (version != 1)
    fail("schema_version", "unsupported version " + std::to_string(version));
  const std::string kind = get_or<std::string>(j, "", "kind", "");
  if (kind != "experiment") fail("kind", "expected 'experiment'");

  ExperimentConfig c;
  c.dataset = dataset_from_json(require(j, "", "dataset"));
  c.label = label_from_json(require(j, "", "label"));
  if (auto it = j.find("split"); it != j.end()) {
    c.split.train = get_as<double>(*it, "split", "train");
    c.split.val = get_as<double>(*it, "split", "val");
    c.split.test = get_as<double>(*it, "split", "test");
  }
  if (auto it = j.find("model"); it != j.end()) {
    const std::string p = "model";
    c.model.embedding_size = get_or<int>(*it, p, "embedding_size", c.model.embedding_size);
    c.model.lstm_hidden = get_or<int>(*it, p, "lstm_hidden", c.model.lstm_hidden);
    c.model.latent_dim = get_or<int>(*it, p, "latent_dim", c.model.latent_dim);
    c.model.upsample_dim = get_or<int>(*it, p, "upsample_dim", c.model.upsample_dim);
    c.model.attr_feature_dim = get_or<int>(*it, p, "attr_feature_dim", c.model.attr_feature_dim);
    c.model.attr_head_hidden = get_or<int>(*it, p, "attr_head_hidden", c.model.attr_head_hidden);
    c.model.dropout = get_or<double>(*it, p, "dropout", c.model.dropout);
  }
  if (auto it = j.find("train"); it != j.end()) {
    const std::string p = "train";
    c.train.learning_rate = get_or<double>(*it, p, "learning_rate", c.train.learning_rate);
    c.train.batch_size = get_or<int>(*it, p, "batch_size", c.train.batch_size);
    c.train.max_epochs = get_or<int>(*it, p, "max_epochs", c.train.max_epochs);
    c.train.patience = get_or<int>(*it, p, "patience", c.train.patience);
    c.train.kl_cycles = get_or<int>(*it, p, "kl_cycles", c.train.kl_cycles);
    c.train.ramp_ratio = get_or<double>(*it, p, "ramp_ratio", c.train.ramp_ratio);
    c.train.grad_clip = get_or<double>(*it, p, "grad_clip", c.train.grad_clip);
    c.train.max_tokens_per_batch =
        get_or<int>(*it, p, "max_tokens_per_batch", c.train.max_tokens_per_batch);
  }
  if (auto it = j.find("gen"); it != j.end()) {
    const std::string p = "gen";
    c.gen.n_logs = get_or<int>(*it, p, "n_logs", c.gen.n_logs);
    c.gen.n_traces = get_or<int>(*it, p, "n_traces", c.gen.n_traces);
    c.gen.target_ratio = get_or<double>(*it, p, "target_ratio", c.gen.target_ratio);
    c.gen.tau = get_or<std::string>(*it, p, "tau", c.gen.tau);
    c.gen.max_len = get_or<int>(*it, p, "max_len", c.gen.max_len);
    c.gen.resample_limit = get_or<int>(*it, p, "resample_limit", c.gen.resample_limit);
    c.gen.bernoulli_conditions =
        get_or<bool>(*it, p, "bernoulli_conditions", c.gen.bernoulli_conditions);
    c.gen.what_if_pairs = get_or<int>(*it, p, "what_if_pairs", c.gen.what_if_pairs);
  }
  if (auto it = j.find("metrics"); it != j.end()) {
    const std::string p = "metrics";
    c.metrics.declare_support = get_or<double>(*it, p, "declare_support", c.metrics.declare_support);
    c.metrics.baseline_blocks = get_or<int>(*it, p, "baseline_blocks", c.metrics.baseline_blocks);
  }
  c.out_dir = get_or<std::string>(j, "", "out_dir", c.out_dir);
  c.set_seed(get_or<std::uint64_t>(j, "", "seed", c.seed));
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_json(read_text_file(path));
}

std::string ExperimentConfig::hash() const { return fnv1a64_hex(to_json()); }

}  // namespace tracegen
