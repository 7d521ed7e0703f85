#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "json.hpp"

#include "tracegen/commands.hpp"
#include "tracegen/declare.hpp"
#include "tracegen/generate.hpp"
#include "tracegen/metrics.hpp"
#include "tracegen/report.hpp"
#include "tracegen/train.hpp"
#include "tracegen/util.hpp"

namespace tracegen {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

fs::path resolve(const fs::path& out, const std::string& p) {
  fs::path q(p);
  return q.is_absolute() ? q : out / q;
}

void write_meta(const fs::path& dir, const std::string& stage, const std::string& config_hash,
                json extra = json::object()) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "meta";
  j["stage"] = stage;
  j["config_hash"] = config_hash;
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_text_file((dir / "meta.json").string(), j.dump(2) + "\n");
}

json load_meta(const fs::path& dir, const std::string& stage) {
  const fs::path path = dir / "meta.json";
  if (!fs::exists(path))
    throw Error("missing " + path.string() + "; run the " + stage + " step first");
  json j = json::parse(read_text_file(path.string()));
  if (j.value("stage", "") != stage)
    throw Error(path.string() + " was written by stage '" + j.value("stage", "?") +
                "', expected '" + stage + "'");
  return j;
}

/// Hash guard between pipeline stages: artifacts from a different
/// configuration are refused unless --force overrides.
void check_hash(const json& meta, const std::string& expected, const fs::path& dir, bool force) {
  const std::string found = meta.value("config_hash", "");
  if (found == expected) return;
  if (force) {
    std::fprintf(stderr, "warning: %s was produced under config hash %s (current %s); continuing due to --force\n",
                 dir.string().c_str(), found.c_str(), expected.c_str());
    return;
  }
  throw Error(dir.string() + " was produced under config hash " + found + " but the current config hashes to " +
              expected + "; rerun the earlier stages or pass --force to mix");
}

void guard_rerun(const fs::path& dir, bool force) {
  if (fs::exists(dir / "meta.json") && !force)
    throw Error(dir.string() + " already holds results; pass --force to overwrite");
}

EventLog load_split(const fs::path& prepared, const char* name) {
  const fs::path path = prepared / (std::string(name) + ".xes");
  if (!fs::exists(path))
    throw Error("missing " + path.string() + "; run the prepare step first");
  return parse_xes(path.string());
}

std::string encoding_file_hash(const fs::path& prepared) {
  return fnv1a64_hex(read_text_file((prepared / "encoding.json").string()));
}

json summary_json(const LogSummary& s) {
  json j;
  j["traces"] = s.traces;
  j["variants"] = s.variants;
  j["activities"] = s.activities;
  j["avg_trace_length"] = s.avg_trace_length;
  j["avg_cycle_time_hours"] = s.avg_cycle_time_hours;
  if (s.cond_ratio) j["cond_ratio"] = *s.cond_ratio;
  else j["cond_ratio"] = nullptr;
  return j;
}

std::vector<fs::path> sorted_xes_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".xes")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::string padded_index(int i, int width) {
  std::string s = std::to_string(i);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

ExperimentConfig load_config(const CommandOptions& opts, bool check_files) {
  if (opts.config_path.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = ExperimentConfig::load(opts.config_path);
  if (!opts.out_override.empty()) cfg.out_dir = opts.out_override;
  if (opts.seed_override) cfg.set_seed(*opts.seed_override);
  cfg.validate(check_files);
  return cfg;
}

void cmd_prepare(const CommandOptions& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const fs::path out(cfg.out_dir);
  const fs::path prepared = out / "prepared";
  guard_rerun(prepared, opts.force);
  fs::create_directories(prepared);

  EventLog log = parse_log(cfg.dataset.path, cfg.dataset.format,
                           cfg.dataset.format == LogFormat::CSV
                               ? std::optional<CsvColumnMap>(cfg.dataset.columns)
                               : std::nullopt,
                           cfg.dataset.parse);
  const size_t parsed = log.size();
  log = apply_filters(log, cfg.dataset.filters);
  if (log.empty()) throw Error("no traces left after filtering");
  log = apply_labeler(log, cfg.label.spec, cfg.label.attr);

  LogSplit split = chronological_split(log, cfg.split);
  write_xes(split.train, (prepared / "train.xes").string());
  write_xes(split.val, (prepared / "val.xes").string());
  write_xes(split.test, (prepared / "test.xes").string());

  EncodingSpec spec = fit_encoding(split.train, cfg.label.attr);
  spec.save((prepared / "encoding.json").string());

  std::vector<std::pair<std::string, LogSummary>> rows;
  rows.emplace_back("full", summarize(log, cfg.label.attr));
  rows.emplace_back("train", summarize(split.train, cfg.label.attr));
  if (!split.val.empty()) rows.emplace_back("val", summarize(split.val, cfg.label.attr));
  rows.emplace_back("test", summarize(split.test, cfg.label.attr));
  json sj;
  sj["schema_version"] = 1;
  sj["kind"] = "summary";
  sj["dataset"] = cfg.dataset.name;
  for (const auto& [name, s] : rows) sj[name] = summary_json(s);
  write_text_file((prepared / "summary.json").string(), sj.dump(2) + "\n");
  write_text_file((prepared / "summary.md").string(),
                  "# " + cfg.dataset.name + "\n\n" + summary_table_md(rows));

  std::int64_t first_start = log.traces.front().start_ms();
  for (const auto& t : log.traces) first_start = std::min(first_start, t.start_ms());
  json extra;
  extra["dataset"] = cfg.dataset.name;
  extra["parsed_traces"] = parsed;
  extra["kept_traces"] = log.size();
  extra["train_traces"] = split.train.size();
  extra["val_traces"] = split.val.size();
  extra["test_traces"] = split.test.size();
  extra["first_start_ms"] = first_start;
  extra["encoding_hash"] = encoding_file_hash(prepared);
  write_meta(prepared, "prepare", cfg.hash(), extra);

  std::printf("prepared %zu traces (of %zu parsed) -> train %zu / val %zu / test %zu\n",
              log.size(), parsed, split.train.size(), split.val.size(), split.test.size());
  std::printf("%s", summary_table_md(rows).c_str());
}

void cmd_train(const CommandOptions& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const fs::path out(cfg.out_dir);
  const fs::path prepared = out / "prepared";
  const fs::path model_dir = out / "model";
  check_hash(load_meta(prepared, "prepare"), cfg.hash(), prepared, opts.force);
  guard_rerun(model_dir, opts.force);

  EncodingSpec spec = EncodingSpec::load((prepared / "encoding.json").string());
  const std::string enc_hash = encoding_file_hash(prepared);
  const std::vector<EncodedTrace> train_set = encode_log(load_split(prepared, "train"), spec);
  const std::vector<EncodedTrace> val_set = encode_log(load_split(prepared, "val"), spec);
  if (val_set.empty()) throw Error("validation split is empty; early stopping needs one");

  ModelConfig mc = cfg.model;
  mc.bind_encoding(spec);
  mc.validate();

  ModelParameters params = ModelParameters::init(mc, cfg.seed);
  std::optional<OptState> resume_opt;
  int start_epoch = 0;
  if (!opts.checkpoint.empty()) {
    Checkpoint prev = load_checkpoint(resolve(out, opts.checkpoint).string());
    if (prev.encoding_hash != enc_hash)
      throw ConfigError("checkpoint " + opts.checkpoint + " was trained with encoding " +
                        prev.encoding_hash + " but the prepared encoding hashes to " + enc_hash);
    params = std::move(prev.params);
    resume_opt = std::move(prev.opt);
    start_epoch = prev.trained_epochs;
  }
  std::printf("training %lld parameters on %zu traces (val %zu)\n",
              static_cast<long long>(params.parameter_count()), train_set.size(), val_set.size());

  TrainResult result = train(
      std::move(params), train_set, val_set, cfg.train,
      [](const EpochStats& e) {
        std::fprintf(stderr,
                     "epoch %4d  train %.4f (act %.3f t %.3f kl %.3f)  val %.4f  beta %.2f\n",
                     e.epoch, e.train.total, e.train.act_ce, e.train.t_mse, e.train.kl, e.val_loss,
                     e.beta_mean);
      },
      resume_opt, start_epoch);

  fs::create_directories(model_dir);
  Checkpoint ckpt;
  ckpt.params = std::move(result.params);
  ckpt.encoding_hash = enc_hash;
  ckpt.trained_epochs = result.trained_epochs;
  ckpt.best_epoch = result.best_epoch;
  ckpt.best_val = result.best_val;
  ckpt.seed = cfg.seed;
  ckpt.opt = result.opt;
  save_checkpoint(ckpt, (model_dir / "checkpoint.cbor").string());
  write_history_csv(result.history, (model_dir / "history.csv").string());

  json extra;
  extra["encoding_hash"] = enc_hash;
  extra["trained_epochs"] = result.trained_epochs;
  extra["best_epoch"] = result.best_epoch;
  extra["best_val"] = result.best_val;
  extra["stopped_early"] = result.stopped_early;
  extra["parameter_count"] = ckpt.params.parameter_count();
  write_meta(model_dir, "train", cfg.hash(), extra);
  std::printf("best validation %.6f at epoch %d (%d epochs run%s)\n", result.best_val,
              result.best_epoch, result.trained_epochs,
              result.stopped_early ? ", stopped early" : "");
}

void cmd_generate(const CommandOptions& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const fs::path out(cfg.out_dir);
  const fs::path prepared = out / "prepared";
  const fs::path gen_dir = out / "generated";
  const json prep_meta = load_meta(prepared, "prepare");
  check_hash(prep_meta, cfg.hash(), prepared, opts.force);
  guard_rerun(gen_dir, opts.force);

  const fs::path ckpt_path = opts.checkpoint.empty() ? out / "model" / "checkpoint.cbor"
                                                     : resolve(out, opts.checkpoint);
  if (!fs::exists(ckpt_path))
    throw Error("missing checkpoint " + ckpt_path.string() + "; run the train step first");
  Checkpoint ckpt = load_checkpoint(ckpt_path.string());
  EncodingSpec spec = EncodingSpec::load((prepared / "encoding.json").string());
  const std::string enc_hash = encoding_file_hash(prepared);
  if (ckpt.encoding_hash != enc_hash)
    throw ConfigError("checkpoint " + ckpt_path.string() + " was trained with encoding " +
                      ckpt.encoding_hash + " but the prepared encoding hashes to " + enc_hash);

  const EventLog train_log = load_split(prepared, "train");
  const EventLog test_log = load_split(prepared, "test");
  GenOptions base;
  base.n_traces = cfg.gen.n_traces > 0 ? cfg.gen.n_traces : static_cast<int>(test_log.size());
  base.target_ratio = cfg.gen.target_ratio >= 0.0 ? cfg.gen.target_ratio
                                                  : conditional_ratio(train_log, cfg.label.attr);
  base.bernoulli_conditions = cfg.gen.bernoulli_conditions;
  base.tau_ms = cfg.gen.tau.empty() ? prep_meta.at("first_start_ms").get<std::int64_t>()
                                    : parse_iso8601_ms(cfg.gen.tau);
  base.max_len = cfg.gen.max_len;
  base.resample_limit = cfg.gen.resample_limit;

  fs::create_directories(gen_dir);
  const int width = std::max(2, static_cast<int>(std::to_string(cfg.gen.n_logs - 1).size()));
  json files = json::array();
  for (int i = 0; i < cfg.gen.n_logs; ++i) {
    GenOptions o = base;
    o.seed = cfg.seed + static_cast<std::uint64_t>(i);
    EventLog gen = generate_log(ckpt.params, spec, o);
    gen.metadata["generator:config_hash"] = cfg.hash();
    const std::string stem = "gen_" + padded_index(i, width);
    write_xes(gen, (gen_dir / (stem + ".xes")).string());
    write_csv(gen, (gen_dir / (stem + ".csv")).string());
    files.push_back(stem + ".xes");
    std::printf("wrote %s: %zu traces, requested ratio %.4f\n", (stem + ".xes").c_str(),
                gen.size(), o.target_ratio);
  }
  if (cfg.gen.what_if_pairs > 0) {
    auto [on, off] = what_if_pairs(ckpt.params, spec, cfg.gen.what_if_pairs, base.tau_ms,
                                   base.max_len, cfg.seed);
    on.metadata["generator:config_hash"] = cfg.hash();
    off.metadata["generator:config_hash"] = cfg.hash();
    write_xes(on, (gen_dir / "what_if_true.xes").string());
    write_xes(off, (gen_dir / "what_if_false.xes").string());
  }

  json extra;
  extra["files"] = files;
  extra["n_traces"] = base.n_traces;
  extra["target_ratio"] = base.target_ratio;
  extra["tau_ms"] = base.tau_ms;
  extra["max_len"] = base.max_len > 0 ? base.max_len : spec.max_len;
  extra["encoding_hash"] = enc_hash;
  write_meta(gen_dir, "generate", cfg.hash(), extra);
}

void cmd_evaluate(const CommandOptions& opts) {
  const ExperimentConfig cfg = load_config(opts, /*check_files=*/false);
  const fs::path out(cfg.out_dir);
  const fs::path prepared = out / "prepared";
  const fs::path gen_dir = out / "generated";
  const fs::path results = out / "results";
  check_hash(load_meta(prepared, "prepare"), cfg.hash(), prepared, opts.force);
  check_hash(load_meta(gen_dir, "generate"), cfg.hash(), gen_dir, opts.force);
  guard_rerun(results, opts.force);

  const EventLog train_log = load_split(prepared, "train");
  const EventLog val_log = load_split(prepared, "val");
  const EventLog test_log = load_split(prepared, "test");

  std::printf("mining constraints on %zu training traces (support %.2f)...\n", train_log.size(),
              cfg.metrics.declare_support);
  const DeclareModel dm = mine_declare(train_log, cfg.metrics.declare_support);
  const std::set<Variant> train_variants = variant_set(train_log);
  const std::set<Variant> test_variants = variant_set(test_log);

  EvalInputs in;
  in.test = &test_log;
  in.declare_model = &dm;
  in.train_variants = &train_variants;
  in.test_variants = &test_variants;
  in.labeler = &cfg.label.spec;
  in.condition_attr = cfg.label.attr;

  EvaluationReport report;
  report.dataset = cfg.dataset.name;
  report.condition_attr = cfg.label.attr;
  report.train_ratio = conditional_ratio(train_log, cfg.label.attr);
  report.test_ratio = conditional_ratio(test_log, cfg.label.attr);
  report.test_traces = test_log.size();
  report.test_variants = test_variants.size();

  const auto score_dir = [&](const std::string& name, const fs::path& dir) {
    std::vector<EventLog> logs;
    for (const fs::path& f : sorted_xes_files(dir)) {
      if (f.filename().string().rfind("what_if", 0) == 0) continue;
      logs.push_back(parse_xes(f.string()));
    }
    if (logs.empty()) throw Error("no .xes logs in " + dir.string());
    std::printf("scoring %zu logs from %s as '%s'...\n", logs.size(), dir.string().c_str(),
                name.c_str());
    report.models.push_back(evaluate_model(name, logs, in));
  };
  score_dir("cvae", gen_dir);
  for (const std::string& extra : opts.extra_log_dirs) {
    const fs::path dir = resolve(out, extra);
    score_dir(dir.filename().string(), dir);
  }

  if (cfg.metrics.baseline_blocks > 0) {
    std::vector<Trace> pool = train_log.traces;
    pool.insert(pool.end(), val_log.traces.begin(), val_log.traces.end());
    std::vector<EventLog> blocks =
        baseline_blocks(make_log(std::move(pool)), test_log.size(),
                        static_cast<size_t>(cfg.metrics.baseline_blocks));
    if (blocks.empty()) {
      std::fprintf(stderr, "warning: train+val smaller than the test log; baseline skipped\n");
    } else {
      std::printf("scoring %zu train_log baseline blocks...\n", blocks.size());
      report.models.push_back(evaluate_model("train_log", blocks, in));
    }
  }

  fs::create_directories(results);
  write_text_file((results / "report.json").string(), report_to_json(report));
  write_metrics_csv(report, (results / "metrics_long.csv").string());
  json extra;
  extra["models"] = json::array();
  for (const auto& ev : report.models) extra["models"].push_back(ev.name);
  write_meta(results, "evaluate", cfg.hash(), extra);

  for (const auto& ev : report.models) {
    std::printf("%-12s RED %.3f±%.3f  CTD %.3f±%.3f  2GD %.3f±%.3f", ev.name.c_str(), ev.red.mean,
                ev.red.stddev, ev.ctd.mean, ev.ctd.stddev, ev.two_gd.mean, ev.two_gd.stddev);
    if (ev.conf) std::printf("  CONF %.3f", ev.conf->mean);
    if (ev.mean_aposteriori) std::printf("  ratio %.4f", *ev.mean_aposteriori);
    std::printf("\n");
  }
}

void cmd_report(const CommandOptions& opts) {
  const ExperimentConfig cfg = load_config(opts, /*check_files=*/false);
  const fs::path out(cfg.out_dir);
  const fs::path results = out / "results";
  check_hash(load_meta(results, "evaluate"), cfg.hash(), results, opts.force);
  const fs::path report_path = results / "report.json";
  if (!fs::exists(report_path))
    throw Error("missing " + report_path.string() + "; run the evaluate step first");
  EvaluationReport report = report_from_json(read_text_file(report_path.string()));
  if (report.models.empty()) throw Error("evaluation report holds no models");

  const fs::path report_dir = out / "report";
  const std::vector<std::string> files = write_report_files(report, report_dir.string());
  write_meta(report_dir, "report", cfg.hash());
  for (const std::string& f : files) std::printf("wrote %s\n", (report_dir / f).string().c_str());
}

}  // namespace tracegen
