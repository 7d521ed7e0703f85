#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tracegen/commands.hpp"
#include "tracegen/declare.hpp"
#include "tracegen/generate.hpp"
#include "tracegen/metrics.hpp"
#include "tracegen/train.hpp"
#include "tracegen/util.hpp"

namespace py = pybind11;
using namespace tracegen;

namespace {

CommandOptions make_options(const std::string& config, const std::string& out,
                            std::optional<std::uint64_t> seed, bool force,
                            const std::string& checkpoint,
                            const std::vector<std::string>& extra_logs) {
  CommandOptions o;
  o.config_path = config;
  o.out_override = out;
  o.seed_override = seed;
  o.force = force;
  o.checkpoint = checkpoint;
  o.extra_log_dirs = extra_logs;
  return o;
}

}  // namespace

PYBIND11_MODULE(_tracegen, m) {
  m.doc() = "Conditional trace generation for business process event logs";
  m.attr("__version__") = "0.1.0";

  py::register_exception<Error>(m, "TracegenError");

  // ---- event log model ------------------------------------------------------
  py::class_<Event>(m, "Event")
      .def(py::init<>())
      .def(py::init([](std::string activity, std::int64_t ts) {
             return Event{std::move(activity), ts};
           }),
           py::arg("activity"), py::arg("timestamp_ms"))
      .def_readwrite("activity", &Event::activity)
      .def_readwrite("timestamp_ms", &Event::timestamp_ms);

  py::class_<Trace>(m, "Trace")
      .def(py::init<>())
      .def_readwrite("id", &Trace::id)
      .def_readwrite("events", &Trace::events)
      .def_readwrite("attrs_cat", &Trace::attrs_cat)
      .def_readwrite("attrs_num", &Trace::attrs_num)
      .def("start_ms", &Trace::start_ms)
      .def("end_ms", &Trace::end_ms)
      .def("__len__", [](const Trace& t) { return t.events.size(); });

  py::class_<EventLog>(m, "EventLog")
      .def(py::init<>())
      .def_readwrite("traces", &EventLog::traces)
      .def_readwrite("metadata", &EventLog::metadata)
      .def_property_readonly("activity_alphabet",
                             [](const EventLog& l) { return l.activity_alphabet; })
      .def("__len__", &EventLog::size);

  m.def("make_log", &make_log, py::arg("traces"),
        "Build a log from traces, validating and computing the alphabet");
  m.def("parse_iso8601_ms", &parse_iso8601_ms, py::arg("text"));
  m.def("format_iso8601_ms", &format_iso8601_ms, py::arg("timestamp_ms"));

  py::class_<CsvColumnMap>(m, "CsvColumnMap")
      .def(py::init<>())
      .def_readwrite("case_id", &CsvColumnMap::case_id)
      .def_readwrite("activity", &CsvColumnMap::activity)
      .def_readwrite("timestamp", &CsvColumnMap::timestamp)
      .def_readwrite("cat_attrs", &CsvColumnMap::cat_attrs)
      .def_readwrite("num_attrs", &CsvColumnMap::num_attrs)
      .def_readwrite("auto_classify_rest", &CsvColumnMap::auto_classify_rest);

  m.def(
      "parse_xes",
      [](const std::string& path, bool concat_lifecycle) {
        return parse_xes(path, ParseOptions{concat_lifecycle});
      },
      py::arg("path"), py::arg("concat_lifecycle") = false);
  m.def("parse_csv", &parse_csv, py::arg("path"), py::arg("columns") = CsvColumnMap{});
  m.def("write_xes", &write_xes, py::arg("log"), py::arg("path"));
  m.def("write_csv", &write_csv, py::arg("log"), py::arg("path"),
        py::arg("columns") = CsvColumnMap{});

  // ---- labeling and splitting -----------------------------------------------
  py::enum_<LabelerSpec::Kind>(m, "LabelerKind")
      .value("ActivityPresence", LabelerSpec::Kind::ActivityPresence)
      .value("ActivityMultiplicity", LabelerSpec::Kind::ActivityMultiplicity)
      .value("ReturnWithinDelta", LabelerSpec::Kind::ReturnWithinDelta)
      .value("ActivitySetPresence", LabelerSpec::Kind::ActivitySetPresence);

  py::class_<LabelerSpec>(m, "LabelerSpec")
      .def(py::init<>())
      .def_readwrite("kind", &LabelerSpec::kind)
      .def_readwrite("activities", &LabelerSpec::activities)
      .def_readwrite("trigger_activities", &LabelerSpec::trigger_activities)
      .def_readwrite("min_count", &LabelerSpec::min_count)
      .def_readwrite("delta_ms", &LabelerSpec::delta_ms)
      .def("validate", &LabelerSpec::validate);

  m.def("evaluate_labeler", &evaluate_labeler, py::arg("trace"), py::arg("spec"));
  m.def("apply_labeler", &apply_labeler, py::arg("log"), py::arg("spec"), py::arg("attr_name"));
  m.def("strip_attribute", &strip_attribute, py::arg("log"), py::arg("attr_name"));
  m.def("conditional_ratio", &conditional_ratio, py::arg("log"), py::arg("attr_name"));

  py::class_<SplitFractions>(m, "SplitFractions")
      .def(py::init<>())
      .def(py::init([](double train, double val, double test) {
             return SplitFractions{train, val, test};
           }),
           py::arg("train"), py::arg("val"), py::arg("test"))
      .def_readwrite("train", &SplitFractions::train)
      .def_readwrite("val", &SplitFractions::val)
      .def_readwrite("test", &SplitFractions::test);

  m.def(
      "chronological_split",
      [](const EventLog& log, const SplitFractions& f) {
        LogSplit s = chronological_split(log, f);
        return py::make_tuple(std::move(s.train), std::move(s.val), std::move(s.test));
      },
      py::arg("log"), py::arg("fractions") = SplitFractions{});
  m.def("variant_of", &variant_of, py::arg("trace"));
  m.def(
      "variant_set",
      [](const EventLog& log) {
        const auto s = variant_set(log);
        // a sorted list: python sets cannot hold lists
        return std::vector<Variant>(s.begin(), s.end());
      },
      py::arg("log"));

  // ---- preprocessing ---------------------------------------------------------
  py::class_<EncodingSpec>(m, "EncodingSpec")
      .def_readonly("activities", &EncodingSpec::activities)
      .def_readonly("interarrival_p95_s", &EncodingSpec::interarrival_p95_s)
      .def_readonly("t1_reference_ms", &EncodingSpec::t1_reference_ms)
      .def_readonly("max_len", &EncodingSpec::max_len)
      .def_readonly("condition_attr", &EncodingSpec::condition_attr)
      .def("to_json", &EncodingSpec::to_json)
      .def_static("from_json", &EncodingSpec::from_json, py::arg("text"))
      .def("save", &EncodingSpec::save, py::arg("path"))
      .def_static("load", &EncodingSpec::load, py::arg("path"));

  py::class_<EncodedTrace>(m, "EncodedTrace")
      .def_readonly("activity_ids", &EncodedTrace::activity_ids)
      .def_readonly("interarrivals", &EncodedTrace::interarrivals)
      .def_readonly("condition", &EncodedTrace::condition)
      .def("n_events", &EncodedTrace::n_events);

  m.def("fit_encoding", &fit_encoding, py::arg("train"), py::arg("condition_attr"));
  m.def("encode_trace", &encode_trace, py::arg("trace"), py::arg("spec"));
  m.def("encode_log", &encode_log, py::arg("log"), py::arg("spec"));

  // ---- model, training, generation -------------------------------------------
  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("embedding_size", &ModelConfig::embedding_size)
      .def_readwrite("lstm_hidden", &ModelConfig::lstm_hidden)
      .def_readwrite("latent_dim", &ModelConfig::latent_dim)
      .def_readwrite("upsample_dim", &ModelConfig::upsample_dim)
      .def_readwrite("attr_feature_dim", &ModelConfig::attr_feature_dim)
      .def_readwrite("attr_head_hidden", &ModelConfig::attr_head_hidden)
      .def_readwrite("dropout", &ModelConfig::dropout)
      .def("bind_encoding", &ModelConfig::bind_encoding, py::arg("spec"))
      .def("validate", &ModelConfig::validate);

  py::class_<ModelParameters>(m, "Model")
      .def_static("init", &ModelParameters::init, py::arg("config"), py::arg("seed"))
      .def_property_readonly("config", [](const ModelParameters& p) { return p.config; })
      .def("parameter_count", &ModelParameters::parameter_count);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("max_epochs", &TrainConfig::max_epochs)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_readwrite("kl_cycles", &TrainConfig::kl_cycles)
      .def_readwrite("ramp_ratio", &TrainConfig::ramp_ratio)
      .def_readwrite("grad_clip", &TrainConfig::grad_clip)
      .def_readwrite("max_tokens_per_batch", &TrainConfig::max_tokens_per_batch)
      .def_readwrite("seed", &TrainConfig::seed);

  py::class_<LossBreakdown>(m, "LossBreakdown")
      .def_readonly("act_ce", &LossBreakdown::act_ce)
      .def_readonly("t_mse", &LossBreakdown::t_mse)
      .def_readonly("cat_ce", &LossBreakdown::cat_ce)
      .def_readonly("num_mse", &LossBreakdown::num_mse)
      .def_readonly("kl", &LossBreakdown::kl)
      .def_readonly("total", &LossBreakdown::total);

  py::class_<EpochStats>(m, "EpochStats")
      .def_readonly("epoch", &EpochStats::epoch)
      .def_readonly("train", &EpochStats::train)
      .def_readonly("val_loss", &EpochStats::val_loss)
      .def_readonly("beta_mean", &EpochStats::beta_mean)
      .def_readonly("grad_norm", &EpochStats::grad_norm);

  py::class_<TrainResult>(m, "TrainResult")
      .def_property_readonly("model", [](const TrainResult& r) { return r.params; })
      .def_readonly("best_epoch", &TrainResult::best_epoch)
      .def_readonly("best_val", &TrainResult::best_val)
      .def_readonly("trained_epochs", &TrainResult::trained_epochs)
      .def_readonly("stopped_early", &TrainResult::stopped_early)
      .def_readonly("history", &TrainResult::history);

  m.def(
      "train",
      [](const ModelParameters& model, const std::vector<EncodedTrace>& train_set,
         const std::vector<EncodedTrace>& val_set, const TrainConfig& cfg, bool verbose) {
        return train(model, train_set, val_set, cfg, [verbose](const EpochStats& e) {
          if (verbose)
            std::fprintf(stderr, "epoch %4d  train %.4f  val %.4f\n", e.epoch, e.train.total,
                         e.val_loss);
        });
      },
      py::arg("model"), py::arg("train_set"), py::arg("val_set"),
      py::arg("config") = TrainConfig{}, py::arg("verbose") = false,
      py::call_guard<py::gil_scoped_release>());
  m.def("validate_loss", &validate_loss, py::arg("model"), py::arg("val_set"),
        py::arg("batch_size") = 256, py::arg("max_tokens") = 24000);
  m.def("annealing_beta", &annealing_beta, py::arg("step"), py::arg("schedule"));

  py::class_<AnnealSchedule>(m, "AnnealSchedule")
      .def(py::init<>())
      .def_readwrite("total_steps", &AnnealSchedule::total_steps)
      .def_readwrite("n_cycles", &AnnealSchedule::n_cycles)
      .def_readwrite("ramp_ratio", &AnnealSchedule::ramp_ratio);

  m.def(
      "save_model",
      [](const ModelParameters& model, const std::string& path, const std::string& encoding_hash,
         std::uint64_t seed) {
        Checkpoint c;
        c.params = model;
        c.encoding_hash = encoding_hash;
        c.seed = seed;
        save_checkpoint(c, path);
      },
      py::arg("model"), py::arg("path"), py::arg("encoding_hash") = "", py::arg("seed") = 0);
  m.def(
      "load_model", [](const std::string& path) { return load_checkpoint(path).params; },
      py::arg("path"));

  py::class_<GenOptions>(m, "GenOptions")
      .def(py::init<>())
      .def_readwrite("n_traces", &GenOptions::n_traces)
      .def_readwrite("target_ratio", &GenOptions::target_ratio)
      .def_readwrite("bernoulli_conditions", &GenOptions::bernoulli_conditions)
      .def_readwrite("tau_ms", &GenOptions::tau_ms)
      .def_readwrite("max_len", &GenOptions::max_len)
      .def_readwrite("resample_limit", &GenOptions::resample_limit)
      .def_readwrite("seed", &GenOptions::seed)
      .def_readwrite("id_prefix", &GenOptions::id_prefix);

  m.def("generate_log", &generate_log, py::arg("model"), py::arg("spec"), py::arg("options"),
        py::call_guard<py::gil_scoped_release>());
  m.def("what_if_pairs", &what_if_pairs, py::arg("model"), py::arg("spec"), py::arg("n_pairs"),
        py::arg("tau_ms"), py::arg("max_len"), py::arg("seed"),
        py::call_guard<py::gil_scoped_release>());

  // ---- metrics ----------------------------------------------------------------
  m.def("emd_1d", &emd_1d, py::arg("a"), py::arg("b"));
  m.def("relative_event_distribution", &relative_event_distribution, py::arg("gen"),
        py::arg("ref"));
  m.def("cycle_time_distribution", &cycle_time_distribution, py::arg("gen"), py::arg("ref"));
  m.def("two_gram_distance", &two_gram_distance, py::arg("gen"), py::arg("ref"));
  m.def("aposteriori_ratio", &aposteriori_ratio, py::arg("gen"), py::arg("labeler"),
        py::arg("condition_attr"));
  m.def("baseline_blocks", &baseline_blocks, py::arg("train_plus_val"), py::arg("test_size"),
        py::arg("max_blocks") = 4);

  py::class_<DeclareConstraint>(m, "DeclareConstraint")
      .def_property_readonly("template",
                             [](const DeclareConstraint& c) { return template_name(c.tmpl); })
      .def_readonly("a", &DeclareConstraint::a)
      .def_readonly("b", &DeclareConstraint::b)
      .def_readonly("support", &DeclareConstraint::support)
      .def("__repr__", &DeclareConstraint::to_string);

  py::class_<DeclareModel>(m, "DeclareModel")
      .def_readonly("min_support", &DeclareModel::min_support)
      .def_readonly("constraints", &DeclareModel::constraints)
      .def("__len__", [](const DeclareModel& d) { return d.constraints.size(); });

  m.def("mine_declare", &mine_declare, py::arg("log"), py::arg("min_support") = 0.9);
  m.def("trace_conformance", &trace_conformance, py::arg("variant"), py::arg("model"));
  m.def(
      "conformance_score",
      [](const EventLog& gen, const DeclareModel& model, const std::set<Variant>& train_variants) {
        return conformance_score(gen, model, train_variants);
      },
      py::arg("gen"), py::arg("model"), py::arg("train_variants"));

  // ---- pipeline commands --------------------------------------------------------
  const auto bind_command = [&m](const char* name, void (*fn)(const CommandOptions&),
                                 const char* doc) {
    m.def(
        name,
        [fn](const std::string& config, const std::string& out, std::optional<std::uint64_t> seed,
             bool force, const std::string& checkpoint, const std::vector<std::string>& extra) {
          fn(make_options(config, out, seed, force, checkpoint, extra));
        },
        py::arg("config"), py::arg("out") = "", py::arg("seed") = std::nullopt,
        py::arg("force") = false, py::arg("checkpoint") = "",
        py::arg("extra_logs") = std::vector<std::string>{}, doc,
        py::call_guard<py::gil_scoped_release>());
  };
  bind_command("prepare", &cmd_prepare, "Parse, filter, label and split the dataset");
  bind_command("train_command", &cmd_train, "Train on the prepared splits");
  bind_command("generate", &cmd_generate, "Generate conditioned logs from a checkpoint");
  bind_command("evaluate", &cmd_evaluate, "Score generated logs against the test split");
  bind_command("report", &cmd_report, "Render figures and tables from the evaluation");
}
