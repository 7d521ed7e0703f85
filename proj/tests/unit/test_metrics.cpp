#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"
#include "tracegen/metrics.hpp"
#include "tracegen/util.hpp"

using namespace tracegen;
using namespace tracegen::testsupport;

namespace {

Trace timed_trace(const std::string& id, std::int64_t t0_ms,
                  const std::vector<std::string>& activities, std::int64_t gap_ms) {
  Trace t;
  t.id = id;
  for (size_t i = 0; i < activities.size(); ++i)
    t.events.push_back({activities[i], t0_ms + static_cast<std::int64_t>(i) * gap_ms});
  return t;
}

Trace labeled(Trace t, const std::string& value) {
  t.attrs_cat["condition"] = value;
  return t;
}

constexpr std::int64_t kHour = 3600 * 1000;

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("emd_1d closed forms") {
  CHECK(emd_1d({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.0);
  CHECK(emd_1d({0.0}, {1.0}) == doctest::Approx(1.0));
  CHECK(emd_1d({1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}) == doctest::Approx(3.0));
  CHECK(emd_1d({0.0}, {0.0, 1.0}) == doctest::Approx(0.5));
  CHECK(emd_1d({0.0, 0.0, 0.0, 3.0}, {1.0, 1.0, 1.0, 1.0}) == doctest::Approx(1.25));
  CHECK(emd_1d({0.0, 2.0}, {1.0}) == doctest::Approx(1.0));
  // Order of the inputs is irrelevant (they are sorted internally).
  CHECK(emd_1d({3.0, 1.0, 2.0}, {6.0, 4.0, 5.0}) == doctest::Approx(3.0));
  CHECK(emd_1d({5.0, 1.0}, {2.0, 4.0}) == emd_1d({1.0, 5.0}, {4.0, 2.0}));
  CHECK_THROWS_AS(emd_1d({}, {1.0}), ValidationError);
  CHECK_THROWS_AS(emd_1d({1.0}, {}), ValidationError);
}

TEST_CASE("emd_1d properties: symmetry, shift invariance, scaling") {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> val(-5.0, 5.0);
  std::uniform_int_distribution<int> len(1, 6);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> a(static_cast<size_t>(len(rng))), b(static_cast<size_t>(len(rng)));
    for (auto& x : a) x = val(rng);
    for (auto& x : b) x = val(rng);
    const double d = emd_1d(a, b);
    CHECK(d >= 0.0);
    CHECK(emd_1d(b, a) == doctest::Approx(d).epsilon(1e-12));
    std::vector<double> a_shift = a, b_shift = b, a_scaled = a, b_scaled = b;
    for (auto& x : a_shift) x += 7.25;
    for (auto& x : b_shift) x += 7.25;
    for (auto& x : a_scaled) x *= 3.0;
    for (auto& x : b_scaled) x *= 3.0;
    CHECK(emd_1d(a_shift, b_shift) == doctest::Approx(d).epsilon(1e-9));
    CHECK(emd_1d(a_scaled, b_scaled) == doctest::Approx(3.0 * d).epsilon(1e-9));
  }
}

TEST_CASE("emd_1d matches the min-cost-flow oracle") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> val(-4.0, 4.0);
  std::uniform_int_distribution<int> len(1, 5);
  for (int it = 0; it < 200; ++it) {
    std::vector<double> a(static_cast<size_t>(len(rng))), b(static_cast<size_t>(len(rng)));
    for (auto& x : a) x = val(rng);
    for (auto& x : b) x = val(rng);
    const double fast = emd_1d(a, b);
    const double slow = testsupport::emd_transport_oracle(a, b);
    CAPTURE(it);
    CHECK(fast == doctest::Approx(slow).epsilon(1e-9));
  }
}

TEST_CASE("event-offset and cycle-time distances work in hours") {
  EventLog gen = make_log({timed_trace("g1", 50 * kHour, {"A", "B"}, 2 * kHour)});
  EventLog ref = make_log({timed_trace("r1", 9000, {"A", "B"}, kHour)});
  // Offsets from the trace start: {0, 2} vs {0, 1} hours; absolute time cancels.
  CHECK(relative_event_distribution(gen, ref) == doctest::Approx(0.5));
  CHECK(cycle_time_distribution(gen, ref) == doctest::Approx(1.0));
  CHECK(relative_event_distribution(gen, gen) == 0.0);
  CHECK(cycle_time_distribution(ref, ref) == 0.0);
}

TEST_CASE("two_gram_distance hand-verified profiles") {
  EventLog ab = make_log({timed_trace("t1", 0, {"A", "B"}, 1000)});
  EventLog ac = make_log({timed_trace("t2", 0, {"A", "C"}, 1000)});
  EventLog a = make_log({timed_trace("t3", 0, {"A"}, 1000)});
  EventLog b = make_log({timed_trace("t4", 0, {"B"}, 1000)});

  CHECK(two_gram_distance(ab, ab) == 0.0);
  CHECK(two_gram_distance(a, b) == doctest::Approx(1.0));  // disjoint profiles
  // {(S,A),(A,B),(B,E)} vs {(S,A),(A,C),(C,E)}: shared mass 1/3.
  CHECK(two_gram_distance(ab, ac) == doctest::Approx(2.0 / 3.0));
  CHECK(two_gram_distance(ab, ac) == two_gram_distance(ac, ab));

  // Repeating the same traces does not move the profile.
  EventLog ab2 = make_log({timed_trace("t5", 0, {"A", "B"}, 1000),
                           timed_trace("t6", 5000, {"A", "B"}, 2000)});
  CHECK(two_gram_distance(ab, ab2) == doctest::Approx(0.0));

  EventLog empty;
  CHECK_THROWS_AS(two_gram_distance(empty, ab), ValidationError);
}

TEST_CASE("variant_stats classifies against train and test") {
  std::set<Variant> train{{"A", "B"}, {"A", "B", "B"}};
  std::set<Variant> test{{"A", "C"}, {"A", "B", "B"}};
  EventLog gen = make_log({
      timed_trace("g1", 0, {"A", "B"}, 1000),       // in train only
      timed_trace("g2", 0, {"A", "C"}, 1000),       // in test only
      timed_trace("g3", 0, {"A", "B", "B"}, 1000),  // in both
      timed_trace("g4", 0, {"C", "C"}, 1000),       // novel
      timed_trace("g5", 9, {"A", "B"}, 777),        // duplicate variant, counted once
  });
  VariantStats s = variant_stats(gen, train, test);
  CHECK(s.total == 4);
  CHECK(s.in_train == 2);
  CHECK(s.in_test == 2);
  CHECK(s.novel == 1);
}

TEST_CASE("conformance_score averages novel-variant traces only") {
  DeclareModel model;
  model.constraints.push_back({DeclareTemplate::Existence, "A", "", 1.0});
  model.constraints.push_back({DeclareTemplate::Response, "A", "B", 1.0});
  std::set<Variant> train{{"A", "B"}};

  EventLog gen = make_log({
      timed_trace("g1", 0, {"A", "B"}, 1000),  // training variant: excluded
      timed_trace("g2", 0, {"A"}, 1000),       // novel: Existence yes, Response no -> 0.5
      timed_trace("g3", 0, {"A", "B", "A", "B"}, 1000),  // novel: both -> 1.0
  });
  std::optional<double> score = conformance_score(gen, model, train);
  REQUIRE(score.has_value());
  CHECK(*score == doctest::Approx(0.75));

  EventLog all_known = make_log({timed_trace("g1", 0, {"A", "B"}, 1000)});
  CHECK_FALSE(conformance_score(all_known, model, train).has_value());
}

TEST_CASE("aposteriori_ratio re-applies the labeler from scratch") {
  LabelerSpec labeler = ticket_labeler();  // ActivityPresence("Escalate")
  EventLog gen = make_log({
      labeled(timed_trace("g1", 0, {"Open", "Escalate"}, 1000), "True"),
      labeled(timed_trace("g2", 0, {"Open", "Close"}, 1000), "True"),  // mislabeled on purpose
      labeled(timed_trace("g3", 0, {"Open", "Escalate"}, 1000), "False"),
      labeled(timed_trace("g4", 0, {"Open", "Close"}, 1000), "False"),
  });
  // Two of four traces actually contain Escalate, whatever the stamps say.
  CHECK(aposteriori_ratio(gen, labeler, "condition") == doctest::Approx(0.5));
}

TEST_CASE("compute_log_metrics wires every field") {
  EventLog test_log = make_log({
      labeled(timed_trace("r1", 0, {"A", "B"}, kHour), "True"),
      labeled(timed_trace("r2", 0, {"A", "C"}, 2 * kHour), "False"),
  });
  EventLog gen = make_log({
      labeled(timed_trace("g1", 0, {"A", "B"}, kHour), "True"),
      labeled(timed_trace("g2", 0, {"A", "C"}, 2 * kHour), "False"),
  });
  std::set<Variant> train{{"A", "B"}};
  std::set<Variant> test_variants = variant_set(test_log);
  DeclareModel model;
  model.constraints.push_back({DeclareTemplate::Existence, "A", "", 1.0});

  EvalInputs in;
  in.test = &test_log;
  in.declare_model = &model;
  in.train_variants = &train;
  in.test_variants = &test_variants;
  in.condition_attr = "condition";

  LogMetrics m = compute_log_metrics(gen, in);
  CHECK(m.red == 0.0);
  CHECK(m.ctd == 0.0);
  CHECK(m.two_gd == 0.0);
  CHECK(m.requested_ratio == doctest::Approx(0.5));
  REQUIRE(m.conf.has_value());
  CHECK(*m.conf == doctest::Approx(1.0));  // the one novel trace contains A
  CHECK_FALSE(m.aposteriori.has_value());  // no labeler provided
  CHECK(m.variants.total == 2);
  CHECK(m.variants.in_train == 1);
  CHECK(m.variants.in_test == 2);
  CHECK(m.variants.novel == 0);
  REQUIRE(m.by_condition.count("True") == 1);
  REQUIRE(m.by_condition.count("False") == 1);
  CHECK(m.by_condition.at("True").n_gen == 1);
  CHECK(m.by_condition.at("True").n_ref == 1);
  CHECK(m.by_condition.at("True").red == 0.0);

  // A slice is dropped when either side lacks that condition value.
  EventLog only_true = make_log({labeled(timed_trace("g1", 0, {"A", "B"}, kHour), "True")});
  LogMetrics m2 = compute_log_metrics(only_true, in);
  CHECK(m2.by_condition.count("True") == 1);
  CHECK(m2.by_condition.count("False") == 0);

  EvalInputs incomplete;
  incomplete.test = &test_log;
  CHECK_THROWS_AS(compute_log_metrics(gen, incomplete), ValidationError);
}

TEST_CASE("baseline_blocks carves newest-first test-sized windows") {
  std::vector<Trace> traces;
  for (int i = 0; i < 10; ++i)
    traces.push_back(timed_trace("t" + std::to_string(i), i * 10 * kHour, {"A", "B"}, kHour));
  EventLog log = make_log(traces);

  auto blocks = baseline_blocks(log, 3, 4);
  REQUIRE(blocks.size() == 3);  // floor(10 / 3)
  auto ids = [](const EventLog& l) {
    std::vector<std::string> out;
    for (const auto& t : l.traces) out.push_back(t.id);
    return out;
  };
  CHECK(ids(blocks[0]) == std::vector<std::string>{"t7", "t8", "t9"});  // newest window first
  CHECK(ids(blocks[1]) == std::vector<std::string>{"t4", "t5", "t6"});
  CHECK(ids(blocks[2]) == std::vector<std::string>{"t1", "t2", "t3"});

  CHECK(baseline_blocks(log, 3, 2).size() == 2);
  CHECK(baseline_blocks(log, 10, 4).size() == 1);
  CHECK(baseline_blocks(log, 11, 4).empty());
  CHECK_THROWS_AS(baseline_blocks(log, 0, 4), ValidationError);

  // Blocks are chronological even when the input ordering is scrambled.
  std::reverse(traces.begin(), traces.end());
  auto scrambled = baseline_blocks(make_log(traces), 3, 1);
  CHECK(ids(scrambled[0]) == std::vector<std::string>{"t7", "t8", "t9"});
}

TEST_CASE("aggregate computes population statistics") {
  MetricAggregate empty = aggregate({});
  CHECK(empty.values.empty());
  CHECK(empty.mean == 0.0);

  MetricAggregate one = aggregate({2.0});
  CHECK(one.mean == 2.0);
  CHECK(one.stddev == 0.0);
  CHECK(one.min == 2.0);
  CHECK(one.max == 2.0);

  MetricAggregate four = aggregate({1.0, 2.0, 3.0, 4.0});
  CHECK(four.mean == doctest::Approx(2.5));
  CHECK(four.stddev == doctest::Approx(std::sqrt(1.25)));  // divides by n, not n-1
  CHECK(four.min == 1.0);
  CHECK(four.max == 4.0);
  CHECK(four.values == std::vector<double>{1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("evaluate_model aggregates per-log metrics") {
  EventLog test_log = make_log({
      labeled(timed_trace("r1", 0, {"A", "B"}, kHour), "True"),
      labeled(timed_trace("r2", 0, {"A", "C"}, 2 * kHour), "False"),
  });
  std::set<Variant> train{{"A", "B"}, {"A", "C"}};
  std::set<Variant> test_variants = variant_set(test_log);
  DeclareModel model;
  model.constraints.push_back({DeclareTemplate::Existence, "A", "", 1.0});

  EvalInputs in;
  in.test = &test_log;
  in.declare_model = &model;
  in.train_variants = &train;
  in.test_variants = &test_variants;
  in.condition_attr = "condition";

  EventLog known = make_log({labeled(timed_trace("g1", 0, {"A", "B"}, kHour), "True")});
  EventLog novel = make_log({labeled(timed_trace("g2", 0, {"A", "A"}, kHour), "True")});

  ModelEvaluation ev = evaluate_model("cvae", {known, novel}, in);
  CHECK(ev.name == "cvae");
  REQUIRE(ev.per_log.size() == 2);
  CHECK(ev.red.values.size() == 2);
  CHECK(ev.ctd.values.size() == 2);
  CHECK(ev.two_gd.values.size() == 2);
  REQUIRE(ev.conf.has_value());
  CHECK(ev.conf->values.size() == 1);  // only the second log had novel variants
  CHECK(ev.mean_variants == doctest::Approx(1.0));
  CHECK(ev.mean_in_train == doctest::Approx(0.5));
  CHECK(ev.mean_novel == doctest::Approx(0.5));
  REQUIRE(ev.mean_requested.has_value());
  CHECK(*ev.mean_requested == doctest::Approx(1.0));
  CHECK_FALSE(ev.mean_aposteriori.has_value());
}

TEST_CASE("evaluation report JSON round-trip") {
  EvaluationReport report;
  report.dataset = "tickets";
  report.condition_attr = "condition";
  report.train_ratio = 0.35;
  report.test_ratio = 0.4;
  report.test_traces = 20;
  report.test_variants = 7;

  ModelEvaluation ev;
  ev.name = "cvae";
  LogMetrics a;
  a.red = 0.5;
  a.ctd = 1.5;
  a.two_gd = 0.25;
  a.conf = 0.75;
  a.variants = {4, 2, 1, 1};
  a.requested_ratio = 0.5;
  a.aposteriori = 0.4;
  ConditionSlice slice;
  slice.red = 0.1;
  slice.ctd = 0.2;
  slice.two_gd = 0.3;
  slice.n_gen = 3;
  slice.n_ref = 5;
  a.by_condition["True"] = slice;
  LogMetrics b;
  b.red = 0.6;
  b.ctd = 1.6;
  b.two_gd = 0.35;  // conf and aposteriori stay unset
  b.requested_ratio = 0.5;
  ev.per_log = {a, b};
  ev.red = aggregate({a.red, b.red});
  ev.ctd = aggregate({a.ctd, b.ctd});
  ev.two_gd = aggregate({a.two_gd, b.two_gd});
  ev.conf = aggregate({0.75});
  ev.mean_variants = 4.0;
  ev.mean_in_train = 2.0;
  ev.mean_in_test = 1.0;
  ev.mean_novel = 1.0;
  ev.mean_aposteriori = 0.4;
  ev.mean_requested = 0.5;
  report.models.push_back(ev);

  const std::string text = report_to_json(report);
  EvaluationReport back = report_from_json(text);
  CHECK(back.dataset == "tickets");
  CHECK(back.condition_attr == "condition");
  CHECK(back.train_ratio == 0.35);
  CHECK(back.test_ratio == 0.4);
  CHECK(back.test_traces == 20);
  CHECK(back.test_variants == 7);
  REQUIRE(back.models.size() == 1);
  const ModelEvaluation& bev = back.models[0];
  CHECK(bev.name == "cvae");
  REQUIRE(bev.per_log.size() == 2);
  CHECK(bev.per_log[0].red == 0.5);
  CHECK(bev.per_log[0].conf == 0.75);
  CHECK(bev.per_log[0].variants.total == 4);
  CHECK(bev.per_log[0].by_condition.at("True").n_ref == 5);
  CHECK_FALSE(bev.per_log[1].conf.has_value());
  CHECK_FALSE(bev.per_log[1].aposteriori.has_value());
  CHECK(bev.red.mean == doctest::Approx(0.55));
  REQUIRE(bev.conf.has_value());
  CHECK(bev.conf->values == std::vector<double>{0.75});
  CHECK(bev.mean_aposteriori == 0.4);
  // Serialization is stable across a round-trip.
  CHECK(report_to_json(back) == text);

  CHECK_THROWS_AS(report_from_json("{}"), ParseError);
  CHECK_THROWS_AS(report_from_json("not json"), ParseError);
  CHECK_THROWS_AS(report_from_json("{\"schema_version\":1,\"kind\":\"other\"}"), ParseError);
}

TEST_CASE("metrics CSV uses the long layout") {
  TempDir dir("mcsv");
  EvaluationReport report;
  report.dataset = "tickets";
  report.condition_attr = "condition";
  ModelEvaluation ev;
  ev.name = "cvae";
  LogMetrics a;
  a.red = 0.5;
  a.ctd = 1.5;
  a.two_gd = 0.25;
  a.conf = 0.75;
  a.variants = {4, 2, 1, 1};
  a.requested_ratio = 0.5;
  a.aposteriori = 0.4;
  LogMetrics b;
  b.red = 0.625;
  b.ctd = 2.5;
  b.two_gd = 0.125;
  b.variants = {3, 3, 0, 0};
  b.requested_ratio = 1.0;
  ev.per_log = {a, b};
  report.models.push_back(ev);

  const std::string path = dir.file("metrics_long.csv");
  write_metrics_csv(report, path);
  const std::string expected =
      "model,log_index,metric,value\n"
      "cvae,0,red,0.5\n"
      "cvae,0,ctd,1.5\n"
      "cvae,0,two_gd,0.25\n"
      "cvae,0,conf,0.75\n"
      "cvae,0,variants,4\n"
      "cvae,0,variants_in_train,2\n"
      "cvae,0,variants_in_test,1\n"
      "cvae,0,requested_ratio,0.5\n"
      "cvae,0,aposteriori,0.4\n"
      "cvae,1,red,0.625\n"
      "cvae,1,ctd,2.5\n"
      "cvae,1,two_gd,0.125\n"
      "cvae,1,variants,3\n"
      "cvae,1,variants_in_train,3\n"
      "cvae,1,variants_in_test,0\n"
      "cvae,1,requested_ratio,1\n";
  CHECK(read_text_file(path) == expected);
}

}  // TEST_SUITE
