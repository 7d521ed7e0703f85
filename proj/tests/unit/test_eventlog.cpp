#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "support/synthetic.hpp"
#include "tracegen/eventlog.hpp"

using namespace tracegen;
using namespace tracegen::testsupport;

TEST_SUITE("eventlog") {

TEST_CASE("make_log computes the alphabet and validates traces") {
  EventLog log = mini_log();
  CHECK(log.size() == 4);
  CHECK(log.activity_alphabet == std::set<std::string>{"A", "B", "C"});

  CHECK_THROWS_AS(make_log({make_trace("empty", {})}), ValidationError);
  CHECK_THROWS_AS(make_log({make_trace("unsorted", {{"A", 100}, {"B", 50}})}), ValidationError);
  CHECK_THROWS_AS(make_log({make_trace("blank", {{"", 0}})}), ValidationError);
  Trace bad = make_trace("nan", {{"A", 0}}, {}, {{"x", std::nan("")}});
  CHECK_THROWS_AS(make_log({bad}), ValidationError);

  // Equal timestamps are legal (same-instant events are common in real logs).
  CHECK_NOTHROW(make_log({make_trace("ties", {{"A", 5}, {"B", 5}})}));
}

TEST_CASE("apply_filters combines with AND semantics") {
  EventLog log = mini_log();

  TraceFilter require_b;
  require_b.type = TraceFilter::Type::RequireAnyOf;
  require_b.activities = {"B"};
  CHECK(apply_filters(log, {require_b}).size() == 3);  // t2 has no B

  TraceFilter min3;
  min3.type = TraceFilter::Type::MinEvents;
  min3.min_events = 3;
  CHECK(apply_filters(log, {min3}).size() == 2);  // t1, t3

  CHECK(apply_filters(log, {require_b, min3}).size() == 2);

  TraceFilter drop_c_last;
  drop_c_last.type = TraceFilter::Type::DropIfLast;
  drop_c_last.activity = "C";
  CHECK(apply_filters(log, {drop_c_last}).empty());  // every fixture trace ends in C

  TraceFilter prefix;
  prefix.type = TraceFilter::Type::RequireAnyPrefix;
  prefix.prefix = "B";
  EventLog only_b = apply_filters(log, {prefix});
  CHECK(only_b.size() == 3);
  CHECK(only_b.activity_alphabet.count("B") == 1);
}

TEST_CASE("labeler kinds") {
  Trace fast = make_trace("fast", {{"Admit", 0}, {"Treat", 1000}, {"Release", 2000},
                                   {"Return", 86400000}});
  Trace slow = make_trace("slow", {{"Admit", 0}, {"Treat", 1000}, {"Treat", 1500},
                                   {"Release", 2000}, {"Return", 30LL * 86400000}});

  LabelerSpec presence;
  presence.kind = LabelerSpec::Kind::ActivityPresence;
  presence.activities = {"Return"};
  CHECK(evaluate_labeler(fast, presence));
  presence.activities = {"Discharge"};
  CHECK(!evaluate_labeler(fast, presence));

  LabelerSpec multi;
  multi.kind = LabelerSpec::Kind::ActivityMultiplicity;
  multi.activities = {"Treat"};
  multi.min_count = 2;
  CHECK(!evaluate_labeler(fast, multi));
  CHECK(evaluate_labeler(slow, multi));

  LabelerSpec ret;
  ret.kind = LabelerSpec::Kind::ReturnWithinDelta;
  ret.activities = {"Return"};
  ret.trigger_activities = {"Release"};
  ret.delta_ms = 28LL * 86400000;
  CHECK(evaluate_labeler(fast, ret));   // back within a day
  CHECK(!evaluate_labeler(slow, ret));  // back after the window
  // The return must come after the trigger, not before it.
  Trace reversed = make_trace("rev", {{"Return", 0}, {"Release", 1000}});
  CHECK(!evaluate_labeler(reversed, ret));

  LabelerSpec set;
  set.kind = LabelerSpec::Kind::ActivitySetPresence;
  set.activities = {"Escalate", "Return"};
  CHECK(evaluate_labeler(fast, set));
  set.activities = {"Escalate", "Audit"};
  CHECK(!evaluate_labeler(fast, set));
}

TEST_CASE("labeler validation") {
  LabelerSpec bad;
  bad.kind = LabelerSpec::Kind::ActivityPresence;
  bad.activities = {};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad.kind = LabelerSpec::Kind::ActivityMultiplicity;
  bad.activities = {"X"};
  bad.min_count = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad.kind = LabelerSpec::Kind::ReturnWithinDelta;
  bad.activities = {"X"};
  bad.trigger_activities = {};
  bad.delta_ms = 1000;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad.trigger_activities = {"Y"};
  bad.delta_ms = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("apply_labeler stamps True/False and refuses collisions") {
  EventLog log = ticket_log(50, 0.4, 7);
  EventLog labeled = apply_labeler(log, ticket_labeler(), "condition");
  for (const auto& t : labeled.traces) {
    REQUIRE(t.attrs_cat.count("condition") == 1);
    const bool escalated = std::any_of(t.events.begin(), t.events.end(),
                                       [](const Event& e) { return e.activity == "Escalate"; });
    CHECK(t.attrs_cat.at("condition") == (escalated ? "True" : "False"));
  }
  CHECK_THROWS_AS(apply_labeler(labeled, ticket_labeler(), "condition"), ValidationError);

  EventLog stripped = strip_attribute(labeled, "condition");
  for (const auto& t : stripped.traces) CHECK(t.attrs_cat.count("condition") == 0);
}

TEST_CASE("conditional_ratio") {
  EventLog labeled = apply_labeler(ticket_log(200, 0.35, 11), ticket_labeler(), "condition");
  double ratio = conditional_ratio(labeled, "condition");
  size_t positives = 0;
  for (const auto& t : labeled.traces)
    if (t.attrs_cat.at("condition") == "True") ++positives;
  CHECK(ratio == doctest::Approx(static_cast<double>(positives) / 200.0).epsilon(1e-12));
  CHECK(ratio > 0.2);
  CHECK(ratio < 0.5);

  CHECK_THROWS_AS(conditional_ratio(EventLog{}, "condition"), ValidationError);
  CHECK_THROWS_AS(conditional_ratio(mini_log(), "condition"), ValidationError);
}

TEST_CASE("chronological_split orders, sizes and partitions") {
  EventLog log = ticket_log(100, 0.3, 3);
  LogSplit split = chronological_split(log, SplitFractions{0.7, 0.1, 0.2});
  CHECK(split.train.size() == 70);
  CHECK(split.val.size() == 10);
  CHECK(split.test.size() == 20);

  // Strictly chronological boundaries.
  CHECK(split.train.traces.back().start_ms() <= split.val.traces.front().start_ms());
  CHECK(split.val.traces.back().start_ms() <= split.test.traces.front().start_ms());
  for (size_t i = 0; i + 1 < split.train.traces.size(); ++i)
    CHECK(split.train.traces[i].start_ms() <= split.train.traces[i + 1].start_ms());
}

TEST_CASE("chronological_split breaks start-time ties by trace id") {
  std::vector<Trace> traces;
  for (const auto* id : {"c", "a", "b", "e", "d"})
    traces.push_back(make_trace(id, {{"A", 1000}, {"B", 2000}}));
  LogSplit split = chronological_split(make_log(std::move(traces)),
                                       SplitFractions{0.4, 0.2, 0.4});
  REQUIRE(split.train.size() == 2);
  CHECK(split.train.traces[0].id == "a");
  CHECK(split.train.traces[1].id == "b");
  REQUIRE(split.val.size() == 1);
  CHECK(split.val.traces[0].id == "c");
  CHECK(split.test.traces[0].id == "d");
}

TEST_CASE("chronological_split guards") {
  EventLog tiny = make_log({make_trace("a", {{"A", 0}}), make_trace("b", {{"A", 1}})});
  CHECK_THROWS_AS(chronological_split(tiny, SplitFractions{}), ValidationError);
  CHECK_THROWS_AS(chronological_split(mini_log(), SplitFractions{0.5, 0.1, 0.2}), ConfigError);
  CHECK_THROWS_AS(chronological_split(mini_log(), SplitFractions{0.8, 0.0, 0.2}), ConfigError);
  // Tiny logs still give non-empty parts thanks to clamping.
  LogSplit split = chronological_split(mini_log(), SplitFractions{0.7, 0.1, 0.2});
  CHECK(split.train.size() >= 1);
  CHECK(split.val.size() >= 1);
  CHECK(split.test.size() >= 1);
}

TEST_CASE("variants") {
  EventLog log = mini_log();
  CHECK(variant_of(log.traces[0]) == Variant{"A", "B", "C"});
  std::set<Variant> variants = variant_set(log);
  CHECK(variants.size() == 4);
  CHECK(variants.count({"A", "C"}) == 1);

  EventLog doubled = log;
  doubled.traces.push_back(log.traces[0]);
  CHECK(variant_set(doubled).size() == 4);  // duplicates collapse
}

TEST_CASE("summarize") {
  LogSummary s = summarize(mini_log(), std::nullopt);
  CHECK(s.traces == 4);
  CHECK(s.variants == 4);
  CHECK(s.activities == 3);
  CHECK(s.avg_trace_length == doctest::Approx((3 + 2 + 4 + 2) / 4.0));
  CHECK(s.avg_cycle_time_hours == doctest::Approx((3 + 1 + 4 + 1) / 4.0));
  CHECK(!s.cond_ratio.has_value());

  EventLog labeled = apply_labeler(ticket_log(40, 0.5, 1), ticket_labeler(), "condition");
  LogSummary with_label = summarize(labeled, std::string("condition"));
  REQUIRE(with_label.cond_ratio.has_value());
  CHECK(*with_label.cond_ratio == doctest::Approx(conditional_ratio(labeled, "condition")));
}

}  // TEST_SUITE
