#include <cmath>

#include "doctest.h"

#include "support/synthetic.hpp"
#include "support/tempdir.hpp"
#include "tracegen/eventlog.hpp"
#include "tracegen/preprocess.hpp"

using namespace tracegen;
using namespace tracegen::testsupport;

namespace {

EventLog labeled_tickets(int n = 60, double ratio = 0.4, std::uint64_t seed = 5) {
  return apply_labeler(ticket_log(n, ratio, seed), ticket_labeler(), "condition");
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("fit_encoding collects sorted vocabularies") {
  EventLog train = labeled_tickets();
  EncodingSpec spec = fit_encoding(train, "condition");

  CHECK(spec.condition_attr == "condition");
  CHECK(std::is_sorted(spec.activities.begin(), spec.activities.end()));
  CHECK(spec.activities.size() == train.activity_alphabet.size());
  // The condition attribute is the conditioning channel, not a model attribute.
  CHECK(spec.cat_attr_values.count("condition") == 0);
  REQUIRE(spec.cat_attr_values.count("channel") == 1);
  CHECK(spec.cat_attr_values.at("channel") == std::vector<std::string>{"phone", "web"});
  CHECK(spec.num_attr_minmax.count("amount") == 1);
  CHECK(spec.num_attr_minmax.count(kArrivalAttr) == 1);
  CHECK(spec.max_len >= 4);
  CHECK(spec.max_len <= 6);
  CHECK(spec.eot_index() == static_cast<int>(spec.activities.size()));
  CHECK(spec.vocab_size() == static_cast<int>(spec.activities.size()) + 1);

  std::int64_t earliest = train.traces.front().start_ms();
  for (const auto& t : train.traces) earliest = std::min(earliest, t.start_ms());
  CHECK(spec.t1_reference_ms == earliest);
}

TEST_CASE("fit_encoding nearest-rank interarrival percentile") {
  // 20 gaps of 1s..20s: the nearest-rank 95th percentile is the 19th value.
  std::vector<Trace> traces;
  std::int64_t ts = 0;
  Trace t;
  t.id = "long";
  t.attrs_cat["condition"] = "True";
  t.events.push_back(Event{"A", 0});
  for (int g = 1; g <= 20; ++g) {
    ts += g * 1000;
    t.events.push_back(Event{"A", ts});
  }
  traces.push_back(t);
  EncodingSpec spec = fit_encoding(make_log(std::move(traces)), "condition");
  CHECK(spec.interarrival_p95_s == doctest::Approx(19.0));
  CHECK(spec.max_len == 21);
}

TEST_CASE("fit_encoding guards") {
  CHECK_THROWS_AS(fit_encoding(EventLog{}, "condition"), ValidationError);
  CHECK_THROWS_AS(fit_encoding(ticket_log(10, 0.5, 1), "condition"), ValidationError);

  EventLog bad_value = ticket_log(5, 0.5, 1);
  for (auto& t : bad_value.traces) t.attrs_cat["condition"] = "yes";
  CHECK_THROWS_AS(fit_encoding(bad_value, "condition"), ValidationError);

  EventLog ragged = labeled_tickets(6);
  ragged.traces[2].attrs_num.erase("amount");
  CHECK_THROWS_AS(fit_encoding(ragged, "condition"), ValidationError);
}

TEST_CASE("fit_encoding degenerate interarrivals fall back to one second") {
  EventLog log = make_log({make_trace("a", {{"A", 0}, {"B", 0}}, {{"condition", "True"}}, {}),
                           make_trace("b", {{"A", 5000}, {"B", 5000}}, {{"condition", "False"}}, {})});
  EncodingSpec spec = fit_encoding(log, "condition");
  CHECK(spec.interarrival_p95_s == 1.0);
}

TEST_CASE("encode_trace layout and normalization") {
  EventLog train = labeled_tickets();
  EncodingSpec spec = fit_encoding(train, "condition");

  for (const auto& trace : train.traces) {
    EncodedTrace enc = encode_trace(trace, spec);
    REQUIRE(enc.activity_ids.size() == trace.events.size() + 1);
    CHECK(enc.activity_ids.back() == spec.eot_index());
    REQUIRE(enc.interarrivals.size() == trace.events.size());
    CHECK(enc.interarrivals.front() == 0.0);
    for (size_t i = 1; i < trace.events.size(); ++i) {
      const double gap_s = static_cast<double>(trace.events[i].timestamp_ms -
                                               trace.events[i - 1].timestamp_ms) / 1000.0;
      CHECK(enc.interarrivals[i] == doctest::Approx(gap_s / spec.interarrival_p95_s));
      CHECK(enc.interarrivals[i] >= 0.0);
    }
    CHECK(enc.condition == (trace.attrs_cat.at("condition") == "True" ? 1.0 : 0.0));
    CHECK(enc.cat_attr_ids.count("channel") == 1);
    // Training values always land in [0, 1] under their own min-max.
    for (const auto& [name, v] : enc.num_attrs) {
      CAPTURE(name);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("encode_trace clamps below the training minimum but not above the maximum") {
  EventLog train = labeled_tickets();
  EncodingSpec spec = fit_encoding(train, "condition");

  Trace outlier = train.traces.front();
  outlier.attrs_num["amount"] = -1e6;
  CHECK(encode_trace(outlier, spec).num_attrs.at("amount") == 0.0);

  outlier.attrs_num["amount"] = 1e6;
  CHECK(encode_trace(outlier, spec).num_attrs.at("amount") > 1.0);
}

TEST_CASE("encode_trace rejects out-of-vocabulary input") {
  EventLog train = labeled_tickets();
  EncodingSpec spec = fit_encoding(train, "condition");

  Trace oov = train.traces.front();
  oov.events[0].activity = "Reopen";
  CHECK_THROWS_AS(encode_trace(oov, spec), ValidationError);

  Trace bad_cat = train.traces.front();
  bad_cat.attrs_cat["channel"] = "fax";
  CHECK_THROWS_AS(encode_trace(bad_cat, spec), ValidationError);

  Trace missing_cond = train.traces.front();
  missing_cond.attrs_cat.erase("condition");
  CHECK_THROWS_AS(encode_trace(missing_cond, spec), ValidationError);

  Trace missing_num = train.traces.front();
  missing_num.attrs_num.erase("amount");
  CHECK_THROWS_AS(encode_trace(missing_num, spec), ValidationError);
}

TEST_CASE("encode/decode round-trip recovers the original trace") {
  EventLog train = labeled_tickets(30);
  EncodingSpec spec = fit_encoding(train, "condition");

  for (const auto& trace : train.traces) {
    EncodedTrace enc = encode_trace(trace, spec);
    RawDecoded raw;
    raw.activity_ids.assign(enc.activity_ids.begin(), enc.activity_ids.end() - 1);
    raw.interarrivals = enc.interarrivals;
    raw.cat_attr_ids = enc.cat_attr_ids;
    raw.num_attrs = enc.num_attrs;

    Trace back = decode_outputs(raw, spec, spec.t1_reference_ms);
    REQUIRE(back.events.size() == trace.events.size());
    for (size_t i = 0; i < trace.events.size(); ++i) {
      CHECK(back.events[i].activity == trace.events[i].activity);
      CHECK(std::llabs(back.events[i].timestamp_ms - trace.events[i].timestamp_ms) <= 1);
    }
    CHECK(back.attrs_cat.at("channel") == trace.attrs_cat.at("channel"));
    CHECK(back.attrs_num.at("amount") ==
          doctest::Approx(trace.attrs_num.at("amount")).epsilon(1e-9));
  }
}

TEST_CASE("decode_outputs clamps negative interarrivals to keep time monotone") {
  EventLog train = labeled_tickets();
  EncodingSpec spec = fit_encoding(train, "condition");

  RawDecoded raw;
  raw.activity_ids = {0, 1, 2};
  raw.interarrivals = {0.0, -0.7, 0.5};
  raw.cat_attr_ids["channel"] = 0;
  raw.num_attrs["amount"] = 0.5;
  raw.num_attrs[kArrivalAttr] = 0.0;

  Trace t = decode_outputs(raw, spec, 1'000'000);
  REQUIRE(t.events.size() == 3);
  CHECK(t.events[0].timestamp_ms == t.events[1].timestamp_ms);  // clamped gap
  CHECK(t.events[2].timestamp_ms > t.events[1].timestamp_ms);
  for (size_t i = 1; i < t.events.size(); ++i)
    CHECK(t.events[i].timestamp_ms >= t.events[i - 1].timestamp_ms);
}

TEST_CASE("decode_outputs validates its input") {
  EncodingSpec spec = fit_encoding(labeled_tickets(), "condition");
  RawDecoded raw;
  raw.num_attrs[kArrivalAttr] = 0.0;
  CHECK_THROWS_AS(decode_outputs(raw, spec, 0), ValidationError);

  raw.activity_ids = {0, 1};
  raw.interarrivals = {0.0};
  CHECK_THROWS_AS(decode_outputs(raw, spec, 0), ValidationError);

  raw.interarrivals = {0.0, 0.1};
  raw.activity_ids = {0, 999};
  CHECK_THROWS_AS(decode_outputs(raw, spec, 0), ValidationError);
}

TEST_CASE("EncodingSpec JSON round-trip") {
  TempDir dir("encoding");
  EncodingSpec spec = fit_encoding(labeled_tickets(), "condition");
  spec.save(dir.file("encoding.json"));
  EncodingSpec back = EncodingSpec::load(dir.file("encoding.json"));

  CHECK(back.activities == spec.activities);
  CHECK(back.cat_attr_values == spec.cat_attr_values);
  CHECK(back.num_attr_minmax == spec.num_attr_minmax);
  CHECK(back.interarrival_p95_s == spec.interarrival_p95_s);
  CHECK(back.t1_reference_ms == spec.t1_reference_ms);
  CHECK(back.max_len == spec.max_len);
  CHECK(back.condition_attr == spec.condition_attr);
  // The rendering itself is stable, which the pipeline's hashes rely on.
  CHECK(back.to_json() == spec.to_json());

  CHECK_THROWS_AS(EncodingSpec::from_json("{}"), ParseError);
  CHECK_THROWS_AS(EncodingSpec::from_json("not json"), ParseError);
  CHECK_THROWS_AS(EncodingSpec::from_json("{\"schema_version\": 2, \"kind\": \"encoding\"}"),
                  ParseError);
}

TEST_CASE("index lookups throw on unknown labels") {
  EncodingSpec spec = fit_encoding(labeled_tickets(), "condition");
  CHECK(spec.activity_index("Open") >= 0);
  CHECK_THROWS_AS(spec.activity_index("Unknown"), ValidationError);
  CHECK_THROWS_AS(spec.cat_value_index("channel", "fax"), ValidationError);
  CHECK_THROWS_AS(spec.cat_value_index("missing_attr", "x"), ValidationError);
}

}  // TEST_SUITE
