#include <cmath>

#include "tracegen/generate.hpp"
#include "tracegen/util.hpp"

namespace tracegen {

Eigen::VectorXd sample_latent(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd z(dim);
  for (int i = 0; i < dim; ++i) z(i) = dist(rng);
  return z;
}

namespace {

RawDecoded to_raw(const DecoderOutput& out) {
  RawDecoded raw;
  raw.activity_ids = out.activities;
  raw.interarrivals = out.interarrivals_hat;
  for (const auto& [name, logits] : out.cat_attr_logits) {
    int best = 0;
    for (int i = 1; i < logits.size(); ++i)
      if (logits(i) > logits(best)) best = i;
    raw.cat_attr_ids[name] = best;
  }
  raw.num_attrs = out.num_attrs_hat;
  raw.truncated = out.truncated;
  return raw;
}

std::string padded_index(int i, int width) {
  std::string s = std::to_string(i);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

std::optional<Trace> generate_trace(const ModelParameters& params, const EncodingSpec& spec,
                                    const Eigen::VectorXd& z, double condition, std::int64_t tau_ms,
                                    int max_len) {
  DecoderOutput out = decode(params, z, condition, nullptr, max_len);
  if (out.activities.empty()) return std::nullopt;
  Trace t = decode_outputs(to_raw(out), spec, tau_ms);
  t.attrs_cat[spec.condition_attr] = condition >= 0.5 ? "True" : "False";
  return t;
}

EventLog generate_log(const ModelParameters& params, const EncodingSpec& spec, const GenOptions& opts) {
  if (opts.n_traces <= 0) throw ValidationError("generate: n_traces must be positive");
  if (opts.target_ratio < 0.0 || opts.target_ratio > 1.0)
    throw ValidationError("generate: target_ratio must be in [0, 1]");
  if (opts.resample_limit < 1) throw ValidationError("generate: resample_limit must be at least 1");
  const int max_len = opts.max_len > 0 ? opts.max_len : spec.max_len;
  const int n_true =
      static_cast<int>(round_half_away(opts.target_ratio * static_cast<double>(opts.n_traces)));
  const int id_width = static_cast<int>(std::to_string(opts.n_traces - 1).size());

  std::vector<Trace> traces;
  traces.reserve(static_cast<size_t>(opts.n_traces));
  int truncated = 0;
  for (int i = 0; i < opts.n_traces; ++i) {
    std::mt19937_64 rng(derive_seed(opts.seed, "gen-trace", static_cast<std::uint64_t>(i)));
    bool flag;
    if (opts.bernoulli_conditions) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      flag = u(rng) < opts.target_ratio;
    } else {
      flag = i < n_true;
    }
    std::optional<Trace> t;
    for (int attempt = 0; attempt < opts.resample_limit && !t; ++attempt) {
      Eigen::VectorXd z = sample_latent(params.config.latent_dim, rng);
      t = generate_trace(params, spec, z, flag ? 1.0 : 0.0, opts.tau_ms, max_len);
    }
    if (!t)
      throw Error("generation stalled: the decoder emitted only empty traces for trace " +
                  std::to_string(i) + " after " + std::to_string(opts.resample_limit) + " draws");
    if (static_cast<int>(t->events.size()) >= max_len) ++truncated;
    t->id = opts.id_prefix + "_" + padded_index(i, id_width);
    traces.push_back(std::move(*t));
  }
  EventLog log = make_log(std::move(traces));
  log.metadata["generator:seed"] = std::to_string(opts.seed);
  log.metadata["generator:target_ratio"] = format_double(opts.target_ratio);
  log.metadata["generator:condition_attr"] = spec.condition_attr;
  log.metadata["generator:truncated"] = std::to_string(truncated);
  return log;
}

std::pair<EventLog, EventLog> what_if_pairs(const ModelParameters& params, const EncodingSpec& spec,
                                            int n_pairs, std::int64_t tau_ms, int max_len,
                                            std::uint64_t seed) {
  if (n_pairs <= 0) throw ValidationError("what_if_pairs: n_pairs must be positive");
  const int limit = 10;
  const int effective_max = max_len > 0 ? max_len : spec.max_len;
  const int id_width = static_cast<int>(std::to_string(n_pairs - 1).size());
  std::vector<Trace> on, off;
  for (int i = 0; i < n_pairs; ++i) {
    std::mt19937_64 rng(derive_seed(seed, "what-if", static_cast<std::uint64_t>(i)));
    std::optional<Trace> t1, t0;
    for (int attempt = 0; attempt < limit; ++attempt) {
      Eigen::VectorXd z = sample_latent(params.config.latent_dim, rng);
      t1 = generate_trace(params, spec, z, 1.0, tau_ms, effective_max);
      t0 = generate_trace(params, spec, z, 0.0, tau_ms, effective_max);
      if (t1 && t0) break;
      t1.reset();
      t0.reset();
    }
    if (!t1 || !t0)
      throw Error("what-if generation stalled on pair " + std::to_string(i) + " after " +
                  std::to_string(limit) + " draws");
    t1->id = "pair_" + padded_index(i, id_width) + "_true";
    t0->id = "pair_" + padded_index(i, id_width) + "_false";
    on.push_back(std::move(*t1));
    off.push_back(std::move(*t0));
  }
  EventLog log_on = make_log(std::move(on));
  EventLog log_off = make_log(std::move(off));
  log_on.metadata["generator:seed"] = std::to_string(seed);
  log_on.metadata["generator:mode"] = "what-if(True)";
  log_off.metadata["generator:seed"] = std::to_string(seed);
  log_off.metadata["generator:mode"] = "what-if(False)";
  return {std::move(log_on), std::move(log_off)};
}

}  // namespace tracegen
