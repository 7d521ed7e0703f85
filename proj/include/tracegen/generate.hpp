#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include "tracegen/model.hpp"
#include "tracegen/preprocess.hpp"

namespace tracegen {

/// Standard-normal latent draw.
Eigen::VectorXd sample_latent(int dim, std::mt19937_64& rng);

struct GenOptions {
  int n_traces = 0;
  double target_ratio = 0.0;         // requested share of condition = True
  bool bernoulli_conditions = false; // per-trace Bernoulli flags instead of an exact count
  std::int64_t tau_ms = 0;           // anchor instant added to every generated timestamp
  int max_len = 0;                   // 0: longest training trace
  int resample_limit = 10;           // fresh z draws when the decoder ends immediately
  std::uint64_t seed = 42;
  std::string id_prefix = "gen";
};

/// Decode one trace from a fixed latent draw. Returns nullopt when the
/// decoder chooses the end symbol before emitting any activity.
std::optional<Trace> generate_trace(const ModelParameters& params, const EncodingSpec& spec,
                                    const Eigen::VectorXd& z, double condition, std::int64_t tau_ms,
                                    int max_len);

/// Generate a log of `n_traces`. Each trace has its own deterministic RNG
/// stream derived from (seed, index), so any prefix of the log is stable under
/// changes of n_traces. Condition flags: the first round(n*ratio) traces are
/// True by default; with `bernoulli_conditions` each trace draws its own flag.
EventLog generate_log(const ModelParameters& params, const EncodingSpec& spec, const GenOptions& opts);

/// Counterfactual pairs: one latent draw decoded under both conditions.
/// Returns (condition True log, condition False log), aligned by index.
std::pair<EventLog, EventLog> what_if_pairs(const ModelParameters& params, const EncodingSpec& spec,
                                            int n_pairs, std::int64_t tau_ms, int max_len,
                                            std::uint64_t seed);

}  // namespace tracegen
