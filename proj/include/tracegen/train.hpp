#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tracegen/model.hpp"

namespace tracegen {

/// Linear cyclical annealing for the KL weight. The training run is divided
/// into `n_cycles` equal spans of optimizer steps; within each span beta ramps
/// linearly from 0 to 1 over the first `ramp_ratio` fraction and holds at 1
/// for the rest. Steps at or past `total_steps` use beta = 1.
struct AnnealSchedule {
  std::int64_t total_steps = 0;
  int n_cycles = 8;
  double ramp_ratio = 0.5;
};

double annealing_beta(std::int64_t step, const AnnealSchedule& sched);

struct TrainConfig {
  double learning_rate = 3e-4;
  int batch_size = 256;
  int max_epochs = 1000;
  int patience = 100;  // stop once epochs since the best validation exceed this
  int kl_cycles = 8;
  double ramp_ratio = 0.5;
  double grad_clip = 5.0;            // global norm; <= 0 disables clipping
  int max_tokens_per_batch = 24000;  // rows*steps memory guard; <= 0 disables
  std::uint64_t seed = 42;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  LossBreakdown train;  // batch-size weighted means over the epoch
  double beta_min = 0.0, beta_max = 0.0, beta_mean = 0.0;
  double val_loss = 0.0;  // teacher-forced, dropout off, beta = 1, z = mu
  double grad_norm = 0.0; // pre-clip global norm, last batch of the epoch
};

struct TrainResult {
  ModelParameters params;  // snapshot from the best validation epoch
  int best_epoch = 0;
  double best_val = 0.0;
  int trained_epochs = 0;
  bool stopped_early = false;
  std::vector<EpochStats> history;
  OptState opt;  // optimizer state at the end of the run (for resuming)
};

/// Validation-based early stopping: a strictly lower loss updates the
/// incumbent; training stops once more than `patience` epochs have passed
/// since the best one.
struct EarlyStop {
  int patience = 100;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  /// Feed one epoch's validation loss; true when it sets a new best.
  bool observe(int epoch, double val_loss) {
    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      return true;
    }
    return false;
  }
  bool should_stop(int epoch) const { return epoch - best_epoch > patience; }
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Apply one update from the accumulated gradients (gradients are not cleared).
  void step(const std::vector<ad::Parameter*>& params);

  OptState export_state(const std::vector<ad::Parameter*>& params) const;
  void import_state(const OptState& state, const std::vector<ad::Parameter*>& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<ad::Mat> m_, v_;
};

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
double clip_gradients(const std::vector<ad::Parameter*>& params, double max_norm);

/// Deterministic length-bucketed batches: traces are ordered by (length,
/// index) and chunked subject to the batch size and the token budget.
/// Returned batches hold indices into `traces`.
std::vector<std::vector<size_t>> bucket_batches(const std::vector<EncodedTrace>& traces,
                                                int batch_size, int max_tokens);

/// Mean teacher-forced loss at beta = 1 with dropout off and z = mu.
double validate_loss(ModelParameters& params, const std::vector<EncodedTrace>& val_set,
                     int batch_size = 256, int max_tokens = 24000);

/// Full training loop with cyclical KL annealing and validation-based early
/// stopping. `on_epoch` (when set) runs after every epoch's validation.
/// `resume_opt`/`start_epoch` continue a previous run.
TrainResult train(ModelParameters params, const std::vector<EncodedTrace>& train_set,
                  const std::vector<EncodedTrace>& val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch = {},
                  const std::optional<OptState>& resume_opt = std::nullopt, int start_epoch = 0);

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);
std::vector<EpochStats> read_history_csv(const std::string& path);

}  // namespace tracegen
