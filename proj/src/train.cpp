#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "tracegen/train.hpp"
#include "tracegen/util.hpp"

namespace tracegen {

using ad::Mat;

double annealing_beta(std::int64_t step, const AnnealSchedule& sched) {
  if (sched.total_steps <= 0 || sched.n_cycles <= 0) return 1.0;
  if (sched.ramp_ratio <= 0.0) return 1.0;
  if (step >= sched.total_steps) return 1.0;
  if (step < 0) throw ValidationError("annealing_beta: negative step");
  const double cycle_len = static_cast<double>(sched.total_steps) / sched.n_cycles;
  const double progress = std::fmod(static_cast<double>(step), cycle_len) / cycle_len;
  return std::min(1.0, progress / sched.ramp_ratio);
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("train.learning_rate: must be positive");
  if (batch_size <= 0) throw ConfigError("train.batch_size: must be positive");
  if (max_epochs <= 0) throw ConfigError("train.max_epochs: must be positive");
  if (patience < 0) throw ConfigError("train.patience: must be non-negative");
  if (kl_cycles <= 0) throw ConfigError("train.kl_cycles: must be positive");
  if (ramp_ratio <= 0.0 || ramp_ratio > 1.0) throw ConfigError("train.ramp_ratio: must be in (0, 1]");
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<ad::Parameter*>& params) {
  if (m_.empty()) {
    for (const ad::Parameter* p : params) {
      m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size())
    throw ValidationError("optimizer state does not match the parameter list");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = *params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    Mat m_hat = m_[i] / bc1;
    Mat v_hat = v_[i] / bc2;
    p.value.array() -= lr_ * m_hat.array() / (v_hat.array().sqrt() + eps_);
  }
}

OptState Adam::export_state(const std::vector<ad::Parameter*>& params) const {
  OptState s;
  s.step = t_;
  for (size_t i = 0; i < m_.size() && i < params.size(); ++i) {
    s.m[params[i]->name] = m_[i];
    s.v[params[i]->name] = v_[i];
  }
  return s;
}

void Adam::import_state(const OptState& state, const std::vector<ad::Parameter*>& params) {
  t_ = state.step;
  m_.clear();
  v_.clear();
  for (const ad::Parameter* p : params) {
    auto mi = state.m.find(p->name);
    auto vi = state.v.find(p->name);
    if (mi == state.m.end() || vi == state.v.end())
      throw ConfigError("optimizer state is missing moments for '" + p->name + "'");
    if (mi->second.rows() != p->value.rows() || mi->second.cols() != p->value.cols())
      throw ConfigError("optimizer state for '" + p->name + "' has the wrong shape");
    m_.push_back(mi->second);
    v_.push_back(vi->second);
  }
}

double clip_gradients(const std::vector<ad::Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const ad::Parameter* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (ad::Parameter* p : params) p->grad *= s;
  }
  return norm;
}

std::vector<std::vector<size_t>> bucket_batches(const std::vector<EncodedTrace>& traces,
                                                int batch_size, int max_tokens) {
  std::vector<size_t> order(traces.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return traces[a].activity_ids.size() < traces[b].activity_ids.size();
  });
  std::vector<std::vector<size_t>> batches;
  std::vector<size_t> current;
  int cur_max_len = 0;
  for (size_t idx : order) {
    const int len = static_cast<int>(traces[idx].activity_ids.size());
    const int new_max = std::max(cur_max_len, len);
    const int new_count = static_cast<int>(current.size()) + 1;
    const bool over_tokens = max_tokens > 0 && new_count * new_max > max_tokens;
    if (!current.empty() && (new_count > batch_size || over_tokens)) {
      batches.push_back(std::move(current));
      current.clear();
      cur_max_len = 0;
    }
    current.push_back(idx);
    cur_max_len = std::max(cur_max_len, len);
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

namespace {

EncodedBatch gather_batch(const std::vector<EncodedTrace>& traces, const std::vector<size_t>& idx,
                          const ModelConfig& config) {
  std::vector<const EncodedTrace*> ptrs;
  ptrs.reserve(idx.size());
  for (size_t i : idx) ptrs.push_back(&traces[i]);
  return make_batch(ptrs, config);
}

Mat gaussian_noise(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

}  // namespace

double validate_loss(ModelParameters& params, const std::vector<EncodedTrace>& val_set,
                     int batch_size, int max_tokens) {
  if (val_set.empty()) throw ValidationError("validation set is empty");
  const auto batches = bucket_batches(val_set, batch_size, max_tokens);
  std::mt19937_64 dummy_rng(0);
  double weighted = 0.0;
  size_t total = 0;
  for (const auto& idx : batches) {
    EncodedBatch batch = gather_batch(val_set, idx, params.config);
    ad::Tape tape;
    Mat noise = Mat::Zero(batch.B(), params.config.latent_dim);
    TapeForward fwd = forward_teacher(tape, params, batch, noise, false, dummy_rng);
    LossNodes nodes = loss_nodes(tape, fwd, batch, 1.0);
    const double total_loss = nodes.total.value()(0, 0);
    if (!std::isfinite(total_loss)) throw NumericError("non-finite validation loss");
    weighted += total_loss * static_cast<double>(idx.size());
    total += idx.size();
  }
  return weighted / static_cast<double>(total);
}

TrainResult train(ModelParameters params, const std::vector<EncodedTrace>& train_set,
                  const std::vector<EncodedTrace>& val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch,
                  const std::optional<OptState>& resume_opt, int start_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");
  if (val_set.empty()) throw ValidationError("validation set is empty");

  const auto batches = bucket_batches(train_set, cfg.batch_size, cfg.max_tokens_per_batch);
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>(batches.size());
  AnnealSchedule sched{steps_per_epoch * cfg.max_epochs, cfg.kl_cycles, cfg.ramp_ratio};

  auto plist = params.all();
  Adam adam(cfg.learning_rate);
  if (resume_opt) adam.import_state(*resume_opt, plist);

  TrainResult result;
  result.params = params;
  EarlyStop stopper;
  stopper.patience = cfg.patience;
  stopper.best_epoch = start_epoch;

  std::int64_t global_step = steps_per_epoch * start_epoch;
  for (int epoch = start_epoch + 1; epoch <= cfg.max_epochs; ++epoch) {
    // Visit the length buckets in a fresh order every epoch.
    std::vector<size_t> batch_order(batches.size());
    std::iota(batch_order.begin(), batch_order.end(), 0);
    std::mt19937_64 order_rng(derive_seed(cfg.seed, "batch-order", static_cast<std::uint64_t>(epoch)));
    std::shuffle(batch_order.begin(), batch_order.end(), order_rng);

    EpochStats stats;
    stats.epoch = epoch;
    stats.beta_min = std::numeric_limits<double>::infinity();
    stats.beta_max = -std::numeric_limits<double>::infinity();
    double weight_total = 0.0;

    for (size_t bi = 0; bi < batch_order.size(); ++bi) {
      const auto& idx = batches[batch_order[bi]];
      EncodedBatch batch = gather_batch(train_set, idx, params.config);
      const double beta = annealing_beta(global_step, sched);

      std::mt19937_64 noise_rng(derive_seed(cfg.seed, "noise", static_cast<std::uint64_t>(global_step)));
      std::mt19937_64 drop_rng(derive_seed(cfg.seed, "dropout", static_cast<std::uint64_t>(global_step)));
      Mat noise = gaussian_noise(batch.B(), params.config.latent_dim, noise_rng);

      ad::Tape tape;
      TapeForward fwd = forward_teacher(tape, params, batch, noise, true, drop_rng);
      LossNodes nodes = loss_nodes(tape, fwd, batch, beta);
      LossBreakdown l = read_loss(nodes);
      if (!std::isfinite(l.total)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch " << bi
            << " (act_ce=" << l.act_ce << ", t_mse=" << l.t_mse << ", cat_ce=" << l.cat_ce
            << ", num_mse=" << l.num_mse << ", kl=" << l.kl << ", beta=" << beta << ")";
        throw NumericError(msg.str());
      }

      params.zero_grads();
      tape.backward(nodes.total);
      stats.grad_norm = clip_gradients(plist, cfg.grad_clip);
      adam.step(plist);

      const double w = static_cast<double>(idx.size());
      stats.train.act_ce += w * l.act_ce;
      stats.train.t_mse += w * l.t_mse;
      stats.train.cat_ce += w * l.cat_ce;
      stats.train.num_mse += w * l.num_mse;
      stats.train.kl += w * l.kl;
      stats.train.total += w * l.total;
      stats.beta_min = std::min(stats.beta_min, beta);
      stats.beta_max = std::max(stats.beta_max, beta);
      stats.beta_mean += beta;
      weight_total += w;
      ++global_step;
    }
    stats.train.act_ce /= weight_total;
    stats.train.t_mse /= weight_total;
    stats.train.cat_ce /= weight_total;
    stats.train.num_mse /= weight_total;
    stats.train.kl /= weight_total;
    stats.train.total /= weight_total;
    stats.beta_mean /= static_cast<double>(batches.size());

    stats.val_loss = validate_loss(params, val_set, cfg.batch_size, cfg.max_tokens_per_batch);
    result.history.push_back(stats);
    result.trained_epochs = epoch;
    if (on_epoch) on_epoch(stats);

    if (stopper.observe(epoch, stats.val_loss)) result.params = params;
    if (stopper.should_stop(epoch)) {
      result.stopped_early = true;
      break;
    }
  }
  result.best_val = stopper.best_val;
  result.best_epoch = stopper.best_epoch;
  result.opt = adam.export_state(plist);
  return result;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ostringstream out;
  out << "epoch,train_total,train_act_ce,train_t_mse,train_cat_ce,train_num_mse,train_kl,"
         "beta_min,beta_max,beta_mean,grad_norm,val_loss\n";
  for (const EpochStats& s : history) {
    out << s.epoch << ',' << format_double(s.train.total) << ',' << format_double(s.train.act_ce)
        << ',' << format_double(s.train.t_mse) << ',' << format_double(s.train.cat_ce) << ','
        << format_double(s.train.num_mse) << ',' << format_double(s.train.kl) << ','
        << format_double(s.beta_min) << ',' << format_double(s.beta_max) << ','
        << format_double(s.beta_mean) << ',' << format_double(s.grad_norm) << ','
        << format_double(s.val_loss) << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<EpochStats> read_history_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty history file");
  std::vector<EpochStats> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != 12) throw ParseError(path + ": malformed history row");
    EpochStats s;
    s.epoch = static_cast<int>(vals[0]);
    s.train.total = vals[1];
    s.train.act_ce = vals[2];
    s.train.t_mse = vals[3];
    s.train.cat_ce = vals[4];
    s.train.num_mse = vals[5];
    s.train.kl = vals[6];
    s.beta_min = vals[7];
    s.beta_max = vals[8];
    s.beta_mean = vals[9];
    s.grad_norm = vals[10];
    s.val_loss = vals[11];
    out.push_back(s);
  }
  return out;
}

}  // namespace tracegen
