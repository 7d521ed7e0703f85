#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tracegen/autodiff.hpp"
#include "tracegen/preprocess.hpp"

namespace tracegen {

/// Architecture hyperparameters plus the data-dependent shapes taken from an
/// EncodingSpec. Serialized into checkpoints so a saved model is self-describing.
struct ModelConfig {
  int embedding_size = 5;
  int lstm_hidden = 200;
  int latent_dim = 10;
  int upsample_dim = 200;
  int attr_feature_dim = 5;
  int attr_head_hidden = 32;
  double dropout = 0.05;

  int n_activities = 0;                     // real activities, excluding the end symbol
  std::vector<std::string> cat_attr_names;  // sorted
  std::vector<int> cat_attr_arities;        // aligned with cat_attr_names
  std::vector<std::string> num_attr_names;  // sorted, includes the arrival offset

  int vocab_size() const { return n_activities + 1; }  // + end-of-trace
  int eot_index() const { return n_activities; }
  int pad_index() const { return n_activities + 1; }
  int n_cat() const { return static_cast<int>(cat_attr_names.size()); }
  int n_num() const { return static_cast<int>(num_attr_names.size()); }
  /// Width of the encoder feature vector fed to the mu/logvar heads.
  int feature_width() const {
    return lstm_hidden + attr_feature_dim * (n_cat() + n_num()) + 1;
  }

  void validate() const;
  /// Copy the shape fields from a fitted encoding; hyperparameters keep their
  /// current values.
  void bind_encoding(const EncodingSpec& spec);

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

/// Two-layer perceptron head for one trace attribute.
struct AttrHead {
  ad::Parameter W1, b1, W2, b2;
};

struct ModelParameters {
  ModelConfig config;

  // encoder
  ad::Parameter emb_act;  // (vocab+1) x E; the extra final row is the padding symbol
  std::vector<ad::Parameter> emb_cat;
  std::vector<ad::Parameter> enc_cat_W, enc_cat_b;
  std::vector<ad::Parameter> enc_num_W, enc_num_b;
  ad::Parameter enc_Wih, enc_Whh, enc_b;
  ad::Parameter mu_W, mu_b, lv_W, lv_b;

  // decoder
  ad::Parameter up_W, up_b;
  ad::Parameter dec_act_Wih, dec_act_Whh, dec_act_b;
  ad::Parameter dec_ts_Wih, dec_ts_Whh, dec_ts_b;
  ad::Parameter act_head_W, act_head_b;
  ad::Parameter ts_head_W, ts_head_b;
  std::vector<AttrHead> cat_heads;
  std::vector<AttrHead> num_heads;

  std::vector<ad::Parameter*> all();
  std::vector<const ad::Parameter*> all() const;
  void zero_grads();
  std::int64_t parameter_count() const;

  static ModelParameters init(const ModelConfig& config, std::uint64_t seed);
};

/// Gaussian posterior q(z | x, c) for one trace.
struct LatentPosterior {
  Eigen::VectorXd mu;
  Eigen::VectorXd logvar;
};

/// Decoder outputs for one trace, in normalized model coordinates.
struct DecoderOutput {
  std::vector<Eigen::VectorXd> activity_logits;  // one per executed step (includes the end step)
  std::vector<int> activities;                   // emitted activity ids, end symbol excluded
  std::vector<double> interarrivals_hat;         // one per emitted activity; first entry is 0
  std::map<std::string, Eigen::VectorXd> cat_attr_logits;
  std::map<std::string, double> num_attrs_hat;   // includes the arrival offset
  bool truncated = false;                        // hit max_len before the end symbol
};

struct LossBreakdown {
  double act_ce = 0, t_mse = 0, cat_ce = 0, num_mse = 0, kl = 0, total = 0;
};

// ---- struct-level operations (no tape, const parameters) -------------------

std::vector<LatentPosterior> encode(const ModelParameters& params,
                                    const std::vector<EncodedTrace>& traces);

Eigen::VectorXd reparameterize(const LatentPosterior& post, const Eigen::VectorXd& noise);

double kl_divergence(const LatentPosterior& post);

/// Run the decoder for one trace. With a teacher the unroll is forced to the
/// teacher's activity/interarrival sequence (for loss computation); without
/// one it runs free with argmax decoding until the end symbol or max_len.
DecoderOutput decode(const ModelParameters& params, const Eigen::VectorXd& z, double condition,
                     const EncodedTrace* teacher, int max_len);

/// Per-trace loss of a teacher-forced decode against its target.
LossBreakdown loss(const DecoderOutput& out, const EncodedTrace& target,
                   const LatentPosterior& post, double beta);

// ---- batched tape operations (training path) ------------------------------

/// Padded batch in model coordinates. Step blocks are packed row-wise as
/// described in autodiff.hpp. `act_inputs` holds events then the end symbol
/// then padding; it serves both as encoder input and as teacher targets.
struct EncodedBatch {
  ad::IMat act_inputs;        // B x L
  ad::IMat prev_ids;          // B x L, shifted right, end symbol first
  ad::Mat interarrivals;      // B x L
  ad::Mat prev_interarrivals; // B x L
  ad::Mat act_mask;           // B x L, 1 on steps 0..n (events plus end symbol)
  ad::Mat t_mask;             // B x L, 1 on steps 0..n-1 (events only)
  ad::IMat cat_ids;           // B x n_cat
  ad::Mat num_vals;           // B x n_num
  ad::Mat condition;          // B x 1
  std::vector<int> lengths;   // per trace: events + 1
  int L = 0;

  int B() const { return static_cast<int>(lengths.size()); }
};

EncodedBatch make_batch(const std::vector<const EncodedTrace*>& traces, const ModelConfig& config);

struct TapeForward {
  ad::Var mu, logvar, z;        // B x D
  ad::Var act_logits;           // B x L*V
  ad::Var t_hat;                // B x L, first column pinned to 0
  std::vector<ad::Var> cat_logits;
  std::vector<ad::Var> num_hat; // each B x 1
  ad::Var condition;            // the condition leaf (exposed for structural tests)
};

/// Teacher-forced forward pass for a batch. `noise` is the reparameterization
/// draw (B x D); pass zeros for a deterministic pass. Dropout is active only
/// when `train_mode` is set.
TapeForward forward_teacher(ad::Tape& tape, ModelParameters& params, const EncodedBatch& batch,
                            const ad::Mat& noise, bool train_mode, std::mt19937_64& dropout_rng);

struct LossNodes {
  ad::Var act_ce, t_mse, cat_ce, num_mse, kl;  // 1x1 batch means
  ad::Var total;
};

LossNodes loss_nodes(ad::Tape& tape, const TapeForward& fwd, const EncodedBatch& batch, double beta);

LossBreakdown read_loss(const LossNodes& nodes);

// ---- checkpoints -----------------------------------------------------------

struct OptState {
  std::int64_t step = 0;
  std::map<std::string, ad::Mat> m, v;
};

struct Checkpoint {
  ModelParameters params;
  std::string encoding_hash;  // hash of the EncodingSpec document this model was trained with
  int trained_epochs = 0;
  int best_epoch = 0;
  double best_val = 0.0;
  std::uint64_t seed = 0;
  std::optional<OptState> opt;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tracegen
