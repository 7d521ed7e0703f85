#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "tracegen/model.hpp"
#include "tracegen/util.hpp"

namespace tracegen {

using json = nlohmann::ordered_json;
using ad::Mat;
using RowVec = Eigen::RowVectorXd;

void ModelConfig::validate() const {
  if (embedding_size <= 0 || lstm_hidden <= 0 || latent_dim <= 0 || upsample_dim <= 0 ||
      attr_feature_dim <= 0 || attr_head_hidden <= 0)
    throw ConfigError("model: all dimensions must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model.dropout: must be in [0, 1)");
  if (n_activities <= 0) throw ConfigError("model: empty activity vocabulary");
  if (cat_attr_names.size() != cat_attr_arities.size())
    throw ConfigError("model: categorical attribute names and arities disagree");
  for (int a : cat_attr_arities)
    if (a <= 0) throw ConfigError("model: categorical attribute with empty vocabulary");
}

void ModelConfig::bind_encoding(const EncodingSpec& spec) {
  n_activities = static_cast<int>(spec.activities.size());
  cat_attr_names.clear();
  cat_attr_arities.clear();
  for (const auto& [name, values] : spec.cat_attr_values) {
    cat_attr_names.push_back(name);
    cat_attr_arities.push_back(static_cast<int>(values.size()));
  }
  num_attr_names.clear();
  for (const auto& [name, mm] : spec.num_attr_minmax) num_attr_names.push_back(name);
}

std::string ModelConfig::to_json() const {
  json j;
  j["embedding_size"] = embedding_size;
  j["lstm_hidden"] = lstm_hidden;
  j["latent_dim"] = latent_dim;
  j["upsample_dim"] = upsample_dim;
  j["attr_feature_dim"] = attr_feature_dim;
  j["attr_head_hidden"] = attr_head_hidden;
  j["dropout"] = dropout;
  j["n_activities"] = n_activities;
  j["cat_attr_names"] = cat_attr_names;
  j["cat_attr_arities"] = cat_attr_arities;
  j["num_attr_names"] = num_attr_names;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  ModelConfig c;
  c.embedding_size = j.at("embedding_size").get<int>();
  c.lstm_hidden = j.at("lstm_hidden").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.upsample_dim = j.at("upsample_dim").get<int>();
  c.attr_feature_dim = j.at("attr_feature_dim").get<int>();
  c.attr_head_hidden = j.at("attr_head_hidden").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.n_activities = j.at("n_activities").get<int>();
  c.cat_attr_names = j.at("cat_attr_names").get<std::vector<std::string>>();
  c.cat_attr_arities = j.at("cat_attr_arities").get<std::vector<int>>();
  c.num_attr_names = j.at("num_attr_names").get<std::vector<std::string>>();
  c.validate();
  return c;
}

namespace {

Mat uniform_mat(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

Mat normal_mat(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

ad::Parameter make_linear_W(const std::string& name, int in, int out, std::mt19937_64& rng) {
  return {name, uniform_mat(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng)};
}

ad::Parameter make_linear_b(const std::string& name, int in, int out, std::mt19937_64& rng) {
  return {name, uniform_mat(1, out, 1.0 / std::sqrt(static_cast<double>(in)), rng)};
}

AttrHead make_attr_head(const std::string& base, int in, int hidden, int out, std::mt19937_64& rng) {
  AttrHead h{make_linear_W(base + ".W1", in, hidden, rng), make_linear_b(base + ".b1", in, hidden, rng),
             make_linear_W(base + ".W2", hidden, out, rng), make_linear_b(base + ".b2", hidden, out, rng)};
  return h;
}

double stable_ce(const Eigen::VectorXd& logits, int target) {
  double mx = logits.maxCoeff();
  double lse = std::log((logits.array() - mx).exp().sum()) + mx;
  return lse - logits(target);
}

int argmax_lowest(const RowVec& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

void lstm_step(const RowVec& x, RowVec& h, RowVec& c, const Mat& Wih, const Mat& Whh, const Mat& b) {
  const int H = static_cast<int>(Whh.rows());
  RowVec a = x * Wih + h * Whh + b.row(0);
  for (int d = 0; d < H; ++d) {
    double gi = 1.0 / (1.0 + std::exp(-a(d)));
    double gf = 1.0 / (1.0 + std::exp(-a(H + d)));
    double gg = std::tanh(a(2 * H + d));
    double go = 1.0 / (1.0 + std::exp(-a(3 * H + d)));
    c(d) = gf * c(d) + gi * gg;
    h(d) = go * std::tanh(c(d));
  }
}

}  // namespace

ModelParameters ModelParameters::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(derive_seed(seed, "model-init", 0));
  const int E = config.embedding_size, H = config.lstm_hidden, D = config.latent_dim;
  const int U = config.upsample_dim, F = config.attr_feature_dim, Ah = config.attr_head_hidden;
  const int V = config.vocab_size();
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(E));
  const double lstm_bound = 1.0 / std::sqrt(static_cast<double>(H));

  ModelParameters P;
  P.config = config;
  P.emb_act = {"emb_act", normal_mat(V + 1, E, emb_std, rng)};
  P.emb_act.value.row(V).setZero();  // padding row starts silent
  for (int k = 0; k < config.n_cat(); ++k) {
    const std::string& name = config.cat_attr_names[static_cast<size_t>(k)];
    int arity = config.cat_attr_arities[static_cast<size_t>(k)];
    P.emb_cat.emplace_back("emb_cat[" + name + "]", normal_mat(arity, E, emb_std, rng));
    P.enc_cat_W.push_back(make_linear_W("enc_cat_W[" + name + "]", E, F, rng));
    P.enc_cat_b.push_back(make_linear_b("enc_cat_b[" + name + "]", E, F, rng));
  }
  for (const auto& name : config.num_attr_names) {
    P.enc_num_W.push_back(make_linear_W("enc_num_W[" + name + "]", 1, F, rng));
    P.enc_num_b.push_back(make_linear_b("enc_num_b[" + name + "]", 1, F, rng));
  }
  P.enc_Wih = {"enc_Wih", uniform_mat(E + 1, 4 * H, lstm_bound, rng)};
  P.enc_Whh = {"enc_Whh", uniform_mat(H, 4 * H, lstm_bound, rng)};
  P.enc_b = {"enc_b", uniform_mat(1, 4 * H, lstm_bound, rng)};
  const int FW = config.feature_width();
  P.mu_W = make_linear_W("mu_W", FW, D, rng);
  P.mu_b = make_linear_b("mu_b", FW, D, rng);
  P.lv_W = make_linear_W("lv_W", FW, D, rng);
  P.lv_b = make_linear_b("lv_b", FW, D, rng);

  P.up_W = make_linear_W("up_W", D + 1, U, rng);
  P.up_b = make_linear_b("up_b", D + 1, U, rng);
  P.dec_act_Wih = {"dec_act_Wih", uniform_mat(U + E, 4 * H, lstm_bound, rng)};
  P.dec_act_Whh = {"dec_act_Whh", uniform_mat(H, 4 * H, lstm_bound, rng)};
  P.dec_act_b = {"dec_act_b", uniform_mat(1, 4 * H, lstm_bound, rng)};
  P.dec_ts_Wih = {"dec_ts_Wih", uniform_mat(U + 1 + E, 4 * H, lstm_bound, rng)};
  P.dec_ts_Whh = {"dec_ts_Whh", uniform_mat(H, 4 * H, lstm_bound, rng)};
  P.dec_ts_b = {"dec_ts_b", uniform_mat(1, 4 * H, lstm_bound, rng)};
  P.act_head_W = make_linear_W("act_head_W", H, V, rng);
  P.act_head_b = make_linear_b("act_head_b", H, V, rng);
  P.ts_head_W = make_linear_W("ts_head_W", H, 1, rng);
  P.ts_head_b = make_linear_b("ts_head_b", H, 1, rng);
  for (int k = 0; k < config.n_cat(); ++k)
    P.cat_heads.push_back(make_attr_head("cat_head[" + config.cat_attr_names[static_cast<size_t>(k)] + "]",
                                         U, Ah, config.cat_attr_arities[static_cast<size_t>(k)], rng));
  for (const auto& name : config.num_attr_names)
    P.num_heads.push_back(make_attr_head("num_head[" + name + "]", U, Ah, 1, rng));
  return P;
}

std::vector<ad::Parameter*> ModelParameters::all() {
  std::vector<ad::Parameter*> out{&emb_act};
  for (auto& p : emb_cat) out.push_back(&p);
  for (auto& p : enc_cat_W) out.push_back(&p);
  for (auto& p : enc_cat_b) out.push_back(&p);
  for (auto& p : enc_num_W) out.push_back(&p);
  for (auto& p : enc_num_b) out.push_back(&p);
  for (auto* p : {&enc_Wih, &enc_Whh, &enc_b, &mu_W, &mu_b, &lv_W, &lv_b, &up_W, &up_b,
                  &dec_act_Wih, &dec_act_Whh, &dec_act_b, &dec_ts_Wih, &dec_ts_Whh, &dec_ts_b,
                  &act_head_W, &act_head_b, &ts_head_W, &ts_head_b})
    out.push_back(p);
  for (auto& h : cat_heads) {
    out.push_back(&h.W1);
    out.push_back(&h.b1);
    out.push_back(&h.W2);
    out.push_back(&h.b2);
  }
  for (auto& h : num_heads) {
    out.push_back(&h.W1);
    out.push_back(&h.b1);
    out.push_back(&h.W2);
    out.push_back(&h.b2);
  }
  return out;
}

std::vector<const ad::Parameter*> ModelParameters::all() const {
  auto mutable_all = const_cast<ModelParameters*>(this)->all();
  return {mutable_all.begin(), mutable_all.end()};
}

void ModelParameters::zero_grads() {
  for (ad::Parameter* p : all()) p->zero_grad();
}

std::int64_t ModelParameters::parameter_count() const {
  std::int64_t n = 0;
  for (const ad::Parameter* p : all()) n += p->size();
  return n;
}

// ---- batch assembly --------------------------------------------------------

EncodedBatch make_batch(const std::vector<const EncodedTrace*>& traces, const ModelConfig& config) {
  if (traces.empty()) throw ValidationError("cannot build an empty batch");
  const int B = static_cast<int>(traces.size());
  int L = 0;
  std::vector<int> lengths(traces.size());
  for (size_t b = 0; b < traces.size(); ++b) {
    const EncodedTrace& e = *traces[b];
    if (e.activity_ids.size() != e.interarrivals.size() + 1)
      throw ValidationError("encoded trace is malformed: activities/interarrivals misaligned");
    lengths[b] = static_cast<int>(e.activity_ids.size());
    L = std::max(L, lengths[b]);
  }
  const int pad = config.pad_index();
  const int eot = config.eot_index();

  EncodedBatch batch;
  batch.L = L;
  batch.lengths = lengths;
  batch.act_inputs = ad::IMat::Constant(B, L, pad);
  batch.prev_ids = ad::IMat::Constant(B, L, pad);
  batch.interarrivals = Mat::Zero(B, L);
  batch.prev_interarrivals = Mat::Zero(B, L);
  batch.act_mask = Mat::Zero(B, L);
  batch.t_mask = Mat::Zero(B, L);
  batch.cat_ids = ad::IMat::Zero(B, config.n_cat());
  batch.num_vals = Mat::Zero(B, config.n_num());
  batch.condition = Mat::Zero(B, 1);

  for (int b = 0; b < B; ++b) {
    const EncodedTrace& e = *traces[static_cast<size_t>(b)];
    const int len = lengths[static_cast<size_t>(b)];
    for (int j = 0; j < len; ++j) {
      batch.act_inputs(b, j) = e.activity_ids[static_cast<size_t>(j)];
      batch.act_mask(b, j) = 1.0;
      batch.prev_ids(b, j) = j == 0 ? eot : e.activity_ids[static_cast<size_t>(j - 1)];
    }
    for (int j = 0; j + 1 < len; ++j) {
      batch.interarrivals(b, j) = e.interarrivals[static_cast<size_t>(j)];
      batch.t_mask(b, j) = 1.0;
    }
    for (int j = 1; j < len; ++j) batch.prev_interarrivals(b, j) = batch.interarrivals(b, j - 1);
    for (int k = 0; k < config.n_cat(); ++k) {
      const auto& name = config.cat_attr_names[static_cast<size_t>(k)];
      auto it = e.cat_attr_ids.find(name);
      if (it == e.cat_attr_ids.end())
        throw ValidationError("encoded trace lacks categorical attribute '" + name + "'");
      batch.cat_ids(b, k) = it->second;
    }
    for (int k = 0; k < config.n_num(); ++k) {
      const auto& name = config.num_attr_names[static_cast<size_t>(k)];
      auto it = e.num_attrs.find(name);
      if (it == e.num_attrs.end())
        throw ValidationError("encoded trace lacks numerical attribute '" + name + "'");
      batch.num_vals(b, k) = it->second;
    }
    batch.condition(b, 0) = e.condition;
  }
  return batch;
}

// ---- tape forward ----------------------------------------------------------

TapeForward forward_teacher(ad::Tape& tape, ModelParameters& P, const EncodedBatch& batch,
                            const Mat& noise, bool train_mode, std::mt19937_64& dropout_rng) {
  const ModelConfig& cfg = P.config;
  const int L = batch.L;
  const int E = cfg.embedding_size, H = cfg.lstm_hidden, U = cfg.upsample_dim;
  const double p = train_mode ? cfg.dropout : 0.0;
  if (noise.rows() != batch.B() || noise.cols() != cfg.latent_dim)
    throw ValidationError("reparameterization noise has the wrong shape");

  TapeForward out;
  ad::Var c = tape.leaf(batch.condition, "condition");
  out.condition = c;

  // Encoder: activity embedding + interarrival per step -> LSTM final state.
  ad::Var enc_emb = ad::embed_seq(tape, P.emb_act, batch.act_inputs, "enc_act_embed");
  ad::Var t_in = tape.leaf(batch.interarrivals, "interarrivals");
  ad::Var x_enc = ad::seq_concat(tape, {{enc_emb, E, true}, {t_in, 1, true}}, L, "enc_input");
  ad::Var hs = ad::lstm_seq(tape, x_enc, batch.act_mask, P.enc_Wih, P.enc_Whh, P.enc_b, L, "enc_lstm");
  ad::Var h_last = ad::slice_cols(tape, hs, (L - 1) * H, H, "enc_last");
  if (p > 0.0) h_last = ad::dropout(tape, h_last, p, dropout_rng);

  std::vector<ad::Var> feats{h_last};
  for (int k = 0; k < cfg.n_cat(); ++k) {
    Eigen::VectorXi ids = batch.cat_ids.col(k);
    ad::Var e = ad::embed_rows(tape, P.emb_cat[static_cast<size_t>(k)], ids, "cat_embed");
    feats.push_back(ad::linear(tape, e, P.enc_cat_W[static_cast<size_t>(k)],
                               P.enc_cat_b[static_cast<size_t>(k)], "enc_cat_map"));
  }
  for (int k = 0; k < cfg.n_num(); ++k) {
    ad::Var v = tape.leaf(batch.num_vals.col(k), "num_attr");
    feats.push_back(ad::linear(tape, v, P.enc_num_W[static_cast<size_t>(k)],
                               P.enc_num_b[static_cast<size_t>(k)], "enc_num_map"));
  }
  feats.push_back(c);
  ad::Var features = ad::concat_cols(tape, feats, "enc_features");
  out.mu = ad::linear(tape, features, P.mu_W, P.mu_b, "mu_head");
  out.logvar = ad::linear(tape, features, P.lv_W, P.lv_b, "logvar_head");

  ad::Var eps = tape.leaf(noise, "noise");
  ad::Var sigma = ad::exp_op(tape, ad::scale(tape, out.logvar, 0.5));
  out.z = ad::add(tape, out.mu, ad::hadamard(tape, sigma, eps));

  // Decoder: upsample [z; c], then the two autoregressive unrolls.
  ad::Var zc = ad::concat_cols(tape, {out.z, c}, "dec_zc");
  ad::Var zu = ad::linear(tape, zc, P.up_W, P.up_b, "upsample");

  ad::Var prev_emb = ad::embed_seq(tape, P.emb_act, batch.prev_ids, "dec_prev_embed");
  ad::Var x_act = ad::seq_concat(tape, {{zu, U, false}, {prev_emb, E, true}}, L, "dec_act_input");
  ad::Var hs_act =
      ad::lstm_seq(tape, x_act, batch.act_mask, P.dec_act_Wih, P.dec_act_Whh, P.dec_act_b, L, "dec_act_lstm");
  if (p > 0.0) hs_act = ad::dropout(tape, hs_act, p, dropout_rng);
  out.act_logits = ad::seq_linear(tape, hs_act, P.act_head_W, P.act_head_b, L, "act_head");

  ad::Var cur_emb = ad::embed_seq(tape, P.emb_act, batch.act_inputs, "dec_cur_embed");
  ad::Var prev_t = tape.leaf(batch.prev_interarrivals, "prev_interarrivals");
  ad::Var x_ts =
      ad::seq_concat(tape, {{zu, U, false}, {prev_t, 1, true}, {cur_emb, E, true}}, L, "dec_ts_input");
  ad::Var hs_ts =
      ad::lstm_seq(tape, x_ts, batch.act_mask, P.dec_ts_Wih, P.dec_ts_Whh, P.dec_ts_b, L, "dec_ts_lstm");
  if (p > 0.0) hs_ts = ad::dropout(tape, hs_ts, p, dropout_rng);
  ad::Var t_raw = ad::seq_linear(tape, hs_ts, P.ts_head_W, P.ts_head_b, L, "ts_head");
  Mat first_col = Mat::Ones(1, L);
  first_col(0, 0) = 0.0;  // the first interarrival is 0 by definition
  out.t_hat = ad::mask_cols(tape, t_raw, first_col, "pin_t1");

  for (int k = 0; k < cfg.n_cat(); ++k) {
    AttrHead& head = P.cat_heads[static_cast<size_t>(k)];
    ad::Var h1 = ad::relu(tape, ad::linear(tape, zu, head.W1, head.b1, "cat_head_1"));
    out.cat_logits.push_back(ad::linear(tape, h1, head.W2, head.b2, "cat_head_2"));
  }
  for (int k = 0; k < cfg.n_num(); ++k) {
    AttrHead& head = P.num_heads[static_cast<size_t>(k)];
    ad::Var h1 = ad::relu(tape, ad::linear(tape, zu, head.W1, head.b1, "num_head_1"));
    out.num_hat.push_back(ad::linear(tape, h1, head.W2, head.b2, "num_head_2"));
  }
  return out;
}

LossNodes loss_nodes(ad::Tape& tape, const TapeForward& fwd, const EncodedBatch& batch, double beta) {
  const int B = batch.B();
  const int V = static_cast<int>(fwd.act_logits.value().cols()) / batch.L;

  ad::Var act_b = ad::softmax_ce_seq(tape, fwd.act_logits, batch.act_inputs, batch.act_mask, V);
  ad::Var t_b = ad::sse_masked_seq(tape, fwd.t_hat, batch.interarrivals, batch.t_mask);

  ad::Var cat_b;
  for (size_t k = 0; k < fwd.cat_logits.size(); ++k) {
    Eigen::VectorXi ids = batch.cat_ids.col(static_cast<Eigen::Index>(k));
    ad::Var ce = ad::softmax_ce(tape, fwd.cat_logits[k], ids);
    cat_b = cat_b.valid() ? ad::add(tape, cat_b, ce) : ce;
  }
  if (!cat_b.valid()) cat_b = tape.leaf(Mat::Zero(B, 1), "zero");

  ad::Var num_b;
  for (size_t k = 0; k < fwd.num_hat.size(); ++k) {
    ad::Var se = ad::sse_cols(tape, fwd.num_hat[k], batch.num_vals.col(static_cast<Eigen::Index>(k)));
    num_b = num_b.valid() ? ad::add(tape, num_b, se) : se;
  }
  if (!num_b.valid()) num_b = tape.leaf(Mat::Zero(B, 1), "zero");

  ad::Var kl_b = ad::kl_std_normal(tape, fwd.mu, fwd.logvar);

  LossNodes nodes;
  nodes.act_ce = ad::mean_rows(tape, act_b);
  nodes.t_mse = ad::mean_rows(tape, t_b);
  nodes.cat_ce = ad::mean_rows(tape, cat_b);
  nodes.num_mse = ad::mean_rows(tape, num_b);
  nodes.kl = ad::mean_rows(tape, kl_b);
  ad::Var recon = ad::add(tape, ad::add(tape, nodes.act_ce, nodes.t_mse),
                          ad::add(tape, nodes.cat_ce, nodes.num_mse));
  nodes.total = ad::add(tape, recon, ad::scale(tape, nodes.kl, beta));
  return nodes;
}

LossBreakdown read_loss(const LossNodes& nodes) {
  LossBreakdown l;
  l.act_ce = nodes.act_ce.value()(0, 0);
  l.t_mse = nodes.t_mse.value()(0, 0);
  l.cat_ce = nodes.cat_ce.value()(0, 0);
  l.num_mse = nodes.num_mse.value()(0, 0);
  l.kl = nodes.kl.value()(0, 0);
  l.total = nodes.total.value()(0, 0);
  return l;
}

// ---- struct-level operations ------------------------------------------------

std::vector<LatentPosterior> encode(const ModelParameters& P, const std::vector<EncodedTrace>& traces) {
  const ModelConfig& cfg = P.config;
  const int H = cfg.lstm_hidden;
  std::vector<LatentPosterior> out;
  out.reserve(traces.size());
  for (size_t idx = 0; idx < traces.size(); ++idx) {
    const EncodedTrace& e = traces[idx];
    RowVec h = RowVec::Zero(H), c = RowVec::Zero(H);
    RowVec x(cfg.embedding_size + 1);
    for (size_t i = 0; i < e.activity_ids.size(); ++i) {
      int id = e.activity_ids[i];
      if (id < 0 || id >= P.emb_act.value.rows())
        throw ValidationError("activity id out of range in encoded trace");
      x << P.emb_act.value.row(id), (i < e.interarrivals.size() ? e.interarrivals[i] : 0.0);
      lstm_step(x, h, c, P.enc_Wih.value, P.enc_Whh.value, P.enc_b.value);
    }
    RowVec feat(cfg.feature_width());
    int off = 0;
    feat.segment(off, H) = h;
    off += H;
    for (int k = 0; k < cfg.n_cat(); ++k) {
      int id = e.cat_attr_ids.at(cfg.cat_attr_names[static_cast<size_t>(k)]);
      RowVec emb = P.emb_cat[static_cast<size_t>(k)].value.row(id);
      feat.segment(off, cfg.attr_feature_dim) =
          emb * P.enc_cat_W[static_cast<size_t>(k)].value + P.enc_cat_b[static_cast<size_t>(k)].value.row(0);
      off += cfg.attr_feature_dim;
    }
    for (int k = 0; k < cfg.n_num(); ++k) {
      RowVec v(1);
      v(0) = e.num_attrs.at(cfg.num_attr_names[static_cast<size_t>(k)]);
      feat.segment(off, cfg.attr_feature_dim) =
          v * P.enc_num_W[static_cast<size_t>(k)].value + P.enc_num_b[static_cast<size_t>(k)].value.row(0);
      off += cfg.attr_feature_dim;
    }
    feat(off) = e.condition;

    LatentPosterior post;
    post.mu = (feat * P.mu_W.value + P.mu_b.value.row(0)).transpose();
    post.logvar = (feat * P.lv_W.value + P.lv_b.value.row(0)).transpose();
    if (!post.mu.allFinite() || !post.logvar.allFinite())
      throw NumericError("encoder produced a non-finite posterior (trace index " +
                         std::to_string(idx) + ")");
    out.push_back(std::move(post));
  }
  return out;
}

Eigen::VectorXd reparameterize(const LatentPosterior& post, const Eigen::VectorXd& noise) {
  if (post.mu.size() != post.logvar.size() || post.mu.size() != noise.size())
    throw ValidationError("reparameterize: mu/logvar/noise sizes disagree");
  return post.mu.array() + (0.5 * post.logvar.array()).exp() * noise.array();
}

double kl_divergence(const LatentPosterior& post) {
  return 0.5 * (post.mu.array().square() + post.logvar.array().exp() - post.logvar.array() - 1.0).sum();
}

DecoderOutput decode(const ModelParameters& P, const Eigen::VectorXd& z, double condition,
                     const EncodedTrace* teacher, int max_len) {
  const ModelConfig& cfg = P.config;
  const int H = cfg.lstm_hidden, E = cfg.embedding_size, U = cfg.upsample_dim;
  const int eot = cfg.eot_index();
  if (z.size() != cfg.latent_dim) throw ValidationError("decode: latent vector has the wrong size");
  if (!teacher && max_len <= 0) throw ValidationError("decode: max_len must be positive");

  RowVec zc(cfg.latent_dim + 1);
  zc << z.transpose(), condition;
  RowVec zu = zc * P.up_W.value + P.up_b.value.row(0);

  DecoderOutput out;
  for (int k = 0; k < cfg.n_cat(); ++k) {
    const AttrHead& head = P.cat_heads[static_cast<size_t>(k)];
    RowVec h1 = (zu * head.W1.value + head.b1.value.row(0)).cwiseMax(0.0);
    out.cat_attr_logits[cfg.cat_attr_names[static_cast<size_t>(k)]] =
        (h1 * head.W2.value + head.b2.value.row(0)).transpose();
  }
  for (int k = 0; k < cfg.n_num(); ++k) {
    const AttrHead& head = P.num_heads[static_cast<size_t>(k)];
    RowVec h1 = (zu * head.W1.value + head.b1.value.row(0)).cwiseMax(0.0);
    out.num_attrs_hat[cfg.num_attr_names[static_cast<size_t>(k)]] =
        (h1 * head.W2.value + head.b2.value.row(0))(0);
  }

  RowVec h_a = RowVec::Zero(H), c_a = RowVec::Zero(H);
  RowVec h_t = RowVec::Zero(H), c_t = RowVec::Zero(H);
  int prev = eot;
  double prev_t = 0.0;
  RowVec x_a(U + E), x_t(U + 1 + E);
  const int steps = teacher ? static_cast<int>(teacher->activity_ids.size()) : max_len;
  for (int k = 0;; ++k) {
    if (k >= steps) {
      if (!teacher) out.truncated = true;
      break;
    }
    x_a << zu, P.emb_act.value.row(prev);
    lstm_step(x_a, h_a, c_a, P.dec_act_Wih.value, P.dec_act_Whh.value, P.dec_act_b.value);
    RowVec logits = h_a * P.act_head_W.value + P.act_head_b.value.row(0);
    out.activity_logits.push_back(logits.transpose());
    const int chosen = teacher ? teacher->activity_ids[static_cast<size_t>(k)] : argmax_lowest(logits);
    if (chosen == eot) break;

    x_t << zu, prev_t, P.emb_act.value.row(chosen);
    lstm_step(x_t, h_t, c_t, P.dec_ts_Wih.value, P.dec_ts_Whh.value, P.dec_ts_b.value);
    double t_hat = k == 0 ? 0.0 : (h_t * P.ts_head_W.value + P.ts_head_b.value.row(0))(0);
    out.activities.push_back(chosen);
    out.interarrivals_hat.push_back(t_hat);
    prev = chosen;
    prev_t = teacher ? teacher->interarrivals[static_cast<size_t>(k)] : t_hat;
  }
  return out;
}

LossBreakdown loss(const DecoderOutput& out, const EncodedTrace& target, const LatentPosterior& post,
                   double beta) {
  if (out.activity_logits.size() != target.activity_ids.size())
    throw ValidationError("loss: decoder ran " + std::to_string(out.activity_logits.size()) +
                          " steps but the target has " + std::to_string(target.activity_ids.size()) +
                          " activity symbols");
  if (out.interarrivals_hat.size() != target.interarrivals.size())
    throw ValidationError("loss: predicted " + std::to_string(out.interarrivals_hat.size()) +
                          " interarrivals but the target has " +
                          std::to_string(target.interarrivals.size()));
  LossBreakdown l;
  for (size_t i = 0; i < target.activity_ids.size(); ++i)
    l.act_ce += stable_ce(out.activity_logits[i], target.activity_ids[i]);
  for (size_t i = 0; i < target.interarrivals.size(); ++i) {
    double d = out.interarrivals_hat[i] - target.interarrivals[i];
    l.t_mse += d * d;
  }
  for (const auto& [name, id] : target.cat_attr_ids)
    l.cat_ce += stable_ce(out.cat_attr_logits.at(name), id);
  for (const auto& [name, v] : target.num_attrs) {
    double d = out.num_attrs_hat.at(name) - v;
    l.num_mse += d * d;
  }
  l.kl = kl_divergence(post);
  l.total = l.act_ce + l.t_mse + l.cat_ce + l.num_mse + beta * l.kl;
  return l;
}

// ---- checkpoints -------------------------------------------------------------

namespace {

nlohmann::json mat_to_blob(const Mat& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<std::uint8_t> bytes(static_cast<size_t>(m.size()) * sizeof(double));
  std::memcpy(bytes.data(), m.data(), bytes.size());
  j["data"] = nlohmann::json::binary(std::move(bytes));
  return j;
}

Mat blob_to_mat(const nlohmann::json& j) {
  Mat m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& bytes = j.at("data").get_binary();
  if (bytes.size() != static_cast<size_t>(m.size()) * sizeof(double))
    throw ParseError("checkpoint blob has the wrong byte count");
  std::memcpy(m.data(), bytes.data(), bytes.size());
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json j;
  j["format"] = "tracegen-checkpoint";
  j["version"] = 1;
  j["config"] = nlohmann::json::parse(ckpt.params.config.to_json());
  j["encoding_hash"] = ckpt.encoding_hash;
  j["trained_epochs"] = ckpt.trained_epochs;
  j["best_epoch"] = ckpt.best_epoch;
  j["best_val"] = ckpt.best_val;
  j["seed"] = ckpt.seed;
  nlohmann::json params = nlohmann::json::object();
  for (const ad::Parameter* p : ckpt.params.all()) params[p->name] = mat_to_blob(p->value);
  j["params"] = std::move(params);
  if (ckpt.opt) {
    nlohmann::json opt;
    opt["step"] = ckpt.opt->step;
    nlohmann::json m = nlohmann::json::object(), v = nlohmann::json::object();
    for (const auto& [name, mat] : ckpt.opt->m) m[name] = mat_to_blob(mat);
    for (const auto& [name, mat] : ckpt.opt->v) v[name] = mat_to_blob(mat);
    opt["m"] = std::move(m);
    opt["v"] = std::move(v);
    j["opt"] = std::move(opt);
  }
  std::vector<std::uint8_t> cbor = nlohmann::json::to_cbor(j);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(cbor.data()), static_cast<std::streamsize>(cbor.size()));
  if (!f) throw Error("failed to write checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> cbor((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  nlohmann::json j;
  try {
    j = nlohmann::json::from_cbor(cbor);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("'" + path + "' is not a valid checkpoint: " + e.what());
  }
  if (j.value("format", "") != "tracegen-checkpoint" || j.value("version", 0) != 1)
    throw ParseError("'" + path + "' is not a version-1 checkpoint");

  Checkpoint ckpt;
  ModelConfig config = ModelConfig::from_json(j.at("config").dump());
  ckpt.params = ModelParameters::init(config, 0);
  const auto& params = j.at("params");
  for (ad::Parameter* p : ckpt.params.all()) {
    if (!params.contains(p->name))
      throw ConfigError("checkpoint is missing parameter '" + p->name + "'");
    Mat m = blob_to_mat(params.at(p->name));
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw ConfigError("checkpoint parameter '" + p->name + "' has shape " +
                        std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
                        std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    p->value = std::move(m);
  }
  ckpt.encoding_hash = j.at("encoding_hash").get<std::string>();
  ckpt.trained_epochs = j.at("trained_epochs").get<int>();
  ckpt.best_epoch = j.at("best_epoch").get<int>();
  ckpt.best_val = j.at("best_val").get<double>();
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("opt")) {
    OptState opt;
    opt.step = j["opt"].at("step").get<std::int64_t>();
    for (const auto& [name, blob] : j["opt"].at("m").items()) opt.m[name] = blob_to_mat(blob);
    for (const auto& [name, blob] : j["opt"].at("v").items()) opt.v[name] = blob_to_mat(blob);
    ckpt.opt = std::move(opt);
  }
  return ckpt;
}

}  // namespace tracegen
