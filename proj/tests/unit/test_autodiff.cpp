#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"

#include "tracegen/autodiff.hpp"

using namespace tracegen;
using ad::Mat;

namespace {

Mat rnd(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 0.8) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

ad::Parameter make_param(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                         std::mt19937_64& rng, double scale = 0.8) {
  return ad::Parameter(name, rnd(rows, cols, rng, scale));
}

using BuildFn = std::function<ad::Var(ad::Tape&)>;

double eval_scalar(const BuildFn& build) {
  ad::Tape tape;
  return build(tape).value()(0, 0);
}

/// Analytic gradients vs central finite differences over every entry of every
/// parameter; returns the worst relative error.
double max_rel_err(const BuildFn& build, const std::vector<ad::Parameter*>& params) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape tape;
    ad::Var out = build(tape);
    tape.backward(out);
  }
  const double h = 1e-5;
  double worst = 0.0;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + h;
      const double fp = eval_scalar(build);
      p->value.data()[i] = orig - h;
      const double fm = eval_scalar(build);
      p->value.data()[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = p->grad.data()[i];
      const double err = std::abs(fd - an) / std::max(std::abs(fd) + std::abs(an), 1e-6);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("linear gradients") {
  std::mt19937_64 rng(101);
  const Mat x = rnd(3, 4, rng);
  const Mat target = rnd(3, 2, rng);
  ad::Parameter W = make_param("W", 4, 2, rng);
  ad::Parameter b = make_param("b", 1, 2, rng);

  auto build = [&](ad::Tape& t) {
    ad::Var y = ad::linear(t, t.leaf(x), W, b);
    return ad::mean_rows(t, ad::sse_cols(t, y, target));
  };
  CHECK(max_rel_err(build, {&W, &b}) < 1e-6);
}

TEST_CASE("seq_linear gradients") {
  std::mt19937_64 rng(102);
  const int L = 3;
  const Mat x = rnd(2, L * 4, rng);
  const Mat target = rnd(2, L * 2, rng);
  ad::Parameter W = make_param("W", 4, 2, rng);
  ad::Parameter b = make_param("b", 1, 2, rng);

  auto build = [&](ad::Tape& t) {
    ad::Var y = ad::seq_linear(t, t.leaf(x), W, b, L);
    return ad::mean_rows(t, ad::sse_cols(t, y, target));
  };
  CHECK(max_rel_err(build, {&W, &b}) < 1e-6);
}

TEST_CASE("elementwise chain gradients") {
  std::mt19937_64 rng(103);
  const Mat x = rnd(3, 4, rng);
  const Mat target = rnd(3, 3, rng);
  ad::Parameter W1 = make_param("W1", 4, 3, rng);
  ad::Parameter b1 = make_param("b1", 1, 3, rng);
  ad::Parameter W2 = make_param("W2", 3, 3, rng);
  ad::Parameter b2 = make_param("b2", 1, 3, rng);

  auto build = [&](ad::Tape& t) {
    ad::Var h = ad::relu(t, ad::linear(t, t.leaf(x), W1, b1));
    ad::Var a = ad::tanh_op(t, ad::linear(t, h, W2, b2));
    ad::Var s = ad::sigmoid(t, a);
    ad::Var e = ad::exp_op(t, ad::scale(t, a, 0.3));
    ad::Var mix = ad::add(t, ad::hadamard(t, s, e), ad::sub(t, a, s));
    return ad::mean_rows(t, ad::sse_cols(t, mix, target));
  };
  CHECK(max_rel_err(build, {&W1, &b1, &W2, &b2}) < 1e-6);
}

TEST_CASE("embedding gradients and sparsity") {
  std::mt19937_64 rng(104);
  ad::Parameter table = make_param("emb", 5, 3, rng);
  Eigen::VectorXi ids(4);
  ids << 0, 2, 2, 4;
  Eigen::VectorXi targets(4);
  targets << 1, 0, 1, 0;
  ad::Parameter W = make_param("W", 3, 2, rng);
  ad::Parameter b = make_param("b", 1, 2, rng);

  auto build = [&](ad::Tape& t) {
    ad::Var e = ad::embed_rows(t, table, ids);
    ad::Var logits = ad::linear(t, e, W, b);
    return ad::mean_rows(t, ad::softmax_ce(t, logits, targets));
  };
  CHECK(max_rel_err(build, {&table, &W, &b}) < 1e-6);

  // Rows never looked up receive no gradient.
  CHECK(table.grad.row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(table.grad.row(3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(table.grad.row(2).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("embed_seq with masked cross-entropy") {
  std::mt19937_64 rng(105);
  const int L = 3, V = 4;
  ad::Parameter table = make_param("emb", V, 2, rng);
  ad::Parameter W = make_param("W", 2, V, rng);
  ad::Parameter b = make_param("b", 1, V, rng);
  ad::IMat ids(2, L);
  ids << 0, 1, 2, 3, 0, 0;
  ad::IMat targets(2, L);
  targets << 1, 2, 0, 0, 3, 1;
  Mat mask(2, L);
  mask << 1, 1, 1, 1, 0, 0;  // second trace: only step 0 is real

  auto build = [&](ad::Tape& t) {
    ad::Var e = ad::embed_seq(t, table, ids);
    ad::Var logits = ad::seq_linear(t, e, W, b, L);
    return ad::mean_rows(t, ad::softmax_ce_seq(t, logits, targets, mask, V));
  };
  CHECK(max_rel_err(build, {&table, &W, &b}) < 1e-6);
}

TEST_CASE("lstm_seq gradients with ragged masks") {
  std::mt19937_64 rng(106);
  const int L = 4, In = 3, H = 4;
  const Mat x = rnd(3, L * In, rng);
  Mat mask(3, L);
  mask << 1, 1, 1, 0,
          1, 0, 0, 0,
          1, 1, 1, 1;
  const Mat target = rnd(3, L * H, rng, 0.3);
  ad::Parameter Wih = make_param("Wih", In, 4 * H, rng, 0.5);
  ad::Parameter Whh = make_param("Whh", H, 4 * H, rng, 0.5);
  ad::Parameter b = make_param("b", 1, 4 * H, rng, 0.5);
  ad::Parameter Wx = make_param("Wx", In, In, rng);
  ad::Parameter bx = make_param("bx", 1, In, rng);

  auto build = [&](ad::Tape& t) {
    // Route x through a seq_linear so the LSTM's input-gradient path is exercised too.
    ad::Var xin = ad::seq_linear(t, t.leaf(x), Wx, bx, L);
    ad::Var h = ad::lstm_seq(t, xin, mask, Wih, Whh, b, L);
    return ad::mean_rows(t, ad::sse_cols(t, h, target));
  };
  CHECK(max_rel_err(build, {&Wih, &Whh, &b, &Wx, &bx}) < 1e-6);
}

TEST_CASE("lstm_seq carry-forward masking holds the final state") {
  std::mt19937_64 rng(107);
  const int In = 2, H = 3;
  ad::Parameter Wih = make_param("Wih", In, 4 * H, rng, 0.5);
  ad::Parameter Whh = make_param("Whh", H, 4 * H, rng, 0.5);
  ad::Parameter b = make_param("b", 1, 4 * H, rng, 0.5);

  const Mat steps = rnd(1, 3 * In, rng);
  Mat mask3(1, 3);
  mask3 << 1, 1, 0;  // only two real steps
  Mat mask2(1, 2);
  mask2 << 1, 1;

  ad::Tape t3;
  ad::Var out3 = ad::lstm_seq(t3, t3.leaf(steps), mask3, Wih, Whh, b, 3);
  ad::Tape t2;
  ad::Var out2 = ad::lstm_seq(t2, t2.leaf(steps.leftCols(2 * In)), mask2, Wih, Whh, b, 2);

  // The padded step must not advance the state: the last block of the longer
  // run equals the final state of the shorter one.
  Mat last3 = out3.value().rightCols(H);
  Mat last2 = out2.value().rightCols(H);
  CHECK((last3 - last2).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("slice and concat round-trip") {
  std::mt19937_64 rng(108);
  const Mat x = rnd(2, 6, rng);
  const Mat target = rnd(2, 6, rng);
  ad::Parameter W = make_param("W", 6, 6, rng);
  ad::Parameter b = make_param("b", 1, 6, rng);

  auto build = [&](ad::Tape& t) {
    ad::Var y = ad::linear(t, t.leaf(x), W, b);
    ad::Var left = ad::slice_cols(t, y, 0, 2);
    ad::Var mid = ad::slice_cols(t, y, 2, 3);
    ad::Var right = ad::slice_cols(t, y, 5, 1);
    ad::Var joined = ad::concat_cols(t, {left, mid, right});
    return ad::mean_rows(t, ad::sse_cols(t, joined, target));
  };
  CHECK(max_rel_err(build, {&W, &b}) < 1e-6);

  ad::Tape t;
  ad::Var y = ad::linear(t, t.leaf(x), W, b);
  ad::Var joined = ad::concat_cols(
      t, {ad::slice_cols(t, y, 0, 2), ad::slice_cols(t, y, 2, 3), ad::slice_cols(t, y, 5, 1)});
  CHECK((joined.value() - y.value()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("seq_concat mixes broadcast and per-step pieces") {
  std::mt19937_64 rng(109);
  const int L = 3;
  const Mat xstep = rnd(2, L * 2, rng);
  const Mat xfix = rnd(2, 3, rng);
  const Mat target = rnd(2, L * 5, rng);
  ad::Parameter Wf = make_param("Wf", 3, 3, rng);
  ad::Parameter bf = make_param("bf", 1, 3, rng);
  ad::Parameter Ws = make_param("Ws", 2, 2, rng);
  ad::Parameter bs = make_param("bs", 1, 2, rng);

  auto build = [&](ad::Tape& t) {
    ad::Var fixed = ad::linear(t, t.leaf(xfix), Wf, bf);     // B x 3, broadcast
    ad::Var per = ad::seq_linear(t, t.leaf(xstep), Ws, bs, L);  // B x L*2
    ad::Var joined = ad::seq_concat(t, {{fixed, 3, false}, {per, 2, true}}, L);
    return ad::mean_rows(t, ad::sse_cols(t, joined, target));
  };
  CHECK(max_rel_err(build, {&Wf, &bf, &Ws, &bs}) < 1e-6);

  // Value layout: each step block is [fixed, per-step block].
  ad::Tape t;
  ad::Var fixed = ad::linear(t, t.leaf(xfix), Wf, bf);
  ad::Var per = ad::seq_linear(t, t.leaf(xstep), Ws, bs, L);
  ad::Var joined = ad::seq_concat(t, {{fixed, 3, false}, {per, 2, true}}, L);
  for (int l = 0; l < L; ++l) {
    CHECK((joined.value().middleCols(l * 5, 3) - fixed.value()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((joined.value().middleCols(l * 5 + 3, 2) - per.value().middleCols(l * 2, 2))
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("mask_cols pins columns") {
  std::mt19937_64 rng(110);
  const Mat x = rnd(3, 4, rng);
  const Mat target = rnd(3, 4, rng);
  ad::Parameter W = make_param("W", 4, 4, rng);
  ad::Parameter b = make_param("b", 1, 4, rng);
  Mat row_mask(1, 4);
  row_mask << 0, 1, 1, 0;

  auto build = [&](ad::Tape& t) {
    ad::Var y = ad::mask_cols(t, ad::linear(t, t.leaf(x), W, b), row_mask);
    return ad::mean_rows(t, ad::sse_cols(t, y, target));
  };
  CHECK(max_rel_err(build, {&W, &b}) < 1e-6);

  ad::Tape t;
  ad::Var y = ad::mask_cols(t, ad::linear(t, t.leaf(x), W, b), row_mask);
  CHECK(y.value().col(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(y.value().col(3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(y.value().col(1).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("softmax_ce matches a manual computation") {
  std::mt19937_64 rng(111);
  const Mat logits = rnd(3, 4, rng, 2.0);
  Eigen::VectorXi targets(3);
  targets << 2, 0, 3;

  ad::Tape t;
  ad::Var loss = ad::softmax_ce(t, t.leaf(logits), targets);
  for (int bi = 0; bi < 3; ++bi) {
    double denom = 0.0;
    for (int v = 0; v < 4; ++v) denom += std::exp(logits(bi, v));
    const double expected = std::log(denom) - logits(bi, targets(bi));
    CHECK(loss.value()(bi, 0) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("softmax_ce_seq ignores masked steps") {
  std::mt19937_64 rng(112);
  const int L = 2, V = 3;
  const Mat logits = rnd(2, L * V, rng, 2.0);
  ad::IMat targets(2, L);
  targets << 0, 2, 1, 0;
  Mat mask(2, L);
  mask << 1, 0, 1, 1;

  ad::Tape t;
  ad::Var loss = ad::softmax_ce_seq(t, t.leaf(logits), targets, mask, V);

  auto step_ce = [&](int bi, int l) {
    double denom = 0.0;
    for (int v = 0; v < V; ++v) denom += std::exp(logits(bi, l * V + v));
    return std::log(denom) - logits(bi, l * V + targets(bi, l));
  };
  CHECK(loss.value()(0, 0) == doctest::Approx(step_ce(0, 0)).epsilon(1e-12));
  CHECK(loss.value()(1, 0) == doctest::Approx(step_ce(1, 0) + step_ce(1, 1)).epsilon(1e-12));
}

TEST_CASE("sse ops match manual sums") {
  std::mt19937_64 rng(113);
  const Mat pred = rnd(2, 3, rng);
  const Mat target = rnd(2, 3, rng);
  Mat mask(2, 3);
  mask << 1, 1, 0, 1, 0, 0;

  ad::Tape t;
  ad::Var plain = ad::sse_cols(t, t.leaf(pred), target);
  ad::Var masked = ad::sse_masked_seq(t, t.leaf(pred), target, mask);
  for (int bi = 0; bi < 2; ++bi) {
    double full = 0.0, part = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double d = pred(bi, j) - target(bi, j);
      full += d * d;
      if (mask(bi, j) != 0.0) part += d * d;
    }
    CHECK(plain.value()(bi, 0) == doctest::Approx(full).epsilon(1e-12));
    CHECK(masked.value()(bi, 0) == doctest::Approx(part).epsilon(1e-12));
  }
}

TEST_CASE("kl_std_normal gradients and closed form") {
  std::mt19937_64 rng(114);
  const Mat x = rnd(3, 4, rng);
  ad::Parameter Wm = make_param("Wm", 4, 2, rng);
  ad::Parameter bm = make_param("bm", 1, 2, rng);
  ad::Parameter Wl = make_param("Wl", 4, 2, rng);
  ad::Parameter bl = make_param("bl", 1, 2, rng);

  auto build = [&](ad::Tape& t) {
    ad::Var mu = ad::linear(t, t.leaf(x), Wm, bm);
    ad::Var lv = ad::linear(t, t.leaf(x), Wl, bl);
    return ad::mean_rows(t, ad::kl_std_normal(t, mu, lv));
  };
  CHECK(max_rel_err(build, {&Wm, &bm, &Wl, &bl}) < 1e-6);

  ad::Tape t;
  ad::Var mu = ad::linear(t, t.leaf(x), Wm, bm);
  ad::Var lv = ad::linear(t, t.leaf(x), Wl, bl);
  ad::Var kl = ad::kl_std_normal(t, mu, lv);
  for (int bi = 0; bi < 3; ++bi) {
    double expected = 0.0;
    for (int d = 0; d < 2; ++d) {
      const double m = mu.value()(bi, d), l = lv.value()(bi, d);
      expected += 0.5 * (m * m + std::exp(l) - l - 1.0);
    }
    CHECK(kl.value()(bi, 0) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("dropout semantics") {
  std::mt19937_64 rng(115);
  const Mat x = rnd(4, 6, rng);
  ad::Parameter W = make_param("W", 6, 6, rng);
  ad::Parameter b = make_param("b", 1, 6, rng);
  const Mat target = rnd(4, 6, rng);

  // drop_prob 0 is the identity (same node, no tape growth).
  {
    ad::Tape t;
    std::mt19937_64 r(1);
    ad::Var y = ad::linear(t, t.leaf(x), W, b);
    ad::Var d = ad::dropout(t, y, 0.0, r);
    CHECK(d.node() == y.node());
  }

  // A fixed seed reproduces the mask; entries are either zero or scaled by 1/keep.
  auto run_forward = [&](std::uint64_t seed) {
    ad::Tape t;
    std::mt19937_64 r(seed);
    ad::Var y = ad::linear(t, t.leaf(x), W, b);
    return Mat(ad::dropout(t, y, 0.4, r).value());
  };
  const Mat d1 = run_forward(7);
  CHECK((d1 - run_forward(7)).cwiseAbs().maxCoeff() == 0.0);

  ad::Tape t;
  ad::Var y = ad::linear(t, t.leaf(x), W, b);
  std::mt19937_64 r(7);
  ad::Var d = ad::dropout(t, y, 0.4, r);
  int zeros = 0;
  for (Eigen::Index i = 0; i < d.value().rows(); ++i)
    for (Eigen::Index j = 0; j < d.value().cols(); ++j) {
      const double v = d.value()(i, j), base = y.value()(i, j);
      if (v == 0.0) ++zeros;
      else CHECK(v == doctest::Approx(base / 0.6).epsilon(1e-12));
    }
  CHECK(zeros > 0);
  CHECK(zeros < d.value().size());

  // Gradients through the (seed-fixed) mask.
  auto build = [&](ad::Tape& tape) {
    std::mt19937_64 rr(7);
    ad::Var yy = ad::linear(tape, tape.leaf(x), W, b);
    ad::Var dd = ad::dropout(tape, yy, 0.4, rr);
    return ad::mean_rows(tape, ad::sse_cols(tape, dd, target));
  };
  CHECK(max_rel_err(build, {&W, &b}) < 1e-6);
}

TEST_CASE("tape introspection and gradient accumulation") {
  std::mt19937_64 rng(116);
  const Mat x = rnd(2, 3, rng);
  ad::Parameter W = make_param("W", 3, 2, rng);
  ad::Parameter b = make_param("b", 1, 2, rng);

  ad::Tape t;
  ad::Var leaf = t.leaf(rnd(2, 1, rng), "condition");
  ad::Var y = ad::linear(t, t.leaf(x), W, b);
  ad::Var joined = ad::concat_cols(t, {y, leaf}, "features");
  ad::Var joined2 = ad::concat_cols(t, {leaf, y}, "zc");
  (void)joined;
  (void)joined2;

  auto users = t.consumers(leaf);
  REQUIRE(users.size() == 2);
  CHECK(users[0]->op == "features");
  CHECK(users[1]->op == "zc");
  CHECK(t.consumers(y).size() == 2);

  // Backward accumulates into Parameter::grad; a second pass doubles it.
  const Mat target = rnd(2, 2, rng);
  auto run = [&] {
    ad::Tape tape;
    ad::Var out = ad::mean_rows(tape, ad::sse_cols(tape, ad::linear(tape, tape.leaf(x), W, b), target));
    tape.backward(out);
  };
  W.zero_grad();
  b.zero_grad();
  run();
  const Mat once = W.grad;
  run();
  CHECK((W.grad - 2.0 * once).cwiseAbs().maxCoeff() < 1e-12);
  W.zero_grad();
  CHECK(W.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax_rows is a proper distribution") {
  std::mt19937_64 rng(117);
  const Mat logits = rnd(5, 7, rng, 30.0);  // large logits stay finite thanks to the shift
  const Mat p = ad::softmax_rows(logits);
  CHECK(ad::all_finite(p));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.row(i).minCoeff() >= 0.0);
  }
}

}  // TEST_SUITE
