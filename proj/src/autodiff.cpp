#include <cmath>
#include <stdexcept>

#include "tracegen/autodiff.hpp"

namespace tracegen::ad {

namespace {

Mat sigmoid_mat(const Mat& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

/// Scale each row b of `x` by `m(b)`.
Mat row_scale(const Mat& x, const Eigen::VectorXd& m) {
  return (x.array().colwise() * m.array()).matrix();
}

void check(bool ok, const char* what) {
  if (!ok) throw std::logic_error(std::string("autodiff shape error: ") + what);
}

}  // namespace

bool all_finite(const Mat& m) { return m.allFinite(); }

Mat softmax_rows(const Mat& logits) {
  Mat shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Mat e = shifted.array().exp().matrix();
  Eigen::VectorXd z = e.rowwise().sum();
  return (e.array().colwise() / z.array()).matrix();
}

Var Tape::leaf(Mat value, std::string op) { return Var(make(std::move(op), std::move(value), {})); }

Node* Tape::make(std::string op, Mat value, std::vector<Node*> parents) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.op = std::move(op);
  n.value = std::move(value);
  n.parents = std::move(parents);
  for (Node* p : n.parents)
    if (p && p->requires_grad) n.requires_grad = true;
  return &n;
}

void Tape::backward(const Var& scalar_out) {
  Node* root = scalar_out.node();
  check(root && root->value.rows() == 1 && root->value.cols() == 1, "backward root must be 1x1");
  root->grad = Mat::Ones(1, 1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = *it;
    if (!n.requires_grad || n.grad.size() == 0 || !n.backprop) continue;
    n.backprop(n);
  }
}

std::vector<const Node*> Tape::consumers(const Var& v) const {
  std::vector<const Node*> out;
  for (const Node& n : nodes_)
    for (const Node* p : n.parents)
      if (p == v.node()) {
        out.push_back(&n);
        break;
      }
  return out;
}

void accumulate(Node* n, const Mat& g) {
  if (!n || !n->requires_grad) return;
  if (n->grad.size() == 0) n->grad = Mat::Zero(n->value.rows(), n->value.cols());
  n->grad += g;
}

Var linear(Tape& t, Var x, Parameter& W, Parameter& b, std::string label) {
  check(x.value().cols() == W.value.rows(), "linear: x/W");
  check(b.value.rows() == 1 && b.value.cols() == W.value.cols(), "linear: b");
  Mat y = x.value() * W.value;
  y.rowwise() += b.value.row(0);
  Node* n = t.make(std::move(label), std::move(y), {x.node()});
  n->requires_grad = true;
  Node* xn = x.node();
  Parameter* Wp = &W;
  Parameter* bp = &b;
  n->backprop = [xn, Wp, bp](Node& self) {
    const Mat& g = self.grad;
    Wp->grad.noalias() += xn->value.transpose() * g;
    bp->grad.row(0) += g.colwise().sum();
    if (xn->requires_grad) accumulate(xn, g * Wp->value.transpose());
  };
  return Var(n);
}

Var seq_linear(Tape& t, Var x, Parameter& W, Parameter& b, int L, std::string label) {
  const int In = static_cast<int>(W.value.rows());
  const int Out = static_cast<int>(W.value.cols());
  check(x.value().cols() == static_cast<Eigen::Index>(L) * In, "seq_linear: x/W/L");
  const Eigen::Index B = x.value().rows();
  Mat y(B, static_cast<Eigen::Index>(L) * Out);
  for (int l = 0; l < L; ++l) {
    y.middleCols(static_cast<Eigen::Index>(l) * Out, Out).noalias() =
        x.value().middleCols(static_cast<Eigen::Index>(l) * In, In) * W.value;
    y.middleCols(static_cast<Eigen::Index>(l) * Out, Out).rowwise() += b.value.row(0);
  }
  Node* n = t.make(std::move(label), std::move(y), {x.node()});
  n->requires_grad = true;
  Node* xn = x.node();
  Parameter* Wp = &W;
  Parameter* bp = &b;
  n->backprop = [xn, Wp, bp, L, In, Out](Node& self) {
    const Mat& g = self.grad;
    Mat dx;
    if (xn->requires_grad) dx = Mat::Zero(g.rows(), static_cast<Eigen::Index>(L) * In);
    for (int l = 0; l < L; ++l) {
      auto gl = g.middleCols(static_cast<Eigen::Index>(l) * Out, Out);
      Wp->grad.noalias() += xn->value.middleCols(static_cast<Eigen::Index>(l) * In, In).transpose() * gl;
      bp->grad.row(0) += gl.colwise().sum();
      if (xn->requires_grad)
        dx.middleCols(static_cast<Eigen::Index>(l) * In, In).noalias() = gl * Wp->value.transpose();
    }
    if (xn->requires_grad) accumulate(xn, dx);
  };
  return Var(n);
}

Var embed_rows(Tape& t, Parameter& table, const Eigen::VectorXi& ids, std::string label) {
  const Eigen::Index B = ids.size();
  const Eigen::Index E = table.value.cols();
  Mat y(B, E);
  for (Eigen::Index b = 0; b < B; ++b) {
    check(ids(b) >= 0 && ids(b) < table.value.rows(), "embed: id range");
    y.row(b) = table.value.row(ids(b));
  }
  Node* n = t.make(std::move(label), std::move(y), {});
  n->requires_grad = true;
  Parameter* tp = &table;
  Eigen::VectorXi ids_copy = ids;
  n->backprop = [tp, ids_copy](Node& self) {
    for (Eigen::Index b = 0; b < ids_copy.size(); ++b)
      tp->grad.row(ids_copy(b)) += self.grad.row(b);
  };
  return Var(n);
}

Var embed_seq(Tape& t, Parameter& table, const IMat& ids, std::string label) {
  const Eigen::Index B = ids.rows();
  const Eigen::Index L = ids.cols();
  const Eigen::Index E = table.value.cols();
  Mat y(B, L * E);
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index l = 0; l < L; ++l) {
      check(ids(b, l) >= 0 && ids(b, l) < table.value.rows(), "embed_seq: id range");
      y.block(b, l * E, 1, E) = table.value.row(ids(b, l));
    }
  Node* n = t.make(std::move(label), std::move(y), {});
  n->requires_grad = true;
  Parameter* tp = &table;
  IMat ids_copy = ids;
  n->backprop = [tp, ids_copy, E](Node& self) {
    for (Eigen::Index b = 0; b < ids_copy.rows(); ++b)
      for (Eigen::Index l = 0; l < ids_copy.cols(); ++l)
        tp->grad.row(ids_copy(b, l)) += self.grad.block(b, l * E, 1, E);
  };
  return Var(n);
}

Var lstm_seq(Tape& t, Var x, const Mat& mask, Parameter& Wih, Parameter& Whh, Parameter& b, int L,
             std::string label) {
  const int In = static_cast<int>(Wih.value.rows());
  const int H = static_cast<int>(Whh.value.rows());
  const Eigen::Index B = x.value().rows();
  check(Wih.value.cols() == 4 * H && Whh.value.cols() == 4 * H, "lstm: gate widths");
  check(x.value().cols() == static_cast<Eigen::Index>(L) * In, "lstm: x/L");
  check(mask.rows() == B && mask.cols() == L, "lstm: mask");

  // Forward, keeping only the post-mask h and c trajectories; gates are
  // recomputed during backward to keep the per-batch footprint at 2*L*H.
  Mat hs = Mat::Zero(B, static_cast<Eigen::Index>(L) * H);
  Mat cs = Mat::Zero(B, static_cast<Eigen::Index>(L) * H);
  Mat h = Mat::Zero(B, H), c = Mat::Zero(B, H);
  for (int l = 0; l < L; ++l) {
    Mat a = x.value().middleCols(static_cast<Eigen::Index>(l) * In, In) * Wih.value;
    a.noalias() += h * Whh.value;
    a.rowwise() += b.value.row(0);
    Mat gi = sigmoid_mat(a.leftCols(H));
    Mat gf = sigmoid_mat(a.middleCols(H, H));
    Mat gg = a.middleCols(2 * H, H).array().tanh().matrix();
    Mat go = sigmoid_mat(a.rightCols(H));
    Mat c_new = gf.cwiseProduct(c) + gi.cwiseProduct(gg);
    Mat h_new = go.cwiseProduct(c_new.array().tanh().matrix());
    Eigen::VectorXd m = mask.col(l);
    Eigen::VectorXd im = (1.0 - m.array()).matrix();
    c = row_scale(c_new, m) + row_scale(c, im);
    h = row_scale(h_new, m) + row_scale(h, im);
    hs.middleCols(static_cast<Eigen::Index>(l) * H, H) = h;
    cs.middleCols(static_cast<Eigen::Index>(l) * H, H) = c;
  }

  Node* n = t.make(std::move(label), std::move(hs), {x.node()});
  n->requires_grad = true;
  Node* xn = x.node();
  Parameter* Wihp = &Wih;
  Parameter* Whhp = &Whh;
  Parameter* bp = &b;
  n->backprop = [xn, Wihp, Whhp, bp, L, In, H, B, mask, cs = std::move(cs)](Node& self) {
    const Mat& hs_all = self.value;
    const Mat& g = self.grad;
    Mat dh_carry = Mat::Zero(B, H);
    Mat dc_carry = Mat::Zero(B, H);
    Mat dx;
    if (xn->requires_grad) dx = Mat::Zero(B, static_cast<Eigen::Index>(L) * In);
    Mat da(B, 4 * H);
    for (int l = L - 1; l >= 0; --l) {
      Mat h_prev = l > 0 ? Mat(hs_all.middleCols(static_cast<Eigen::Index>(l - 1) * H, H))
                         : Mat(Mat::Zero(B, H));
      Mat c_prev = l > 0 ? Mat(cs.middleCols(static_cast<Eigen::Index>(l - 1) * H, H))
                         : Mat(Mat::Zero(B, H));
      auto x_l = xn->value.middleCols(static_cast<Eigen::Index>(l) * In, In);
      // Recompute the gate activations of this step.
      Mat a = x_l * Wihp->value;
      a.noalias() += h_prev * Whhp->value;
      a.rowwise() += bp->value.row(0);
      Mat gi = sigmoid_mat(a.leftCols(H));
      Mat gf = sigmoid_mat(a.middleCols(H, H));
      Mat gg = a.middleCols(2 * H, H).array().tanh().matrix();
      Mat go = sigmoid_mat(a.rightCols(H));
      Mat c_new = gf.cwiseProduct(c_prev) + gi.cwiseProduct(gg);
      Mat tanh_c = c_new.array().tanh().matrix();

      Eigen::VectorXd m = mask.col(l);
      Eigen::VectorXd im = (1.0 - m.array()).matrix();
      Mat dh_l = g.middleCols(static_cast<Eigen::Index>(l) * H, H) + dh_carry;
      Mat dh_new = row_scale(dh_l, m);
      Mat dh_prev = row_scale(dh_l, im);  // carried state grad
      Mat dc_new = row_scale(dc_carry, m);
      Mat dc_prev = row_scale(dc_carry, im);

      Mat do_ = dh_new.cwiseProduct(tanh_c);
      dc_new += dh_new.cwiseProduct(go).cwiseProduct((1.0 - tanh_c.array().square()).matrix());
      Mat di = dc_new.cwiseProduct(gg);
      Mat dg = dc_new.cwiseProduct(gi);
      Mat df = dc_new.cwiseProduct(c_prev);
      dc_prev += dc_new.cwiseProduct(gf);

      da.leftCols(H) = di.cwiseProduct(gi).cwiseProduct((1.0 - gi.array()).matrix());
      da.middleCols(H, H) = df.cwiseProduct(gf).cwiseProduct((1.0 - gf.array()).matrix());
      da.middleCols(2 * H, H) = dg.cwiseProduct((1.0 - gg.array().square()).matrix());
      da.rightCols(H) = do_.cwiseProduct(go).cwiseProduct((1.0 - go.array()).matrix());

      Wihp->grad.noalias() += x_l.transpose() * da;
      Whhp->grad.noalias() += h_prev.transpose() * da;
      bp->grad.row(0) += da.colwise().sum();
      if (xn->requires_grad)
        dx.middleCols(static_cast<Eigen::Index>(l) * In, In).noalias() = da * Wihp->value.transpose();
      dh_prev.noalias() += da * Whhp->value.transpose();
      dh_carry = std::move(dh_prev);
      dc_carry = std::move(dc_prev);
    }
    if (xn->requires_grad) accumulate(xn, dx);
  };
  return Var(n);
}

Var slice_cols(Tape& t, Var x, int start, int n, std::string label) {
  check(start >= 0 && x.value().cols() >= start + n, "slice_cols: range");
  Mat y = x.value().middleCols(start, n);
  Node* node = t.make(std::move(label), std::move(y), {x.node()});
  Node* xn = x.node();
  node->backprop = [xn, start, n](Node& self) {
    if (!xn->requires_grad) return;
    if (xn->grad.size() == 0) xn->grad = Mat::Zero(xn->value.rows(), xn->value.cols());
    xn->grad.middleCols(start, n) += self.grad;
  };
  return Var(node);
}

Var concat_cols(Tape& t, std::vector<Var> parts, std::string label) {
  check(!parts.empty(), "concat: empty");
  const Eigen::Index B = parts.front().value().rows();
  Eigen::Index total = 0;
  std::vector<Node*> parents;
  for (const Var& p : parts) {
    check(p.value().rows() == B, "concat: row mismatch");
    total += p.value().cols();
    parents.push_back(p.node());
  }
  Mat y(B, total);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    y.middleCols(off, p.value().cols()) = p.value();
    off += p.value().cols();
  }
  Node* n = t.make(std::move(label), std::move(y), parents);
  std::vector<Node*> srcs = std::move(parents);
  n->backprop = [srcs](Node& self) {
    Eigen::Index off = 0;
    for (Node* src : srcs) {
      if (src->requires_grad) accumulate(src, self.grad.middleCols(off, src->value.cols()));
      off += src->value.cols();
    }
  };
  return Var(n);
}

Var seq_concat(Tape& t, std::vector<SeqPiece> pieces, int L, std::string label) {
  check(!pieces.empty(), "seq_concat: empty");
  const Eigen::Index B = pieces.front().v.value().rows();
  int W = 0;
  std::vector<Node*> parents;
  for (const SeqPiece& p : pieces) {
    check(p.v.value().rows() == B, "seq_concat: row mismatch");
    check(p.v.value().cols() == (p.per_step ? static_cast<Eigen::Index>(L) * p.width : p.width),
          "seq_concat: width");
    W += p.width;
    parents.push_back(p.v.node());
  }
  Mat y(B, static_cast<Eigen::Index>(L) * W);
  for (int l = 0; l < L; ++l) {
    Eigen::Index off = 0;
    for (const SeqPiece& p : pieces) {
      auto dst = y.middleCols(static_cast<Eigen::Index>(l) * W + off, p.width);
      if (p.per_step)
        dst = p.v.value().middleCols(static_cast<Eigen::Index>(l) * p.width, p.width);
      else
        dst = p.v.value();
      off += p.width;
    }
  }
  Node* n = t.make(std::move(label), std::move(y), parents);
  struct PieceRef {
    Node* node;
    int width;
    int offset;
    bool per_step;
  };
  std::vector<PieceRef> refs;
  int off = 0;
  for (const SeqPiece& p : pieces) {
    refs.push_back({p.v.node(), p.width, off, p.per_step});
    off += p.width;
  }
  n->backprop = [refs, L, W](Node& self) {
    for (const PieceRef& p : refs) {
      if (!p.node->requires_grad) continue;
      Mat dp = Mat::Zero(self.grad.rows(),
                         p.per_step ? static_cast<Eigen::Index>(L) * p.width : p.width);
      for (int l = 0; l < L; ++l) {
        auto gl = self.grad.middleCols(static_cast<Eigen::Index>(l) * W + p.offset, p.width);
        if (p.per_step)
          dp.middleCols(static_cast<Eigen::Index>(l) * p.width, p.width) += gl;
        else
          dp += gl;
      }
      accumulate(p.node, dp);
    }
  };
  return Var(n);
}

Var relu(Tape& t, Var x) {
  Mat y = x.value().cwiseMax(0.0);
  Node* n = t.make("relu", std::move(y), {x.node()});
  Node* xn = x.node();
  n->backprop = [xn](Node& self) {
    if (!xn->requires_grad) return;
    accumulate(xn, self.grad.cwiseProduct((xn->value.array() > 0.0).cast<double>().matrix()));
  };
  return Var(n);
}

Var sigmoid(Tape& t, Var x) {
  Mat y = sigmoid_mat(x.value());
  Node* n = t.make("sigmoid", std::move(y), {x.node()});
  Node* xn = x.node();
  n->backprop = [xn](Node& self) {
    if (!xn->requires_grad) return;
    accumulate(xn, self.grad.cwiseProduct(
                       self.value.cwiseProduct((1.0 - self.value.array()).matrix())));
  };
  return Var(n);
}

Var tanh_op(Tape& t, Var x) {
  Mat y = x.value().array().tanh().matrix();
  Node* n = t.make("tanh", std::move(y), {x.node()});
  Node* xn = x.node();
  n->backprop = [xn](Node& self) {
    if (!xn->requires_grad) return;
    accumulate(xn, self.grad.cwiseProduct((1.0 - self.value.array().square()).matrix()));
  };
  return Var(n);
}

Var exp_op(Tape& t, Var x) {
  Mat y = x.value().array().exp().matrix();
  Node* n = t.make("exp", std::move(y), {x.node()});
  Node* xn = x.node();
  n->backprop = [xn](Node& self) {
    if (!xn->requires_grad) return;
    accumulate(xn, self.grad.cwiseProduct(self.value));
  };
  return Var(n);
}

Var scale(Tape& t, Var x, double s) {
  Mat y = s * x.value();
  Node* n = t.make("scale", std::move(y), {x.node()});
  Node* xn = x.node();
  n->backprop = [xn, s](Node& self) {
    if (!xn->requires_grad) return;
    accumulate(xn, (s * self.grad).eval());
  };
  return Var(n);
}

Var add(Tape& t, Var a, Var b) {
  Mat y = a.value() + b.value();
  Node* n = t.make("add", std::move(y), {a.node(), b.node()});
  Node* an = a.node();
  Node* bn = b.node();
  n->backprop = [an, bn](Node& self) {
    accumulate(an, self.grad);
    accumulate(bn, self.grad);
  };
  return Var(n);
}

Var sub(Tape& t, Var a, Var b) {
  Mat y = a.value() - b.value();
  Node* n = t.make("sub", std::move(y), {a.node(), b.node()});
  Node* an = a.node();
  Node* bn = b.node();
  n->backprop = [an, bn](Node& self) {
    accumulate(an, self.grad);
    accumulate(bn, (-self.grad).eval());
  };
  return Var(n);
}

Var hadamard(Tape& t, Var a, Var b) {
  Mat y = a.value().cwiseProduct(b.value());
  Node* n = t.make("hadamard", std::move(y), {a.node(), b.node()});
  Node* an = a.node();
  Node* bn = b.node();
  n->backprop = [an, bn](Node& self) {
    if (an->requires_grad) accumulate(an, self.grad.cwiseProduct(bn->value));
    if (bn->requires_grad) accumulate(bn, self.grad.cwiseProduct(an->value));
  };
  return Var(n);
}

Var dropout(Tape& t, Var x, double drop_prob, std::mt19937_64& rng) {
  check(drop_prob >= 0.0 && drop_prob < 1.0, "dropout: probability");
  if (drop_prob == 0.0) return x;
  const double keep = 1.0 - drop_prob;
  std::bernoulli_distribution dist(keep);
  Mat mask(x.value().rows(), x.value().cols());
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = dist(rng) ? 1.0 / keep : 0.0;
  Mat y = x.value().cwiseProduct(mask);
  Node* n = t.make("dropout", std::move(y), {x.node()});
  Node* xn = x.node();
  n->backprop = [xn, mask = std::move(mask)](Node& self) {
    if (!xn->requires_grad) return;
    accumulate(xn, self.grad.cwiseProduct(mask));
  };
  return Var(n);
}

Var mask_cols(Tape& t, Var x, const Mat& row_mask, std::string label) {
  check(row_mask.rows() == 1 && row_mask.cols() == x.value().cols(), "mask_cols: shape");
  Mat y = (x.value().array().rowwise() * row_mask.row(0).array()).matrix();
  Node* n = t.make(std::move(label), std::move(y), {x.node()});
  Node* xn = x.node();
  Mat mask_copy = row_mask;
  n->backprop = [xn, mask_copy](Node& self) {
    if (!xn->requires_grad) return;
    accumulate(xn, (self.grad.array().rowwise() * mask_copy.row(0).array()).matrix());
  };
  return Var(n);
}

Var softmax_ce_seq(Tape& t, Var logits, const IMat& targets, const Mat& mask, int vocab) {
  const Eigen::Index B = logits.value().rows();
  const Eigen::Index L = targets.cols();
  check(logits.value().cols() == L * vocab, "softmax_ce_seq: logits/targets");
  check(mask.rows() == B && mask.cols() == L, "softmax_ce_seq: mask");
  Mat probs(B, L * vocab);
  Mat loss = Mat::Zero(B, 1);
  for (Eigen::Index l = 0; l < L; ++l) {
    Mat p = softmax_rows(logits.value().middleCols(l * vocab, vocab));
    probs.middleCols(l * vocab, vocab) = p;
    for (Eigen::Index b = 0; b < B; ++b) {
      if (mask(b, l) == 0.0) continue;
      int tgt = targets(b, l);
      check(tgt >= 0 && tgt < vocab, "softmax_ce_seq: target range");
      loss(b, 0) -= std::log(std::max(p(b, tgt), 1e-300));
    }
  }
  Node* n = t.make("softmax_ce_seq", std::move(loss), {logits.node()});
  Node* xn = logits.node();
  IMat targets_copy = targets;
  Mat mask_copy = mask;
  n->backprop = [xn, targets_copy, mask_copy, vocab, probs = std::move(probs)](Node& self) {
    if (!xn->requires_grad) return;
    const Eigen::Index B = probs.rows();
    const Eigen::Index L = targets_copy.cols();
    Mat dl = Mat::Zero(B, L * vocab);
    for (Eigen::Index l = 0; l < L; ++l) {
      auto block = dl.middleCols(l * vocab, vocab);
      block = probs.middleCols(l * vocab, vocab);
      for (Eigen::Index b = 0; b < B; ++b) {
        if (mask_copy(b, l) == 0.0) {
          block.row(b).setZero();
          continue;
        }
        block(b, targets_copy(b, l)) -= 1.0;
        block.row(b) *= self.grad(b, 0);
      }
    }
    accumulate(xn, dl);
  };
  return Var(n);
}

Var softmax_ce(Tape& t, Var logits, const Eigen::VectorXi& targets) {
  const Eigen::Index B = logits.value().rows();
  const int V = static_cast<int>(logits.value().cols());
  check(targets.size() == B, "softmax_ce: targets");
  Mat p = softmax_rows(logits.value());
  Mat loss(B, 1);
  for (Eigen::Index b = 0; b < B; ++b) {
    check(targets(b) >= 0 && targets(b) < V, "softmax_ce: target range");
    loss(b, 0) = -std::log(std::max(p(b, targets(b)), 1e-300));
  }
  Node* n = t.make("softmax_ce", std::move(loss), {logits.node()});
  Node* xn = logits.node();
  Eigen::VectorXi targets_copy = targets;
  n->backprop = [xn, targets_copy, p = std::move(p)](Node& self) {
    if (!xn->requires_grad) return;
    Mat dl = p;
    for (Eigen::Index b = 0; b < dl.rows(); ++b) {
      dl(b, targets_copy(b)) -= 1.0;
      dl.row(b) *= self.grad(b, 0);
    }
    accumulate(xn, dl);
  };
  return Var(n);
}

Var sse_masked_seq(Tape& t, Var pred, const Mat& target, const Mat& mask) {
  check(pred.value().rows() == target.rows() && pred.value().cols() == target.cols(),
        "sse_masked_seq: pred/target");
  check(mask.rows() == target.rows() && mask.cols() == target.cols(), "sse_masked_seq: mask");
  Mat diff = (pred.value() - target).cwiseProduct(mask);
  Mat loss = diff.array().square().matrix().rowwise().sum();
  Node* n = t.make("sse_masked_seq", std::move(loss), {pred.node()});
  Node* xn = pred.node();
  n->backprop = [xn, diff = std::move(diff)](Node& self) {
    if (!xn->requires_grad) return;
    accumulate(xn, row_scale(2.0 * diff, self.grad.col(0)));
  };
  return Var(n);
}

Var sse_cols(Tape& t, Var pred, const Mat& target) {
  check(pred.value().rows() == target.rows() && pred.value().cols() == target.cols(),
        "sse_cols: pred/target");
  Mat diff = pred.value() - target;
  Mat loss = diff.array().square().matrix().rowwise().sum();
  Node* n = t.make("sse_cols", std::move(loss), {pred.node()});
  Node* xn = pred.node();
  n->backprop = [xn, diff = std::move(diff)](Node& self) {
    if (!xn->requires_grad) return;
    accumulate(xn, row_scale(2.0 * diff, self.grad.col(0)));
  };
  return Var(n);
}

Var kl_std_normal(Tape& t, Var mu, Var logvar) {
  check(mu.value().rows() == logvar.value().rows() && mu.value().cols() == logvar.value().cols(),
        "kl: mu/logvar");
  const Mat& m = mu.value();
  const Mat& lv = logvar.value();
  Mat loss = (0.5 * (m.array().square() + lv.array().exp() - lv.array() - 1.0)).matrix().rowwise().sum();
  Node* n = t.make("kl_std_normal", std::move(loss), {mu.node(), logvar.node()});
  Node* mn = mu.node();
  Node* lvn = logvar.node();
  n->backprop = [mn, lvn](Node& self) {
    if (mn->requires_grad) accumulate(mn, row_scale(mn->value, self.grad.col(0)));
    if (lvn->requires_grad)
      accumulate(lvn, row_scale((0.5 * (lvn->value.array().exp() - 1.0)).matrix(), self.grad.col(0)));
  };
  return Var(n);
}

Var mean_rows(Tape& t, Var x) {
  check(x.value().cols() == 1, "mean_rows: expects Bx1");
  Mat y(1, 1);
  y(0, 0) = x.value().col(0).mean();
  Node* n = t.make("mean_rows", std::move(y), {x.node()});
  Node* xn = x.node();
  n->backprop = [xn](Node& self) {
    if (!xn->requires_grad) return;
    const double g = self.grad(0, 0) / static_cast<double>(xn->value.rows());
    accumulate(xn, Mat::Constant(xn->value.rows(), 1, g));
  };
  return Var(n);
}

}  // namespace tracegen::ad
