#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <random>
#include <string>
#include <vector>

// Reverse-mode automatic differentiation over Eigen matrices, specialized for
// batched sequence models. A batch of sequences with per-step width F and L
// steps is packed as a B x (L*F) matrix; step l occupies the column block
// [l*F, (l+1)*F). Recurrent ops carry per-trace validity masks so padded steps
// contribute nothing to values or gradients.

namespace tracegen::ad {

using Mat = Eigen::MatrixXd;
using IMat = Eigen::MatrixXi;

/// Trainable tensor plus its accumulated gradient.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
    grad = Mat::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

struct Node {
  Mat value;
  Mat grad;  // allocated on demand during backward
  bool requires_grad = false;
  std::string op;
  std::vector<Node*> parents;
  std::function<void(Node&)> backprop;  // pulls grad from this node into parents/parameters
};

class Var {
 public:
  Var() = default;
  explicit Var(Node* n) : node_(n) {}
  const Mat& value() const { return node_->value; }
  Node* node() const { return node_; }
  bool valid() const { return node_ != nullptr; }

 private:
  Node* node_ = nullptr;
};

/// Append-only record of the forward computation. Parameters are referenced
/// directly by ops (their gradients are written during backward); only tensor
/// intermediates live on the tape.
class Tape {
 public:
  Var leaf(Mat value, std::string op = "leaf");
  Node* make(std::string op, Mat value, std::vector<Node*> parents);

  /// Backpropagate from a 1x1 scalar node through the whole tape.
  void backward(const Var& scalar_out);

  size_t size() const { return nodes_.size(); }
  const std::deque<Node>& nodes() const { return nodes_; }
  /// Nodes that take `v` as a direct input (structural introspection).
  std::vector<const Node*> consumers(const Var& v) const;

 private:
  std::deque<Node> nodes_;
};

/// Add `g` into a node's pending gradient (no-op for non-differentiable nodes).
void accumulate(Node* n, const Mat& g);

bool all_finite(const Mat& m);
Mat softmax_rows(const Mat& logits);

// ---- op builders ----------------------------------------------------------

/// y = x W + b with x: BxIn, W: InxOut, b: 1xOut.
Var linear(Tape& t, Var x, Parameter& W, Parameter& b, std::string label = "linear");

/// Per-step shared linear map over a packed sequence; x: B x L*In -> B x L*Out.
Var seq_linear(Tape& t, Var x, Parameter& W, Parameter& b, int L, std::string label = "seq_linear");

/// Row lookup: table: RxE, ids: B -> BxE.
Var embed_rows(Tape& t, Parameter& table, const Eigen::VectorXi& ids, std::string label = "embed");

/// Per-step row lookup: ids: BxL -> B x L*E.
Var embed_seq(Tape& t, Parameter& table, const IMat& ids, std::string label = "embed_seq");

/// Single-layer LSTM over a packed sequence with carry-forward masking: at
/// masked steps the state is held, so the last block equals each trace's final
/// state. Gate layout in the 4H axis is [input, forget, cell, output].
/// x: B x L*In, mask: BxL in {0,1}, Wih: In x 4H, Whh: H x 4H, b: 1 x 4H.
Var lstm_seq(Tape& t, Var x, const Mat& mask, Parameter& Wih, Parameter& Whh, Parameter& b, int L,
             std::string label = "lstm_seq");

Var slice_cols(Tape& t, Var x, int start, int n, std::string label = "slice_cols");
Var concat_cols(Tape& t, std::vector<Var> parts, std::string label = "concat");

/// One input stream of a per-step concatenation. Broadcast pieces (BxF) are
/// repeated at every step; per-step pieces are already packed (B x L*F).
struct SeqPiece {
  Var v;
  int width = 0;
  bool per_step = true;
};
Var seq_concat(Tape& t, std::vector<SeqPiece> pieces, int L, std::string label = "seq_concat");

Var relu(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
Var tanh_op(Tape& t, Var x);
Var exp_op(Tape& t, Var x);
Var scale(Tape& t, Var x, double s);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var hadamard(Tape& t, Var a, Var b);

/// Inverted dropout; a no-op when keep_prob == 1. The mask is sampled from
/// `rng` at build time, so a fixed seed makes the forward pass reproducible.
Var dropout(Tape& t, Var x, double drop_prob, std::mt19937_64& rng);

/// Multiply every row elementwise by a fixed 1xC mask (e.g. pinning a column to 0).
Var mask_cols(Tape& t, Var x, const Mat& row_mask, std::string label = "mask_cols");

/// Per-trace sum of softmax cross-entropy over sequence steps. logits:
/// B x L*V, targets: BxL, mask: BxL; masked steps are ignored. Returns Bx1.
Var softmax_ce_seq(Tape& t, Var logits, const IMat& targets, const Mat& mask, int vocab);

/// Softmax cross-entropy for one step: logits BxV, targets B. Returns Bx1.
Var softmax_ce(Tape& t, Var logits, const Eigen::VectorXi& targets);

/// Per-trace sum of masked squared errors over a BxL prediction. Returns Bx1.
Var sse_masked_seq(Tape& t, Var pred, const Mat& target, const Mat& mask);

/// Per-trace sum of squared errors across columns. pred, target: BxN. Returns Bx1.
Var sse_cols(Tape& t, Var pred, const Mat& target);

/// KL(N(mu, diag(exp(logvar))) || N(0, I)) per trace. mu, logvar: BxD. Returns Bx1.
Var kl_std_normal(Tape& t, Var mu, Var logvar);

/// Mean over the batch axis of a Bx1 column. Returns 1x1.
Var mean_rows(Tape& t, Var x);

}  // namespace tracegen::ad
