#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "aio/mask.hpp"
#include "aio/ops.hpp"
#include "aio/tensor.hpp"

namespace aio {

// Reverse-mode tape over whole tensors. Every op carries its own analytic
// backward; the tape only composes them by the chain rule. Nodes are coarse
// (whole matrices, whole lattices) so graphs stay at a few hundred nodes per
// utterance and the flops live inside tight kernels.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first touch, same shape as value
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // reads grad, accumulates into parents

  Tensor& ensure_grad() {
    if (!grad.defined()) grad = Tensor::zeros(value.dims());
    return grad;
  }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  static Var leaf(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  bool defined() const { return n_ != nullptr; }
  const Tensor& value() const { return n_->value; }
  Tensor& value() { return n_->value; }
  Tensor& grad() { return n_->ensure_grad(); }
  const NodePtr& node() const { return n_; }

  double scalar() const { return n_->value[0]; }

 private:
  NodePtr n_;
};

// Seeds root (a scalar) with gradient 1 and runs every reachable backward in
// reverse topological order. Interior gradients are reset first; leaf
// gradients are left alone so they accumulate across calls (one batch = many
// per-utterance graphs into the same parameter leaves).
void backward(const Var& root);

void zero_grad(const std::vector<Var>& params);

// --- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b);           // same shape
Var mul(const Var& a, const Var& b);           // same shape, elementwise
Var affine_map(const Var& x, double k, double c);  // k*x + c
Var vtanh(const Var& x);
Var vsigmoid(const Var& x);
Var activation_node(const Var& x, Activation act);

// --- linear algebra ---------------------------------------------------------

// X [r x n], W [m x n], optional b [m] -> [r x m]; rows are samples.
Var linear(const Var& X, const Var& W, const Var& b = Var());

// Per-row layer norm over X [r x n] with gain/bias [n].
Var row_layer_norm(const Var& X, const Var& gain, const Var& bias, double eps);

// Per-row softmax over X [r x k].
Var row_softmax(const Var& X);

// table [K x E], id in [0, K) -> [1 x E].
Var embed_row(const Var& table, int id);

// n rows of [1 x d] -> [n x d].
Var stack_rows(const std::vector<Var>& rows);

// --- multi-head attention pieces --------------------------------------------

// K [nk x D], Q [nq x D] -> scores [nk x nq x H], scaled by 1/sqrt(D/H).
Var mh_scores(const Var& K, const Var& Q, int heads);

// Softmax over the key axis for each (query, head); masked-out keys get
// weight 0. mask rows = queries, cols = keys. Rejects an all-false mask row.
Var mh_masked_softmax(const Var& S, const AttentionMask& mask);

// A [nk x nq x H], V [nk x D] -> weighted sums per query [nq x D].
Var mh_attend(const Var& A, const Var& V);

// Framewise variant: no sum over keys. Row (t, u) of the result is V[t]
// scaled headwise by A(t, u, h) -> [(nk*nq) x D], row index t*nq + u.
Var mh_scale_values(const Var& A, const Var& V);

// --- lattice assembly --------------------------------------------------------

// X [n x D] -> [reps*n x D], row (r, i) = X[i]; row index r*n + i.
Var tile_rows(const Var& X, int reps);

// A [na x D], B [nb x D] -> [(na*nb) x D], row (a, b) = A[a] + B[b].
Var outer_row_add(const Var& A, const Var& B);

// blank [n x 1], labels [n x K] -> [n x (K+1)]: column 0 is the blank
// probability, column v+1 is (1 - blank) * labels[v].
Var factored_concat(const Var& blank, const Var& labels);

// --- losses ------------------------------------------------------------------

// lattice [(T*(U+1)) x (K+1)] with row index t*(U+1)+u; y holds U label ids
// (0-based, blank excluded). Returns -log P(y | lattice) summed over all
// monotonic alignments. Infinite when some required probability is exactly 0;
// the gradient is zero in that case.
Var transducer_loss(const Var& lattice, int T, const std::vector<int>& y);

// post [T x (K+1)], blank at column 0, label v at column v+1. Standard CTC
// with blank-insertable targets and mandatory blanks between repeats.
// Infeasible targets yield +inf with zero gradient.
Var ctc_loss(const Var& post, const std::vector<int>& y);

// P [n x K] rows of probabilities; loss = -sum_i log P(i, target[i]).
Var ce_loss(const Var& P, const std::vector<int>& targets);

// y = sum_i w[i] * x[i] over scalar nodes.
Var scalar_weighted_sum(const std::vector<Var>& xs,
                        const std::vector<double>& ws);

// Sum of every element, as a scalar node.
Var sum_all(const Var& x);

}  // namespace aio
