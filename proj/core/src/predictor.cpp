#include "aio/predictor.hpp"

#include <cmath>
#include <stdexcept>

namespace aio {

namespace {

void check_label(int label, int vocab) {
  if (label != kStartSymbol && (label < 0 || label >= vocab)) {
    throw std::invalid_argument("predict: label id out of range");
  }
}

}  // namespace

PredictorState predictor_start(const PredictorP& pred, const ModelDims& dims) {
  PredictorState s;
  s.h.assign(pred.layers.size(), Tensor({dims.pred_dim}));
  s.u = 0;
  return s;
}

std::pair<Tensor, PredictorState> predict(int prev_label,
                                          const PredictorState& state,
                                          const PredictorP& pred,
                                          const ModelDims& dims) {
  check_label(prev_label, dims.vocab);
  if (state.h.size() != pred.layers.size()) {
    throw std::invalid_argument("predict: state does not match layer count");
  }

  // Start symbol embeds as the zero vector; labels read the embedding table.
  Tensor x({dims.embed_dim});
  if (prev_label != kStartSymbol) {
    const Tensor& emb = pred.embedding.value();
    for (int k = 0; k < dims.embed_dim; ++k) x(k) = emb(prev_label, k);
  }

  PredictorState next = state;
  next.u = state.u + 1;
  Tensor input = std::move(x);
  for (size_t li = 0; li < pred.layers.size(); ++li) {
    const auto& l = pred.layers[li];
    const Tensor& h = state.h[li];
    int H = dims.pred_dim;
    int in = input.dim(0);

    Tensor z({H}), r({H}), n({H}), hn({H});
    Tensor a1({H}), a2({H});
    kernel::affine(l.wz.value().data(), l.bz.value().data(), input.data(), H,
                   in, a1.data());
    kernel::affine(l.uz.value().data(), nullptr, h.data(), H, H, a2.data());
    for (int i = 0; i < H; ++i) z(i) = kernel::sigmoid(a1(i) + a2(i));

    kernel::affine(l.wr.value().data(), l.br.value().data(), input.data(), H,
                   in, a1.data());
    kernel::affine(l.ur.value().data(), nullptr, h.data(), H, H, a2.data());
    for (int i = 0; i < H; ++i) r(i) = kernel::sigmoid(a1(i) + a2(i));

    kernel::affine(l.wn.value().data(), l.bn.value().data(), input.data(), H,
                   in, a1.data());
    kernel::affine(l.un.value().data(), l.cn.value().data(), h.data(), H, H,
                   a2.data());
    for (int i = 0; i < H; ++i) n(i) = std::tanh(a1(i) + r(i) * a2(i));

    for (int i = 0; i < H; ++i) hn(i) = (1.0 - z(i)) * n(i) + z(i) * h(i);
    next.h[li] = hn;
    input = std::move(hn);
  }
  return {next.h.back(), next};
}

Var predictor_rows_graph(const std::vector<int>& y, const PredictorP& pred,
                         const ModelDims& dims) {
  for (int v : y) check_label(v, dims.vocab);
  size_t layers = pred.layers.size();

  std::vector<Var> h(layers);
  for (size_t li = 0; li < layers; ++li) {
    h[li] = Var::leaf(Tensor({1, dims.pred_dim}));
  }

  std::vector<Var> rows;
  rows.reserve(y.size() + 1);
  for (size_t u = 0; u <= y.size(); ++u) {
    Var x;
    if (u == 0) {
      x = Var::leaf(Tensor({1, dims.embed_dim}));
    } else {
      x = embed_row(pred.embedding, y[u - 1]);
    }
    for (size_t li = 0; li < layers; ++li) {
      const auto& l = pred.layers[li];
      Var z = vsigmoid(add(linear(x, l.wz, l.bz), linear(h[li], l.uz)));
      Var r = vsigmoid(add(linear(x, l.wr, l.br), linear(h[li], l.ur)));
      Var n = vtanh(add(linear(x, l.wn, l.bn), mul(r, linear(h[li], l.un, l.cn))));
      h[li] = add(mul(affine_map(z, -1.0, 1.0), n), mul(z, h[li]));
      x = h[li];
    }
    rows.push_back(h.back());
  }
  return stack_rows(rows);
}

}  // namespace aio
