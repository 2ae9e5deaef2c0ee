#include "aio/joiner.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "aio/ops.hpp"

namespace aio {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

Tensor reshape(const Tensor& x, std::vector<int> dims) {
  Tensor y(std::move(dims),
           std::vector<double>(x.data(), x.data() + x.numel()));
  require(y.numel() == x.numel(), "reshape: element count mismatch");
  return y;
}

// Shared front of every attending mode: joiner-space projections plus the
// query/key/value rows.
struct QkvGraph {
  Var enc_p, pred_p, q, k, v;
};

QkvGraph qkv_graph(const Var& h_enc, const Var& h_pred, const JoinerP& jp,
                   const ModelDims& d) {
  QkvGraph g;
  g.enc_p = linear(h_enc, jp.w_enc, jp.b_enc);
  g.pred_p = linear(h_pred, jp.w_pred, jp.b_pred);
  g.q = linear(row_layer_norm(g.pred_p, jp.ln_q.gain, jp.ln_q.bias, d.ln_eps),
               jp.w_query);
  Var kv_n =
      row_layer_norm(g.enc_p, jp.ln_kv.gain, jp.ln_kv.bias, d.ln_eps);
  g.k = linear(kv_n, jp.w_key);
  g.v = linear(kv_n, jp.w_value);
  return g;
}

Var label_head_graph(const Var& h_joiner, const FeedForwardP& ff,
                     const LayerNormP& ln_ff, const Var& w_label,
                     const Var& b_label, const ModelDims& d) {
  Var f = linear(activation_node(linear(h_joiner, ff.w1, ff.b1), d.act),
                 ff.w2, ff.b2);
  Var n = row_layer_norm(add(h_joiner, f), ln_ff.gain, ln_ff.bias, d.ln_eps);
  return row_softmax(linear(n, w_label, b_label));
}

// Blank reads the pre-feed-forward state so its value never depends on the
// feed-forward or its layer norm.
Var factored_head_graph(const Var& h_joiner, const JoinerP& jp,
                        const ModelDims& d) {
  Var blank = vsigmoid(linear(h_joiner, jp.w_blank, jp.b_blank));
  Var labels =
      label_head_graph(h_joiner, jp.ff, jp.ln_ff, jp.w_label, jp.b_label, d);
  return factored_concat(blank, labels);
}

}  // namespace

// --- training graphs ---------------------------------------------------------

Var hat_lattice_graph(const Var& h_enc, const Var& h_pred, const JoinerP& jp,
                      const ModelDims& d) {
  QkvGraph g = qkv_graph(h_enc, h_pred, jp, d);
  int t_prime = h_enc.value().dim(0);
  Var alpha = vsigmoid(mh_scores(g.k, g.q, d.joiner_heads));
  Var ctx = linear(mh_scale_values(alpha, g.v), jp.w_proj);
  Var hj = vtanh(add(tile_rows(g.pred_p, t_prime), ctx));
  return factored_head_graph(hj, jp, d);
}

Var aed_rows_graph(const Var& h_enc, const Var& h_pred, const JoinerP& jp,
                   const ModelDims& d, const AttentionMask& mask) {
  QkvGraph g = qkv_graph(h_enc, h_pred, jp, d);
  Var alpha = mh_masked_softmax(mh_scores(g.k, g.q, d.joiner_heads), mask);
  Var ctx = linear(mh_attend(alpha, g.v), jp.w_proj);
  Var hj = vtanh(add(g.pred_p, ctx));
  return label_head_graph(hj, jp.ff, jp.ln_ff, jp.w_label, jp.b_label, d);
}

Var ctc_rows_graph(const Var& h_enc, const JoinerP& jp, const ModelDims& d) {
  Var enc_p = linear(h_enc, jp.w_enc, jp.b_enc);
  Var v = linear(
      row_layer_norm(enc_p, jp.ln_kv.gain, jp.ln_kv.bias, d.ln_eps),
      jp.w_value);
  // Every head weight is the constant 0.5, so scaling the concatenation is
  // the same as scaling each head.
  Var ctx = linear(affine_map(v, 0.5, 0.0), jp.w_proj);
  Var hj = vtanh(ctx);
  return factored_head_graph(hj, jp, d);
}

Var lm_rows_graph(const Var& h_pred, const Var& w_pred, const Var& b_pred,
                  const FeedForwardP& ff, const LayerNormP& ln_ff,
                  const Var& w_label, const Var& b_label, const ModelDims& d) {
  Var hj = vtanh(linear(h_pred, w_pred, b_pred));
  return label_head_graph(hj, ff, ln_ff, w_label, b_label, d);
}

Var lm_rows_graph(const Var& h_pred, const JoinerP& jp, const ModelDims& d) {
  return lm_rows_graph(h_pred, jp.w_pred, jp.b_pred, jp.ff, jp.ln_ff,
                       jp.w_label, jp.b_label, d);
}

Var extlm_rows_graph(const Var& h_pred, const ExtLmParams& lm) {
  return lm_rows_graph(h_pred, lm.w_pred, lm.b_pred, lm.ff, lm.ln_ff,
                       lm.w_label, lm.b_label, lm.dims);
}

Var twa_lattice_graph(const Var& h_enc, const Var& h_pred, const JoinerP& jp,
                      const ModelDims& d, const AttentionMask& mask) {
  QkvGraph g = qkv_graph(h_enc, h_pred, jp, d);
  Var alpha = mh_masked_softmax(mh_scores(g.k, g.q, d.joiner_heads), mask);
  Var ctx = linear(mh_attend(alpha, g.v), jp.w_proj);
  Var hj = vtanh(outer_row_add(g.enc_p, add(g.pred_p, ctx)));
  return factored_head_graph(hj, jp, d);
}

// --- whole-lattice forwards ----------------------------------------------------

Tensor hat_forward(const Tensor& h_enc, const Tensor& h_pred, const JoinerP& jp,
                   const ModelDims& d) {
  Tensor flat =
      hat_lattice_graph(Var::leaf(h_enc), Var::leaf(h_pred), jp, d).value();
  return reshape(flat, {h_enc.dim(0), h_pred.dim(0), d.vocab + 1});
}

Tensor aed_forward(const Tensor& h_enc, const Tensor& h_pred, const JoinerP& jp,
                   const ModelDims& d, const AttentionMask& mask) {
  return aed_rows_graph(Var::leaf(h_enc), Var::leaf(h_pred), jp, d, mask)
      .value();
}

Tensor ctc_forward(const Tensor& h_enc, const JoinerP& jp, const ModelDims& d) {
  return ctc_rows_graph(Var::leaf(h_enc), jp, d).value();
}

Tensor lm_forward(const Tensor& h_pred, const JoinerP& jp, const ModelDims& d) {
  return lm_rows_graph(Var::leaf(h_pred), jp, d).value();
}

Tensor twa_forward(const Tensor& h_enc, const Tensor& h_pred, const JoinerP& jp,
                   const ModelDims& d, const AttentionMask& mask) {
  Tensor flat =
      twa_lattice_graph(Var::leaf(h_enc), Var::leaf(h_pred), jp, d, mask)
          .value();
  return reshape(flat, {h_enc.dim(0), h_pred.dim(0), d.vocab + 1});
}

// --- single-vector primitives ---------------------------------------------------

std::pair<Tensor, Tensor> project_features(const Tensor& h_enc_t,
                                           const Tensor& h_pred_u,
                                           const JoinerP& jp,
                                           const ModelDims& d) {
  require(h_enc_t.numel() == d.enc_dim, "project_features: bad encoder width");
  require(h_pred_u.numel() == d.pred_dim,
          "project_features: bad predictor width");
  Tensor e({d.joiner_dim});
  Tensor p({d.joiner_dim});
  kernel::affine(jp.w_enc.value().data(), jp.b_enc.value().data(),
                 h_enc_t.data(), d.joiner_dim, d.enc_dim, e.data());
  kernel::affine(jp.w_pred.value().data(), jp.b_pred.value().data(),
                 h_pred_u.data(), d.joiner_dim, d.pred_dim, p.data());
  return {std::move(e), std::move(p)};
}

QkvRows qkv(const Tensor& h_pred_p, const Tensor& h_enc_p, const JoinerP& jp,
            const ModelDims& d) {
  int D = d.joiner_dim;
  require(h_pred_p.numel() == D && h_enc_p.numel() == D, "qkv: bad width");
  QkvRows r{Tensor({D}), Tensor({D}), Tensor({D})};
  Tensor nq =
      layer_norm(h_pred_p, jp.ln_q.gain.value(), jp.ln_q.bias.value(), d.ln_eps);
  kernel::affine(jp.w_query.value().data(), nullptr, nq.data(), D, D,
                 r.q.data());
  Tensor nkv = layer_norm(h_enc_p, jp.ln_kv.gain.value(), jp.ln_kv.bias.value(),
                          d.ln_eps);
  kernel::affine(jp.w_key.value().data(), nullptr, nkv.data(), D, D,
                 r.k.data());
  kernel::affine(jp.w_value.value().data(), nullptr, nkv.data(), D, D,
                 r.v.data());
  return r;
}

EncProjection project_encoder(const Tensor& h_enc, const JoinerP& jp,
                              const ModelDims& d) {
  require(h_enc.rank() == 2 && h_enc.dim(1) == d.enc_dim,
          "project_encoder: expected [T' x D'] frames");
  int t_prime = h_enc.dim(0), D = d.joiner_dim;
  EncProjection e{Tensor({t_prime, D}), Tensor({t_prime, D}),
                  Tensor({t_prime, D})};
  std::vector<double> normed(static_cast<size_t>(D));
  for (int t = 0; t < t_prime; ++t) {
    double* erow = e.enc_p.data() + static_cast<size_t>(t) * D;
    kernel::affine(jp.w_enc.value().data(), jp.b_enc.value().data(),
                   h_enc.data() + static_cast<size_t>(t) * d.enc_dim, D,
                   d.enc_dim, erow);
    kernel::layer_norm(erow, jp.ln_kv.gain.value().data(),
                       jp.ln_kv.bias.value().data(), d.ln_eps, D,
                       normed.data());
    kernel::affine(jp.w_key.value().data(), nullptr, normed.data(), D, D,
                   e.k.data() + static_cast<size_t>(t) * D);
    kernel::affine(jp.w_value.value().data(), nullptr, normed.data(), D, D,
                   e.v.data() + static_cast<size_t>(t) * D);
  }
  return e;
}

PredProjection project_predictor(const Tensor& pred_row, const JoinerP& jp,
                                 const ModelDims& d) {
  require(pred_row.numel() == d.pred_dim,
          "project_predictor: expected a [D''] prediction");
  int D = d.joiner_dim;
  PredProjection p{Tensor({D}), Tensor({D})};
  kernel::affine(jp.w_pred.value().data(), jp.b_pred.value().data(),
                 pred_row.data(), D, d.pred_dim, p.pred_p.data());
  std::vector<double> normed(static_cast<size_t>(D));
  kernel::layer_norm(p.pred_p.data(), jp.ln_q.gain.value().data(),
                     jp.ln_q.bias.value().data(), d.ln_eps, D, normed.data());
  kernel::affine(jp.w_query.value().data(), nullptr, normed.data(), D, D,
                 p.q.data());
  return p;
}

Tensor sigmoid_attention_context(const EncProjection& e, int t,
                                 const PredProjection& pu, const JoinerP& jp,
                                 const ModelDims& d) {
  int D = d.joiner_dim, heads = d.joiner_heads, hw = D / heads;
  require(t >= 0 && t < e.k.dim(0), "sigmoid_attention_context: frame range");
  double scale = 1.0 / std::sqrt(static_cast<double>(hw));
  const double* krow = e.k.data() + static_cast<size_t>(t) * D;
  const double* vrow = e.v.data() + static_cast<size_t>(t) * D;
  std::vector<double> heads_cat(static_cast<size_t>(D));
  for (int h = 0; h < heads; ++h) {
    double s = scale * kernel::dot(krow + h * hw, pu.q.data() + h * hw, hw);
    double w = kernel::sigmoid(s);
    for (int j = 0; j < hw; ++j) heads_cat[h * hw + j] = w * vrow[h * hw + j];
  }
  Tensor ctx({D});
  kernel::affine(jp.w_proj.value().data(), nullptr, heads_cat.data(), D, D,
                 ctx.data());
  return ctx;
}

std::vector<double> sigmoid_attention_weights(const EncProjection& e, int t,
                                              const PredProjection& pu,
                                              const JoinerP& jp,
                                              const ModelDims& d) {
  (void)jp;
  int D = d.joiner_dim, heads = d.joiner_heads, hw = D / heads;
  require(t >= 0 && t < e.k.dim(0), "sigmoid_attention_weights: frame range");
  double scale = 1.0 / std::sqrt(static_cast<double>(hw));
  const double* krow = e.k.data() + static_cast<size_t>(t) * D;
  std::vector<double> w(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h)
    w[static_cast<size_t>(h)] = kernel::sigmoid(
        scale * kernel::dot(krow + h * hw, pu.q.data() + h * hw, hw));
  return w;
}

Tensor softmax_attention_context(const EncProjection& e,
                                 const std::vector<uint8_t>& frames,
                                 const PredProjection& pu, const JoinerP& jp,
                                 const ModelDims& d) {
  int t_prime = e.k.dim(0);
  require(static_cast<int>(frames.size()) == t_prime,
          "softmax_attention_context: frame flags must cover T'");
  bool any = false;
  for (uint8_t f : frames) any = any || (f != 0);
  require(any, "softmax_attention_context: no frame allowed");

  int D = d.joiner_dim, heads = d.joiner_heads, hw = D / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(hw));
  std::vector<double> logits(static_cast<size_t>(t_prime));
  std::vector<double> probs(static_cast<size_t>(t_prime));
  std::vector<double> heads_cat(static_cast<size_t>(D), 0.0);
  for (int h = 0; h < heads; ++h) {
    int m = 0;
    for (int t = 0; t < t_prime; ++t) {
      if (!frames[static_cast<size_t>(t)]) continue;
      logits[m++] =
          scale * kernel::dot(e.k.data() + static_cast<size_t>(t) * D + h * hw,
                              pu.q.data() + h * hw, hw);
    }
    kernel::softmax(logits.data(), m, probs.data());
    int j = 0;
    for (int t = 0; t < t_prime; ++t) {
      if (!frames[static_cast<size_t>(t)]) continue;
      double w = probs[j++];
      const double* vrow = e.v.data() + static_cast<size_t>(t) * D;
      for (int c = 0; c < hw; ++c) heads_cat[h * hw + c] += w * vrow[h * hw + c];
    }
  }
  Tensor ctx({D});
  kernel::affine(jp.w_proj.value().data(), nullptr, heads_cat.data(), D, D,
                 ctx.data());
  return ctx;
}

Tensor softmax_attention_weights(const EncProjection& e,
                                 const std::vector<uint8_t>& frames,
                                 const PredProjection& pu, const JoinerP& jp,
                                 const ModelDims& d) {
  (void)jp;
  int t_prime = e.k.dim(0);
  require(static_cast<int>(frames.size()) == t_prime,
          "softmax_attention_weights: frame flags must cover T'");
  bool any = false;
  for (uint8_t f : frames) any = any || (f != 0);
  require(any, "softmax_attention_weights: no frame allowed");

  int D = d.joiner_dim, heads = d.joiner_heads, hw = D / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(hw));
  Tensor out = Tensor::zeros({heads, t_prime});
  std::vector<double> logits(static_cast<size_t>(t_prime));
  std::vector<double> probs(static_cast<size_t>(t_prime));
  for (int h = 0; h < heads; ++h) {
    int m = 0;
    for (int t = 0; t < t_prime; ++t) {
      if (!frames[static_cast<size_t>(t)]) continue;
      logits[m++] =
          scale * kernel::dot(e.k.data() + static_cast<size_t>(t) * D + h * hw,
                              pu.q.data() + h * hw, hw);
    }
    kernel::softmax(logits.data(), m, probs.data());
    int j = 0;
    for (int t = 0; t < t_prime; ++t) {
      if (!frames[static_cast<size_t>(t)]) continue;
      out(h, t) = probs[j++];
    }
  }
  return out;
}

FactoredOut output_head(const Tensor& h_joiner, const JoinerP& jp,
                        const ModelDims& d) {
  int D = d.joiner_dim;
  require(h_joiner.numel() == D, "output_head: bad width");
  double s;
  kernel::affine(jp.w_blank.value().data(), jp.b_blank.value().data(),
                 h_joiner.data(), 1, D, &s);
  FactoredOut out;
  out.blank = kernel::sigmoid(s);
  out.labels =
      label_head(h_joiner, jp.ff, jp.ln_ff, jp.w_label.value(),
                 jp.b_label.value(), d);
  return out;
}

Tensor label_head(const Tensor& h_joiner, const FeedForwardP& ff,
                  const LayerNormP& ln_ff, const Tensor& w_label,
                  const Tensor& b_label, const ModelDims& d) {
  require(h_joiner.numel() == d.joiner_dim, "label_head: bad width");
  Tensor h = reshape(h_joiner, {d.joiner_dim});
  Tensor f = feed_forward(h, ff.w1.value(), ff.b1.value(), ff.w2.value(),
                          ff.b2.value(), d.act);
  Tensor r({static_cast<int>(h.numel())});
  for (int64_t i = 0; i < r.numel(); ++i) r[i] = h[i] + f[i];
  Tensor n = layer_norm(r, ln_ff.gain.value(), ln_ff.bias.value(), d.ln_eps);
  return softmax(affine(w_label, n, b_label));
}

namespace {

Tensor factored_cell(const Tensor& h_joiner, const JoinerP& jp,
                     const ModelDims& d) {
  FactoredOut o = output_head(h_joiner, jp, d);
  Tensor cell({d.vocab + 1});
  cell[0] = o.blank;
  for (int v = 0; v < d.vocab; ++v) cell[v + 1] = (1.0 - o.blank) * o.labels[v];
  return cell;
}

}  // namespace

Tensor hat_cell(const EncProjection& e, int t, const PredProjection& pu,
                const JoinerP& jp, const ModelDims& d) {
  Tensor ctx = sigmoid_attention_context(e, t, pu, jp, d);
  Tensor hj({d.joiner_dim});
  for (int64_t i = 0; i < hj.numel(); ++i)
    hj[i] = std::tanh(pu.pred_p[i] + ctx[i]);
  return factored_cell(hj, jp, d);
}

FactoredOut hat_out(const EncProjection& e, int t, const PredProjection& pu,
                    const JoinerP& jp, const ModelDims& d) {
  Tensor ctx = sigmoid_attention_context(e, t, pu, jp, d);
  Tensor hj({d.joiner_dim});
  for (int64_t i = 0; i < hj.numel(); ++i)
    hj[i] = std::tanh(pu.pred_p[i] + ctx[i]);
  return output_head(hj, jp, d);
}

Tensor ctc_cell(const EncProjection& e, int t, const JoinerP& jp,
                const ModelDims& d) {
  require(t >= 0 && t < e.v.dim(0), "ctc_cell: frame range");
  int D = d.joiner_dim;
  std::vector<double> half(static_cast<size_t>(D));
  const double* vrow = e.v.data() + static_cast<size_t>(t) * D;
  for (int j = 0; j < D; ++j) half[static_cast<size_t>(j)] = 0.5 * vrow[j];
  Tensor hj({D});
  kernel::affine(jp.w_proj.value().data(), nullptr, half.data(), D, D,
                 hj.data());
  for (int64_t i = 0; i < hj.numel(); ++i) hj[i] = std::tanh(hj[i]);
  return factored_cell(hj, jp, d);
}

Tensor aed_label_row(const EncProjection& e, const std::vector<uint8_t>& frames,
                     const PredProjection& pu, const JoinerP& jp,
                     const ModelDims& d) {
  Tensor ctx = softmax_attention_context(e, frames, pu, jp, d);
  Tensor hj({d.joiner_dim});
  for (int64_t i = 0; i < hj.numel(); ++i)
    hj[i] = std::tanh(pu.pred_p[i] + ctx[i]);
  return label_head(hj, jp.ff, jp.ln_ff, jp.w_label.value(),
                    jp.b_label.value(), d);
}

Tensor lm_label_row(const Tensor& pred_row, const JoinerP& jp,
                    const ModelDims& d) {
  Tensor pred_p({d.joiner_dim});
  kernel::affine(jp.w_pred.value().data(), jp.b_pred.value().data(),
                 pred_row.data(), d.joiner_dim, d.pred_dim, pred_p.data());
  for (int64_t i = 0; i < pred_p.numel(); ++i) pred_p[i] = std::tanh(pred_p[i]);
  return label_head(pred_p, jp.ff, jp.ln_ff, jp.w_label.value(),
                    jp.b_label.value(), d);
}

Tensor extlm_label_row(const Tensor& pred_row, const ExtLmParams& lm) {
  const ModelDims& d = lm.dims;
  Tensor pred_p({d.joiner_dim});
  kernel::affine(lm.w_pred.value().data(), lm.b_pred.value().data(),
                 pred_row.data(), d.joiner_dim, d.pred_dim, pred_p.data());
  for (int64_t i = 0; i < pred_p.numel(); ++i) pred_p[i] = std::tanh(pred_p[i]);
  return label_head(pred_p, lm.ff, lm.ln_ff, lm.w_label.value(),
                    lm.b_label.value(), d);
}

Tensor twa_cell(const EncProjection& e, int t, const PredProjection& pu,
                const Tensor& aed_ctx, const JoinerP& jp, const ModelDims& d) {
  require(t >= 0 && t < e.enc_p.dim(0), "twa_cell: frame range");
  int D = d.joiner_dim;
  require(aed_ctx.numel() == D, "twa_cell: bad context width");
  const double* erow = e.enc_p.data() + static_cast<size_t>(t) * D;
  Tensor hj({D});
  for (int j = 0; j < D; ++j)
    hj[j] = std::tanh(erow[j] + (pu.pred_p[j] + aed_ctx[j]));
  return factored_cell(hj, jp, d);
}

}  // namespace aio
