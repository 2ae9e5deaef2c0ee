#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "aio/autodiff.hpp"
#include "aio/mask.hpp"
#include "aio/params.hpp"
#include "aio/tensor.hpp"

namespace aio {

// One joiner parameter set, five read-outs. All modes funnel through the same
// projections, attention weights, and output heads; they differ only in how
// the context vector is formed and which axes survive:
//   hat:  sigmoid cross-attention per (t, u)   -> [T' x (U+1) x (K+1)]
//   aed:  masked softmax attention per u       -> [(U+1) x K]
//   ctc:  fixed 0.5 value scaling per t        -> [T' x (K+1)]
//   lm:   no acoustics at all, per u           -> [(U+1) x K]
//   twa:  aed context + encoder inside tanh    -> [T' x (U+1) x (K+1)]
// K+1 axes put blank at index 0 and label v at index v+1. Graph builders
// flatten (t, u) into row t*(U+1)+u, which is the layout the transducer loss
// consumes; the Tensor forwards reshape back to rank 3.

// --- training graphs ---------------------------------------------------------

Var hat_lattice_graph(const Var& h_enc, const Var& h_pred, const JoinerP& jp,
                      const ModelDims& d);

// mask rows index predictor positions u, cols index frames t.
Var aed_rows_graph(const Var& h_enc, const Var& h_pred, const JoinerP& jp,
                   const ModelDims& d, const AttentionMask& mask);

Var ctc_rows_graph(const Var& h_enc, const JoinerP& jp, const ModelDims& d);

Var lm_rows_graph(const Var& h_pred, const Var& w_pred, const Var& b_pred,
                  const FeedForwardP& ff, const LayerNormP& ln_ff,
                  const Var& w_label, const Var& b_label, const ModelDims& d);
Var lm_rows_graph(const Var& h_pred, const JoinerP& jp, const ModelDims& d);
Var extlm_rows_graph(const Var& h_pred, const ExtLmParams& lm);

Var twa_lattice_graph(const Var& h_enc, const Var& h_pred, const JoinerP& jp,
                      const ModelDims& d, const AttentionMask& mask);

// --- whole-lattice forwards (inference values of the graphs above) -----------

Tensor hat_forward(const Tensor& h_enc, const Tensor& h_pred, const JoinerP& jp,
                   const ModelDims& d);
Tensor aed_forward(const Tensor& h_enc, const Tensor& h_pred, const JoinerP& jp,
                   const ModelDims& d, const AttentionMask& mask);
Tensor ctc_forward(const Tensor& h_enc, const JoinerP& jp, const ModelDims& d);
Tensor lm_forward(const Tensor& h_pred, const JoinerP& jp, const ModelDims& d);
Tensor twa_forward(const Tensor& h_enc, const Tensor& h_pred, const JoinerP& jp,
                   const ModelDims& d, const AttentionMask& mask);

// --- single-vector primitives -------------------------------------------------
// Decoders evaluate one lattice cell at a time against cached projections.
// These compose the same row kernels in the same order as the graphs, so a
// cell value here is bit-identical to the corresponding lattice entry.

// (h_enc_t [D'], h_pred_u [D'']) -> (h_enc'_t [D], h_pred'_u [D]).
std::pair<Tensor, Tensor> project_features(const Tensor& h_enc_t,
                                           const Tensor& h_pred_u,
                                           const JoinerP& jp,
                                           const ModelDims& d);

struct QkvRows {
  Tensor q, k, v;  // [D] each
};
QkvRows qkv(const Tensor& h_pred_p, const Tensor& h_enc_p, const JoinerP& jp,
            const ModelDims& d);

// Per-utterance acoustic cache: projections plus key/value rows per frame.
struct EncProjection {
  Tensor enc_p;  // [T' x D]
  Tensor k, v;   // [T' x D]
};
EncProjection project_encoder(const Tensor& h_enc, const JoinerP& jp,
                              const ModelDims& d);

// Per-prediction cache: projected predictor output plus its query.
struct PredProjection {
  Tensor pred_p;  // [D]
  Tensor q;       // [D]
};
PredProjection project_predictor(const Tensor& pred_row, const JoinerP& jp,
                                 const ModelDims& d);

// Framewise sigmoid attention: per head, weight = sigmoid(k_t.q_u / sqrt(d)),
// context = weight * v_t, heads concatenated and projected. Frame t only.
Tensor sigmoid_attention_context(const EncProjection& e, int t,
                                 const PredProjection& pu, const JoinerP& jp,
                                 const ModelDims& d);

// The per-head sigmoid weights behind sigmoid_attention_context, for
// diagnostic dumps. Length joiner_heads, each in (0, 1).
std::vector<double> sigmoid_attention_weights(const EncProjection& e, int t,
                                              const PredProjection& pu,
                                              const JoinerP& jp,
                                              const ModelDims& d);

// The per-head softmax weights behind softmax_attention_context, [H x T'];
// masked frames hold exactly 0 and each head row sums to 1.
Tensor softmax_attention_weights(const EncProjection& e,
                                 const std::vector<uint8_t>& frames,
                                 const PredProjection& pu, const JoinerP& jp,
                                 const ModelDims& d);

// Masked softmax attention over the frames marked true in `frames` (size T').
// Throws if no frame is allowed.
Tensor softmax_attention_context(const EncProjection& e,
                                 const std::vector<uint8_t>& frames,
                                 const PredProjection& pu, const JoinerP& jp,
                                 const ModelDims& d);

struct FactoredOut {
  double blank;   // P(blank); computed from the pre-feed-forward state
  Tensor labels;  // [K], sums to 1
};
FactoredOut output_head(const Tensor& h_joiner, const JoinerP& jp,
                        const ModelDims& d);

// Label path only: FeedForward + residual + LayerNorm + linear + softmax.
Tensor label_head(const Tensor& h_joiner, const FeedForwardP& ff,
                  const LayerNormP& ln_ff, const Tensor& w_label,
                  const Tensor& b_label, const ModelDims& d);

// Cell evaluators. K+1 vectors are factored: [blank, (1-blank)*labels].
Tensor hat_cell(const EncProjection& e, int t, const PredProjection& pu,
                const JoinerP& jp, const ModelDims& d);
// Same cell, blank and label softmax kept apart; hat_cell composes this.
FactoredOut hat_out(const EncProjection& e, int t, const PredProjection& pu,
                    const JoinerP& jp, const ModelDims& d);
Tensor ctc_cell(const EncProjection& e, int t, const JoinerP& jp,
                const ModelDims& d);
Tensor aed_label_row(const EncProjection& e, const std::vector<uint8_t>& frames,
                     const PredProjection& pu, const JoinerP& jp,
                     const ModelDims& d);
Tensor lm_label_row(const Tensor& pred_row, const JoinerP& jp,
                    const ModelDims& d);
Tensor extlm_label_row(const Tensor& pred_row, const ExtLmParams& lm);
// aed_ctx is the context for position u (from softmax_attention_context).
Tensor twa_cell(const EncProjection& e, int t, const PredProjection& pu,
                const Tensor& aed_ctx, const JoinerP& jp, const ModelDims& d);

}  // namespace aio
