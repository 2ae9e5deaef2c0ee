#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aio/autodiff.hpp"
#include "aio/ops.hpp"
#include "aio/rng.hpp"

namespace aio {

// Label id conventions. The vocabulary has K labels including an explicit
// end-of-sentence token; blank is not a label (it lives at slice 0 of K+1
// posterior axes). The predictor consumes a start pseudo-symbol for row 0.
constexpr int kEosId = 0;
constexpr int kStartSymbol = -1;

struct ModelDims {
  int feat_dim = 8;      // acoustic feature width F
  int stack = 2;         // subsampling stack factor s
  int enc_dim = 64;      // encoder width D'
  int enc_blocks = 2;    // self-attention blocks
  int enc_heads = 4;
  int ff_expansion = 2;  // hidden width multiplier in feed-forward modules
  int embed_dim = 32;    // label embedding width E
  int pred_layers = 1;   // recurrent layers (1 or 2)
  int pred_dim = 64;     // predictor output width D''
  int joiner_dim = 64;   // joiner width D
  int joiner_heads = 4;
  int vocab = 6;         // labels incl. EOS (K); blank excluded
  double ln_eps = 1e-5;
  Activation act = Activation::kGelu;

  void validate() const;  // throws std::invalid_argument naming the field
};

struct LayerNormP {
  Var gain, bias;
};

struct FeedForwardP {
  Var w1, b1, w2, b2;
};

struct AttentionP {
  Var wq, bq, wk, bk, wv, bv, wo, bo;
};

struct EncoderBlockP {
  LayerNormP ln1;
  AttentionP attn;
  LayerNormP ln2;
  FeedForwardP ff;
};

struct EncoderP {
  Var in_w, in_b;  // maps stacked frames [s*F] to D'
  std::vector<EncoderBlockP> blocks;
};

// Gated recurrent layer: z/r gates plus candidate, with the reset gate
// applied to the recurrent candidate contribution.
struct PredictorLayerP {
  Var wz, uz, bz;
  Var wr, ur, br;
  Var wn, un, bn, cn;
};

struct PredictorP {
  Var embedding;  // [K x E]; start symbol is realized as a zero embedding
  std::vector<PredictorLayerP> layers;
};

struct JoinerP {
  Var w_enc, b_enc;    // D x D' and D: projects H^enc rows
  Var w_pred, b_pred;  // D x D'' and D: projects H^pred rows
  LayerNormP ln_q;     // over projected predictor rows, before the query map
  LayerNormP ln_kv;    // over projected encoder rows, shared by key and value
  Var w_query, w_key, w_value, w_proj;  // all D x D, no biases
  Var w_blank, b_blank;                 // 1 x D and 1
  FeedForwardP ff;
  LayerNormP ln_ff;
  Var w_label, b_label;  // K x D and K
};

struct AioParams {
  ModelDims dims;
  EncoderP enc;
  PredictorP pred;
  JoinerP joiner;

  static AioParams init(const ModelDims& dims, uint64_t seed);

  // Stable enumeration used by the optimizer, checkpoints, and grad checks.
  void visit(
      const std::function<void(const std::string&, const Var&)>& fn) const;
  std::vector<Var> all() const;
};

// Standalone language model: its own predictor plus its own copy of the
// label-path weights (pred projection, feed-forward, layer norm, label head).
struct ExtLmParams {
  ModelDims dims;  // only embed/pred/joiner/vocab fields are used
  PredictorP pred;
  Var w_pred, b_pred;
  FeedForwardP ff;
  LayerNormP ln_ff;
  Var w_label, b_label;

  static ExtLmParams init(const ModelDims& dims, uint64_t seed);
  void visit(
      const std::function<void(const std::string&, const Var&)>& fn) const;
  std::vector<Var> all() const;
};

}  // namespace aio
