#include "aio/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace aio {

void ChunkConfig::validate() const {
  if (chunk_len < 1) {
    throw std::invalid_argument("chunk config: chunk_len must be >= 1");
  }
  if (history_chunks < 0) {
    throw std::invalid_argument("chunk config: history_chunks must be >= 0");
  }
}

Tensor subsample(const Tensor& X, int s) {
  if (X.rank() != 2 || X.dim(0) < 1) {
    throw std::invalid_argument("subsample: X must be [T x F] with T >= 1");
  }
  if (s < 1) throw std::invalid_argument("subsample: s must be >= 1");
  int T = X.dim(0), F = X.dim(1);
  int Tp = (T + s - 1) / s;
  Tensor out({Tp, s * F});
  for (int tp = 0; tp < Tp; ++tp) {
    for (int k = 0; k < s; ++k) {
      int t = tp * s + k;
      if (t >= T) break;  // tail stays zero-padded
      for (int f = 0; f < F; ++f) out(tp, k * F + f) = X(t, f);
    }
  }
  return out;
}

AttentionMask chunk_attention_mask(int t_prime, const ChunkConfig& cfg) {
  cfg.validate();
  if (t_prime < 1) {
    throw std::invalid_argument("chunk_attention_mask: T' must be >= 1");
  }
  AttentionMask m(t_prime, t_prime, false);
  for (int tq = 0; tq < t_prime; ++tq) {
    int cq = tq / cfg.chunk_len;
    for (int tk = 0; tk < t_prime; ++tk) {
      int ck = tk / cfg.chunk_len;
      if (ck <= cq && ck >= cq - cfg.history_chunks) m.set(tq, tk, true);
    }
  }
  return m;
}

Tensor sinusoidal_positions(int t_prime, int dim) {
  Tensor pe({t_prime, dim});
  for (int t = 0; t < t_prime; ++t) {
    for (int i = 0; i < dim; i += 2) {
      double rate = std::pow(10000.0, -static_cast<double>(i) / dim);
      pe(t, i) = std::sin(t * rate);
      if (i + 1 < dim) pe(t, i + 1) = std::cos(t * rate);
    }
  }
  return pe;
}

Var encode_graph(const Tensor& X, const AioParams& p,
                 const AttentionMask& mask) {
  if (X.rank() != 2 || X.dim(0) < 1) {
    throw std::invalid_argument("encode: input must be [T x F] with T >= 1");
  }
  if (X.dim(1) != p.dims.feat_dim) {
    throw std::invalid_argument("encode: feature width does not match model");
  }
  Tensor stacked = subsample(X, p.dims.stack);
  int Tp = stacked.dim(0);
  if (mask.rows != Tp || mask.cols != Tp) {
    throw std::invalid_argument("encode: mask does not match T'");
  }
  double eps = p.dims.ln_eps;

  Var h = linear(Var::leaf(std::move(stacked)), p.enc.in_w, p.enc.in_b);
  h = add(h, Var::leaf(sinusoidal_positions(Tp, p.dims.enc_dim)));
  for (const auto& blk : p.enc.blocks) {
    Var x = row_layer_norm(h, blk.ln1.gain, blk.ln1.bias, eps);
    Var q = linear(x, blk.attn.wq, blk.attn.bq);
    Var k = linear(x, blk.attn.wk, blk.attn.bk);
    Var v = linear(x, blk.attn.wv, blk.attn.bv);
    Var a = mh_masked_softmax(mh_scores(k, q, p.dims.enc_heads), mask);
    Var o = linear(mh_attend(a, v), blk.attn.wo, blk.attn.bo);
    h = add(h, o);
    Var f = row_layer_norm(h, blk.ln2.gain, blk.ln2.bias, eps);
    Var ff = linear(activation_node(linear(f, blk.ff.w1, blk.ff.b1), p.dims.act),
                    blk.ff.w2, blk.ff.b2);
    h = add(h, ff);
  }
  return h;
}

Var encode_offline_graph(const Tensor& X, const AioParams& p) {
  int Tp = (X.rank() == 2 ? (X.dim(0) + p.dims.stack - 1) / p.dims.stack : 0);
  if (Tp < 1) {
    throw std::invalid_argument("encode: input must be [T x F] with T >= 1");
  }
  return encode_graph(X, p, AttentionMask::all_true(Tp, Tp));
}

Var encode_streaming_graph(const Tensor& X, const AioParams& p,
                           const ChunkConfig& cfg) {
  int Tp = (X.rank() == 2 ? (X.dim(0) + p.dims.stack - 1) / p.dims.stack : 0);
  if (Tp < 1) {
    throw std::invalid_argument("encode: input must be [T x F] with T >= 1");
  }
  return encode_graph(X, p, chunk_attention_mask(Tp, cfg));
}

Tensor encode_offline(const Tensor& X, const AioParams& p) {
  return encode_offline_graph(X, p).value();
}

Tensor encode_streaming(const Tensor& X, const AioParams& p,
                        const ChunkConfig& cfg) {
  return encode_streaming_graph(X, p, cfg).value();
}

}  // namespace aio
