#pragma once

#include "aio/mask.hpp"
#include "aio/params.hpp"
#include "aio/tensor.hpp"

namespace aio {

// Chunk geometry for the streaming pass, in post-subsampling frames.
struct ChunkConfig {
  int chunk_len = 8;      // L_c
  int history_chunks = 1; // full chunks visible to the left of the current one

  void validate() const;
};

// Frame stacking: output frame t' concatenates input frames t's..t's+s-1,
// zero-padded past the end. T' = ceil(T/s).
Tensor subsample(const Tensor& X, int s);

// Position t may attend t'' iff chunk(t'') is within [chunk(t)-H, chunk(t)].
// Attention within the own chunk includes positions to the right of t; that
// is the chunkwise processing model, not a causality leak.
AttentionMask chunk_attention_mask(int t_prime, const ChunkConfig& cfg);

// Absolute sinusoidal positions, added after the input projection.
Tensor sinusoidal_positions(int t_prime, int dim);

// Shared encoder body; offline is the all-true-mask special case. Graph
// variants build on the tape for training; the Tensor variants run the same
// graph and return its value, so both paths are arithmetically identical.
Var encode_graph(const Tensor& X, const AioParams& p, const AttentionMask& mask);
Var encode_offline_graph(const Tensor& X, const AioParams& p);
Var encode_streaming_graph(const Tensor& X, const AioParams& p,
                           const ChunkConfig& cfg);

Tensor encode_offline(const Tensor& X, const AioParams& p);
Tensor encode_streaming(const Tensor& X, const AioParams& p,
                        const ChunkConfig& cfg);

}  // namespace aio
