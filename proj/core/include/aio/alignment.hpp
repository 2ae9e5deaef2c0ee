#pragma once

#include <vector>

#include "aio/encoder.hpp"
#include "aio/mask.hpp"
#include "aio/tensor.hpp"

namespace aio {

// Forward-backward variables of the transducer recursion over a factored
// lattice. alpha(t, u) excludes the emission taken at (t, u); beta(t, u)
// includes it; log_total = alpha(T'-1, U) plus the final blank.
struct TransducerDp {
  int t_prime = 0;
  int u_len = 0;                    // number of labels U
  std::vector<double> log_alpha;    // [T' x (U+1)], row-major
  std::vector<double> log_beta;     // [T' x (U+1)]
  double log_total = 0.0;
};

// lattice holds T'*(U+1) rows of K+1 probabilities (rank 2 with row index
// t*(U+1)+u, or the equivalent rank-3 tensor).
TransducerDp transducer_dp(const Tensor& lattice, int t_prime,
                           const std::vector<int>& y);

// Node posteriors gamma(t, u) = P(path through (t, u) | Y). Throws when the
// target is infeasible under the lattice.
Tensor occupancy(const Tensor& lattice, int t_prime,
                 const std::vector<int>& y);

// Posterior distribution over the frame at which each token is emitted:
// [U x T'], each row sums to 1. Throws when the target is infeasible.
Tensor emission_distribution(const Tensor& lattice, int t_prime,
                             const std::vector<int>& y);

// Most probable emission frame per token (0-based frames): argmax over t of
// the posterior that y_u is emitted at t, earliest frame on ties, then made
// non-decreasing. Empty for U = 0.
std::vector<int> emission_frames(const Tensor& lattice, int t_prime,
                                 const std::vector<int>& y);

// Streaming attention mask for the label-synchronous pass: row u may attend
// every frame of every chunk up to and including the chunk that contains the
// token's emission frame. Row 0 (the start symbol) sees the first chunk.
// Rows are nested because emission frames are non-decreasing.
AttentionMask aed_stream_mask(const std::vector<int>& frames,
                              const ChunkConfig& cfg, int t_prime);

}  // namespace aio
