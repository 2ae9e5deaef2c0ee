#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "aio/encoder.hpp"
#include "aio/joiner.hpp"
#include "aio/params.hpp"
#include "aio/predictor.hpp"
#include "aio/tensor.hpp"

namespace aio {

enum class DecodeMode { kHat, kCtc, kAedOffline, kAedStream, kJoint };

// mu_aed is derived as 1 - mu_hat, so the label-fusion weights always sit on
// the simplex by construction.
struct DecodeConfig {
  DecodeMode mode = DecodeMode::kHat;
  int beam = 8;
  double mu_hat = 1.0;
  double rho_extlm = 0.0;
  double rho_ilm = 0.0;
  int max_symbols_per_frame = 5;
  bool streaming = false;  // chunked encoding + chunk-bounded label attention
  ChunkConfig chunk;

  double mu_aed() const { return 1.0 - mu_hat; }
  void validate() const;  // throws std::invalid_argument
};

// Log-linear label fusion. Inputs are log label distributions of length K;
// the result is an unnormalized ranking score per label. The blank channel
// never passes through here. A term whose weight is zero is skipped without
// touching its input (which may then be empty), so fusing with mu_hat = 1 and
// both rho zero returns the hat scores bit for bit.
std::vector<double> fuse_label_scores(const std::vector<double>& hat,
                                      const std::vector<double>& aed,
                                      const std::vector<double>& extlm,
                                      const std::vector<double>& ilm,
                                      const DecodeConfig& cfg);

// Everything a decoder reads from a model, behind integer prefix handles so
// hypotheses share predictor work. Handle 0 is the empty prefix; extend() is
// memoized, so one label prefix maps to exactly one handle and the predictor
// runs once per distinct prefix no matter how many modes consume it.
class DecodeSource {
 public:
  virtual ~DecodeSource() = default;
  virtual int t_prime() const = 0;
  virtual int vocab() const = 0;  // K, EOS included
  virtual int start() = 0;
  virtual int extend(int ctx, int label) = 0;
  // HAT factorization at (t, u): blank probability and log label distribution.
  virtual double blank_prob(int ctx, int t) = 0;
  virtual std::vector<double> hat_labels(int ctx, int t) = 0;
  // CTC frame posterior, K+1 log values, blank at index 0. Prefix-free.
  virtual std::vector<double> ctc_row(int t) = 0;
  // Softmax-attention log label row over frames [0, frames_end).
  virtual std::vector<double> aed_labels(int ctx, int frames_end) = 0;
  virtual std::vector<double> ilm_labels(int ctx) = 0;
  virtual std::vector<double> extlm_labels(int ctx) = 0;
  virtual bool has_extlm() const = 0;
};

// Fixed probability tables for decoder tests: scores depend on the prefix
// only through its length, clamped to the deepest row provided.
class FrozenSource : public DecodeSource {
 public:
  // hat: [T' x U_depth x (K+1)] factored cells; ctc: [T' x (K+1)];
  // aed/ilm/extlm: [U_depth x K] rows summing to 1 (extlm may be undefined).
  FrozenSource(Tensor hat, Tensor ctc, Tensor aed, Tensor ilm,
               Tensor extlm = Tensor());

  int t_prime() const override { return hat_.defined() ? hat_.dim(0) : ctc_.dim(0); }
  int vocab() const override { return vocab_; }
  int start() override;
  int extend(int ctx, int label) override;
  double blank_prob(int ctx, int t) override;
  std::vector<double> hat_labels(int ctx, int t) override;
  std::vector<double> ctc_row(int t) override;
  std::vector<double> aed_labels(int ctx, int frames_end) override;
  std::vector<double> ilm_labels(int ctx) override;
  std::vector<double> extlm_labels(int ctx) override;
  bool has_extlm() const override { return extlm_.defined(); }

  int contexts() const { return static_cast<int>(prefixes_.size()); }
  const std::vector<int>& prefix(int ctx) const { return prefixes_[ctx]; }

 private:
  int row_u(int ctx) const;
  Tensor hat_, ctc_, aed_, ilm_, extlm_;
  int vocab_ = 0;
  std::vector<std::vector<int>> prefixes_;
  std::vector<std::map<int, int>> children_;
};

// Live model: encodes once, then serves per-cell readouts from cached
// projections. Per-context caches hold the predictor state, its projection,
// and any label rows already computed, so every mode shares one predictor
// evaluation per prefix.
class ModelSource : public DecodeSource {
 public:
  ModelSource(const AioParams& p, const Tensor& features,
              const DecodeConfig& cfg, const ExtLmParams* extlm = nullptr);

  int t_prime() const override { return t_prime_; }
  int vocab() const override { return p_.dims.vocab; }
  int start() override;
  int extend(int ctx, int label) override;
  double blank_prob(int ctx, int t) override;
  std::vector<double> hat_labels(int ctx, int t) override;
  std::vector<double> ctc_row(int t) override;
  std::vector<double> aed_labels(int ctx, int frames_end) override;
  std::vector<double> ilm_labels(int ctx) override;
  std::vector<double> extlm_labels(int ctx) override;
  bool has_extlm() const override { return extlm_ != nullptr; }

  int predictor_calls() const { return predictor_calls_; }
  int extlm_predictor_calls() const { return extlm_calls_; }
  int contexts() const { return static_cast<int>(ctxs_.size()); }
  const EncProjection& enc() const { return enc_; }
  const PredProjection& pred_projection(int ctx);
  const std::vector<int>& prefix(int ctx) const { return ctxs_[ctx].prefix; }

 private:
  struct Ctx {
    std::vector<int> prefix;
    PredictorState state;  // after consuming the prefix (plus start symbol)
    Tensor pred_row;
    PredProjection proj;
    PredictorState ext_state;
    Tensor ext_row;
    std::optional<std::vector<double>> ilm_row;
    std::optional<std::vector<double>> extlm_row;
    std::unordered_map<int, FactoredOut> hat_cells;  // keyed by frame
    std::map<int, std::vector<double>> aed_rows;     // keyed by frames_end
    std::map<int, int> children;
  };
  const FactoredOut& hat_cell_at(int ctx, int t);

  AioParams p_;
  DecodeConfig cfg_;
  const ExtLmParams* extlm_ = nullptr;
  bool track_extlm_ = false;
  EncProjection enc_;
  int t_prime_ = 0;
  std::vector<Ctx> ctxs_;
  std::vector<std::optional<std::vector<double>>> ctc_rows_;
  int predictor_calls_ = 0;
  int extlm_calls_ = 0;
};

struct ScoredTranscript {
  double log_score = 0.0;
  std::vector<int> tokens;  // EOS-free
};

// Ranking order everywhere: higher score first, ties by lexicographically
// smaller token sequence (stable and platform-independent).
bool transcript_order(const ScoredTranscript& a, const ScoredTranscript& b);

// Per-step record of a greedy walk, enough to replay the path for dumps.
struct GreedyTrace {
  // One entry per visited lattice cell (t, u): true when the walk advanced
  // the frame (blank), false when it emitted a label.
  std::vector<uint8_t> advanced;
  std::vector<int> cell_t, cell_u;
  std::vector<double> blank_probs;
};

// Frame-synchronous greedy walk. The advance/emit decision always comes from
// the HAT (or CTC) factorization alone: advance when ln(blank) is at least
// ln(1-blank) plus the best hat label log-probability. The emitted label is
// the argmax of the mode's (possibly fused) label row, so switching the label
// source never changes the blank decision sequence.
std::vector<int> greedy_frame_sync(DecodeSource& src, const DecodeConfig& cfg,
                                   GreedyTrace* trace = nullptr);

// Alignment-length-synchronous beam for HAT / AED-stream / JOINT: hypotheses
// at step n have consumed n lattice moves, duplicate prefixes merge by
// log-sum-exp, pruning keeps the top `beam` in transcript_order. CTC mode
// runs prefix search over the frame posteriors with the same pruning rule.
// Complete hypotheses (final-frame blank, or EOS in any mode) become terminal
// beam entries that keep competing for slots; the survivors form the n-best
// list, best first. Keeping them in the beam makes beam = 1 degenerate to
// the greedy walk.
std::vector<ScoredTranscript> beam_frame_sync(DecodeSource& src,
                                              const DecodeConfig& cfg);

// Label-synchronous beam over full-attention softmax label rows; hypotheses
// end on EOS or at T' * max_symbols_per_frame tokens.
std::vector<ScoredTranscript> beam_label_sync_aed(DecodeSource& src,
                                                  const DecodeConfig& cfg);

}  // namespace aio
