#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "aio/corpus.hpp"
#include "aio/encoder.hpp"
#include "aio/losses.hpp"
#include "aio/params.hpp"

namespace aio {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double learning_rate = 3e-3;
  int warmup_steps = 200;
  double lambda_lm = 0.1;
  ChunkConfig chunk;
  uint64_t seed = 0;
  bool dual_mode = true;  // false trains the offline passes only (ablation)

  void validate() const;
};

// One utterance through every mode: the offline pass encodes with full
// context and uses all-true label-sync masks; the streaming pass encodes in
// chunks and derives its label-sync masks from the streaming transducer
// lattice's most probable emission frames (a hard alignment, no gradient
// through mask construction). The language-model loss reads the shared
// predictor rows once. With dual_mode off the four streaming components are
// constant zeros.
JointLoss forward_all_modes(const AioParams& p, const Tensor& X,
                            const std::vector<int>& y, const ChunkConfig& chunk,
                            double lambda, bool dual_mode = true);

// Bias-corrected moment optimizer with linear warmup into inverse-sqrt decay:
// lr(s) = base * min(s / warmup, sqrt(warmup / s)).
struct AdamState {
  std::vector<Tensor> m, v;  // aligned with the parameter list
  int64_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

double schedule_lr(const TrainConfig& cfg, int64_t step);

// Consumes the accumulated leaf gradients. Returns false and changes nothing
// (moments, step count, parameters) when any gradient entry is non-finite.
bool optimizer_step(std::vector<Var>& params, AdamState& st,
                    const TrainConfig& cfg);

// One CSV row per optimizer step, batch-mean components.
struct StepRecord {
  int epoch = 0;
  int step = 0;  // global, 1-based
  std::array<double, 9> parts{};
  double total = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> log;
  int skipped_utterances = 0;
};

inline const char* kLossCsvHeader =
    "epoch,step,L_hat_off,L_aed_off,L_ctc_off,L_twa_off,"
    "L_hat_str,L_aed_str,L_ctc_str,L_twa_str,L_lm,total";

// Single-stage loop: epoch-seeded shuffle, per-batch serial gradient
// accumulation into the shared parameter buffer, one optimizer step per
// batch. Non-finite utterances are skipped with a note to `diag`; three
// consecutive failed steps abort with std::runtime_error. Writes kLossCsvHeader
// plus one row per step to `csv` when given. `epoch_end` (if set) runs after
// each completed epoch with the 1-based epoch number; the parameters it sees
// are exactly the mid-training values, so it can checkpoint or evaluate.
TrainResult train(AioParams& p, const std::vector<Utterance>& data,
                  const TrainConfig& cfg, std::ostream* csv = nullptr,
                  std::ostream* diag = nullptr,
                  const std::function<void(int)>& epoch_end = {});

// Standalone language model on transcripts alone: same loop shape, loss is
// next-label cross-entropy (EOS-terminated) under the model's own predictor
// and label head.
TrainResult train_extlm(ExtLmParams& lm, const std::vector<Utterance>& data,
                        const TrainConfig& cfg, std::ostream* csv = nullptr,
                        std::ostream* diag = nullptr,
                        const std::function<void(int)>& epoch_end = {});

// exp(total next-label cross-entropy / target count) over a split.
double extlm_perplexity(const ExtLmParams& lm,
                        const std::vector<Utterance>& data);

}  // namespace aio
