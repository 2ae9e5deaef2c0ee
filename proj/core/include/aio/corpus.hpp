#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aio/tensor.hpp"

namespace aio {

// Synthetic token-recognition data: every non-EOS token id has a fixed random
// template vector; an utterance concatenates each token's template repeated
// for a random duration and adds i.i.d. Gaussian noise. Deterministic per
// seed, independent of generation order.
struct CorpusConfig {
  int vocab = 6;      // token ids 0..vocab-1, id 0 reserved for EOS
  int feat_dim = 8;
  int min_tokens = 2;
  int max_tokens = 5;
  // Frames per token. The floor keeps every transcript alignable after 2x
  // subsampling; the max/min ratio stays below 3/2 so the token count of a
  // same-token run is recoverable from its total duration (at 2x the counts
  // n and 2n would be acoustically indistinguishable).
  int min_duration = 6;
  int max_duration = 8;
  double noise_std = 0.3;
  int train_count = 500;
  int dev_count = 50;
  int test_count = 50;
  uint64_t seed = 0;

  void validate() const;
};

struct Utterance {
  Tensor features;              // [frames, feat_dim]
  std::vector<int> transcript;  // EOS-free reference, ids in 1..vocab-1
};

struct Corpus {
  std::vector<Utterance> train, dev, test;
};

// Per-token template vectors, row 0 (EOS) all zero. Drawn once per seed;
// generate() uses exactly this table.
Tensor token_templates(const CorpusConfig& cfg);

Corpus generate(const CorpusConfig& cfg);

// Levenshtein with unit substitution/insertion/deletion costs.
int edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref);

// edit_distance / max(1, |ref|).
double token_error_rate(const std::vector<int>& hyp,
                        const std::vector<int>& ref);

// On-disk split layout: <dir>/feats_<id>.f32 holds little-endian 32-bit rows
// of feat_dim reals; <dir>/refs.tsv lines are `id<TAB>space-separated ids`.
void save_split(const std::string& dir, const std::vector<Utterance>& split);
std::vector<Utterance> load_split(const std::string& dir, int feat_dim);

}  // namespace aio
