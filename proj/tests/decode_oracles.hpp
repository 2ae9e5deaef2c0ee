#pragma once

// Exhaustive reference searches for the decoders. Each walks every reachable
// path through a DecodeSource with the same scoring rules as the beams but no
// pruning and no merging shortcuts, so a beam wide enough to keep everything
// must reproduce these results exactly.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "aio/decode.hpp"
#include "aio/params.hpp"

namespace oracle {

inline double lse(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline void pool(std::map<std::vector<int>, double>& finals,
                 const std::vector<int>& tokens, double s) {
  if (!std::isfinite(s)) return;  // zero-probability, not a hypothesis
  auto it = finals.find(tokens);
  if (it == finals.end())
    finals.emplace(tokens, s);
  else
    it->second = lse(it->second, s);
}

inline std::vector<aio::ScoredTranscript> rank(
    const std::map<std::vector<int>, double>& finals) {
  std::vector<aio::ScoredTranscript> out;
  for (const auto& [tokens, score] : finals) out.push_back({score, tokens});
  std::stable_sort(out.begin(), out.end(), aio::transcript_order);
  return out;
}

inline int attention_extent(const aio::DecodeConfig& cfg, int t_prime, int t) {
  if (!cfg.streaming) return t_prime;
  return std::min(t_prime, (t / cfg.chunk.chunk_len + 1) * cfg.chunk.chunk_len);
}

inline std::vector<double> frame_sync_label_row(aio::DecodeSource& src,
                                                const aio::DecodeConfig& cfg,
                                                int ctx, int t) {
  switch (cfg.mode) {
    case aio::DecodeMode::kHat:
      return src.hat_labels(ctx, t);
    case aio::DecodeMode::kAedStream:
      return src.aed_labels(ctx, attention_extent(cfg, src.t_prime(), t));
    case aio::DecodeMode::kJoint: {
      std::vector<double> aed, ext, ilm;
      if (cfg.mu_aed() > 0.0)
        aed = src.aed_labels(ctx, attention_extent(cfg, src.t_prime(), t));
      if (cfg.rho_extlm > 0.0) ext = src.extlm_labels(ctx);
      if (cfg.rho_ilm > 0.0) ilm = src.ilm_labels(ctx);
      return aio::fuse_label_scores(src.hat_labels(ctx, t), aed, ext, ilm, cfg);
    }
    default:
      throw std::invalid_argument("oracle: not a frame-sync mode");
  }
}

// Every alignment: blank advances the frame (finalizing from the last one),
// labels extend the prefix up to max_symbols_per_frame per frame, EOS
// finalizes immediately.
inline std::vector<aio::ScoredTranscript> exhaustive_frame_sync(
    aio::DecodeSource& src, const aio::DecodeConfig& cfg) {
  int T = src.t_prime();
  int K = src.vocab();
  std::map<std::vector<int>, double> finals;
  if (T == 0) return {{0.0, {}}};

  struct Walker {
    aio::DecodeSource& src;
    const aio::DecodeConfig& cfg;
    int T, K;
    std::map<std::vector<int>, double>& finals;
    void walk(int ctx, std::vector<int>& prefix, int t, int syms,
              double score) {
      if (!std::isfinite(score)) return;
      double b = src.blank_prob(ctx, t);
      double lb = std::log(b), lnb = std::log(1.0 - b);
      if (t == T - 1)
        pool(finals, prefix, score + lb);
      else
        walk(ctx, prefix, t + 1, 0, score + lb);
      if (syms >= cfg.max_symbols_per_frame) return;
      std::vector<double> row = frame_sync_label_row(src, cfg, ctx, t);
      for (int v = 0; v < K; ++v) {
        double s = score + lnb + row[static_cast<size_t>(v)];
        if (v == aio::kEosId) {
          pool(finals, prefix, s);
          continue;
        }
        int child = src.extend(ctx, v);
        prefix.push_back(v);
        walk(child, prefix, t, syms + 1, s);
        prefix.pop_back();
      }
    }
  };
  std::vector<int> prefix;
  Walker{src, cfg, T, K, finals}.walk(src.start(), prefix, 0, 0, 0.0);
  return rank(finals);
}

// Every raw frame labeling, collapsed by the usual rule (drop repeats unless
// separated by blank, drop blanks); a raw EOS stops the utterance there.
inline std::vector<aio::ScoredTranscript> exhaustive_ctc(
    aio::DecodeSource& src) {
  int T = src.t_prime();
  int K = src.vocab();
  std::map<std::vector<int>, double> finals;
  if (T == 0) return {{0.0, {}}};

  struct Walker {
    aio::DecodeSource& src;
    int T, K;
    std::map<std::vector<int>, double>& finals;
    // last_raw: -1 for blank or start, else the label id.
    void walk(int t, int last_raw, std::vector<int>& collapsed, double score) {
      if (!std::isfinite(score)) return;
      if (t == T) {
        pool(finals, collapsed, score);
        return;
      }
      std::vector<double> row = src.ctc_row(t);
      walk(t + 1, -1, collapsed, score + row[0]);
      for (int v = 0; v < K; ++v) {
        double s = score + row[static_cast<size_t>(v) + 1];
        if (v == aio::kEosId) {
          pool(finals, collapsed, s);
          continue;
        }
        if (v == last_raw) {
          walk(t + 1, v, collapsed, s);
        } else {
          collapsed.push_back(v);
          walk(t + 1, v, collapsed, s);
          collapsed.pop_back();
        }
      }
    }
  };
  std::vector<int> collapsed;
  Walker{src, T, K, finals}.walk(0, -1, collapsed, 0.0);
  return rank(finals);
}

// Every label sequence up to T' * max_symbols_per_frame tokens: shorter ones
// terminated (and scored) by EOS, cap-length ones taken as-is.
inline std::vector<aio::ScoredTranscript> exhaustive_label_sync(
    aio::DecodeSource& src, const aio::DecodeConfig& cfg) {
  int T = src.t_prime();
  int K = src.vocab();
  std::map<std::vector<int>, double> finals;
  if (T == 0) return {{0.0, {}}};
  int cap = T * cfg.max_symbols_per_frame;

  struct Walker {
    aio::DecodeSource& src;
    int T, K, cap;
    std::map<std::vector<int>, double>& finals;
    void walk(int ctx, std::vector<int>& prefix, double score) {
      if (!std::isfinite(score)) return;
      std::vector<double> row = src.aed_labels(ctx, T);
      for (int v = 0; v < K; ++v) {
        double s = score + row[static_cast<size_t>(v)];
        if (v == aio::kEosId) {
          pool(finals, prefix, s);
          continue;
        }
        prefix.push_back(v);
        if (static_cast<int>(prefix.size()) >= cap) {
          pool(finals, prefix, s);
        } else {
          int child = src.extend(ctx, v);
          walk(child, prefix, s);
        }
        prefix.pop_back();
      }
    }
  };
  std::vector<int> prefix;
  Walker{src, T, K, cap, finals}.walk(src.start(), prefix, 0.0);
  return rank(finals);
}

}  // namespace oracle
