#include "aio/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

#include "aio/alignment.hpp"
#include "aio/joiner.hpp"
#include "aio/predictor.hpp"
#include "aio/rng.hpp"

namespace aio {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

Var zero_scalar() { return Var::leaf(Tensor::zeros({1})); }

// The streaming label-sync masks come from the current streaming lattice's
// most probable emission frames. When the alignment has no probability mass
// (the lattice loss is infinite and the utterance will be skipped anyway),
// fall back to full context so the graph still builds.
AttentionMask stream_label_mask(const Tensor& lattice, int t_prime,
                                const std::vector<int>& y,
                                const ChunkConfig& chunk) {
  try {
    return aed_stream_mask(emission_frames(lattice, t_prime, y), chunk,
                           t_prime);
  } catch (const std::exception&) {
    return AttentionMask::all_true(static_cast<int>(y.size()) + 1, t_prime);
  }
}

PassLosses pass_losses(const Var& h_enc, const Var& h_pred,
                       const std::vector<int>& y,
                       const std::vector<int>& targets, const AioParams& p,
                       const AttentionMask& label_mask) {
  int t_prime = h_enc.value().dim(0);
  PassLosses out;
  Var hat = hat_lattice_graph(h_enc, h_pred, p.joiner, p.dims);
  out.hat = transducer_loss(hat, t_prime, y);
  Var aed = aed_rows_graph(h_enc, h_pred, p.joiner, p.dims, label_mask);
  out.aed = ce_loss(aed, targets);
  Var ctc = ctc_rows_graph(h_enc, p.joiner, p.dims);
  out.ctc = ctc_loss(ctc, y);
  Var twa = twa_lattice_graph(h_enc, h_pred, p.joiner, p.dims, label_mask);
  out.twa = transducer_loss(twa, t_prime, y);
  return out;
}

struct LoopHooks {
  // Builds the loss for one utterance; returns parts + total node.
  std::function<JointLoss(const Utterance&)> forward;
  std::vector<Var> params;
  std::function<void(int)> epoch_end;  // optional, called after each epoch
};

TrainResult run_loop(LoopHooks hooks, const std::vector<Utterance>& data,
                     const TrainConfig& cfg, std::ostream* csv,
                     std::ostream* diag) {
  cfg.validate();
  require(!data.empty(), "train: empty corpus");
  TrainResult result;
  AdamState st;
  if (csv) *csv << kLossCsvHeader << '\n';
  int global_step = 0;
  int consecutive_bad = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Epoch-seeded in-place shuffle so restarts reproduce the exact order.
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(cfg.seed + static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(
                    shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);

    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(),
                            start + static_cast<size_t>(cfg.batch_size));
      zero_grad(hooks.params);
      StepRecord rec;
      rec.epoch = epoch;
      int used = 0;
      for (size_t i = start; i < end; ++i) {
        const Utterance& utt = data[order[i]];
        JointLoss jl = hooks.forward(utt);
        if (!jl.finite) {
          ++result.skipped_utterances;
          if (diag)
            *diag << "skip: utterance with non-finite " << jl.infinite_name
                  << " at epoch " << epoch << '\n';
          continue;
        }
        backward(jl.total);
        for (size_t k = 0; k < jl.parts.size(); ++k) rec.parts[k] += jl.parts[k];
        rec.total += jl.total.scalar();
        ++used;
      }
      bool stepped = false;
      if (used > 0) {
        for (double& x : rec.parts) x /= used;
        rec.total /= used;
        stepped = optimizer_step(hooks.params, st, cfg);
        if (!stepped && diag)
          *diag << "reject: non-finite gradient at epoch " << epoch << '\n';
      } else if (diag) {
        *diag << "reject: no usable utterance in batch at epoch " << epoch
              << '\n';
      }
      if (stepped) {
        consecutive_bad = 0;
        rec.step = ++global_step;
        result.log.push_back(rec);
        if (csv) {
          *csv << rec.epoch << ',' << rec.step;
          char buf[32];
          for (double x : rec.parts) {
            std::snprintf(buf, sizeof buf, ",%.6g", x);
            *csv << buf;
          }
          std::snprintf(buf, sizeof buf, ",%.6g", rec.total);
          *csv << buf << '\n';
        }
      } else if (++consecutive_bad >= 3) {
        throw std::runtime_error(
            "train: three consecutive steps without a finite loss");
      }
    }
    if (hooks.epoch_end) hooks.epoch_end(epoch);
  }
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  require(epochs >= 1, "train: epochs must be positive");
  require(batch_size >= 1, "train: batch size must be positive");
  require(learning_rate > 0.0, "train: learning rate must be positive");
  require(warmup_steps >= 1, "train: warmup steps must be positive");
  require(lambda_lm >= 0.0, "train: lambda must be nonnegative");
  chunk.validate();
}

JointLoss forward_all_modes(const AioParams& p, const Tensor& X,
                            const std::vector<int>& y, const ChunkConfig& chunk,
                            double lambda, bool dual_mode) {
  require(X.rank() == 2 && X.dim(0) >= 1, "train: features must be [T x F]");
  std::vector<int> targets = label_targets(y);

  // One predictor evaluation feeds both passes and the LM head: its rows
  // depend only on the labels.
  Var h_pred = predictor_rows_graph(y, p.pred, p.dims);

  Var enc_off = encode_offline_graph(X, p);
  int t_prime = enc_off.value().dim(0);
  AttentionMask full = AttentionMask::all_true(static_cast<int>(y.size()) + 1,
                                               t_prime);
  PassLosses offline = pass_losses(enc_off, h_pred, y, targets, p, full);

  PassLosses streaming;
  if (dual_mode) {
    Var enc_str = encode_streaming_graph(X, p, chunk);
    Var hat_str = hat_lattice_graph(enc_str, h_pred, p.joiner, p.dims);
    AttentionMask stream_mask =
        stream_label_mask(hat_str.value(), t_prime, y, chunk);
    streaming.hat = transducer_loss(hat_str, t_prime, y);
    Var aed = aed_rows_graph(enc_str, h_pred, p.joiner, p.dims, stream_mask);
    streaming.aed = ce_loss(aed, targets);
    Var ctc = ctc_rows_graph(enc_str, p.joiner, p.dims);
    streaming.ctc = ctc_loss(ctc, y);
    Var twa = twa_lattice_graph(enc_str, h_pred, p.joiner, p.dims, stream_mask);
    streaming.twa = transducer_loss(twa, t_prime, y);
  } else {
    streaming.hat = zero_scalar();
    streaming.aed = zero_scalar();
    streaming.ctc = zero_scalar();
    streaming.twa = zero_scalar();
  }

  Var lm = ce_loss(lm_rows_graph(h_pred, p.joiner, p.dims), targets);
  return combined_loss(offline, streaming, lm, lambda);
}

double schedule_lr(const TrainConfig& cfg, int64_t step) {
  double s = static_cast<double>(step);
  double w = static_cast<double>(cfg.warmup_steps);
  return cfg.learning_rate * std::min(s / w, std::sqrt(w / s));
}

bool optimizer_step(std::vector<Var>& params, AdamState& st,
                    const TrainConfig& cfg) {
  if (st.m.empty()) {
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (Var& p : params) {
      st.m.push_back(Tensor::zeros(p.value().dims()));
      st.v.push_back(Tensor::zeros(p.value().dims()));
    }
  }
  require(st.m.size() == params.size(), "optimizer: parameter list changed");
  for (Var& p : params)
    for (int64_t i = 0; i < p.grad().numel(); ++i)
      if (!std::isfinite(p.grad()[i])) return false;

  int64_t step = st.step + 1;
  double lr = schedule_lr(cfg, step);
  double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(step));
  double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(step));
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor& value = params[k].value();
    Tensor& grad = params[k].grad();
    Tensor& m = st.m[k];
    Tensor& v = st.v[k];
    for (int64_t i = 0; i < value.numel(); ++i) {
      double g = grad[i];
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g;
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g * g;
      double mhat = m[i] / c1;
      double vhat = v[i] / c2;
      value[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
  st.step = step;
  return true;
}

TrainResult train(AioParams& p, const std::vector<Utterance>& data,
                  const TrainConfig& cfg, std::ostream* csv, std::ostream* diag,
                  const std::function<void(int)>& epoch_end) {
  LoopHooks hooks;
  hooks.params = p.all();
  hooks.epoch_end = epoch_end;
  hooks.forward = [&p, &cfg](const Utterance& u) {
    return forward_all_modes(p, u.features, u.transcript, cfg.chunk,
                             cfg.lambda_lm, cfg.dual_mode);
  };
  return run_loop(std::move(hooks), data, cfg, csv, diag);
}

TrainResult train_extlm(ExtLmParams& lm, const std::vector<Utterance>& data,
                        const TrainConfig& cfg, std::ostream* csv,
                        std::ostream* diag,
                        const std::function<void(int)>& epoch_end) {
  LoopHooks hooks;
  hooks.params = lm.all();
  hooks.epoch_end = epoch_end;
  hooks.forward = [&lm](const Utterance& u) {
    std::vector<int> targets = label_targets(u.transcript);
    Var rows = extlm_rows_graph(
        predictor_rows_graph(u.transcript, lm.pred, lm.dims), lm);
    Var loss = ce_loss(rows, targets);
    PassLosses zeros{zero_scalar(), zero_scalar(), zero_scalar(),
                     zero_scalar()};
    // Reuse the nine-part record with the LM slot carrying the only loss.
    JointLoss jl = combined_loss(zeros, zeros, loss, 1.0);
    return jl;
  };
  return run_loop(std::move(hooks), data, cfg, csv, diag);
}

double extlm_perplexity(const ExtLmParams& lm,
                        const std::vector<Utterance>& data) {
  double nll = 0.0;
  int64_t count = 0;
  for (const Utterance& u : data) {
    PredictorState state = predictor_start(lm.pred, lm.dims);
    int prev = kStartSymbol;
    for (int target : label_targets(u.transcript)) {
      auto [row, next] = predict(prev, state, lm.pred, lm.dims);
      Tensor probs = extlm_label_row(row, lm);
      nll -= std::log(probs[target]);
      state = std::move(next);
      prev = target;
      ++count;
    }
  }
  return std::exp(nll / static_cast<double>(std::max<int64_t>(1, count)));
}

}  // namespace aio
