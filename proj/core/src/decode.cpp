#include "aio/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "aio/ops.hpp"

namespace aio {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

std::vector<double> log_vector(const double* p, int n) {
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = std::log(p[i]);
  return out;
}

// Ties take the lowest label id, so decoders are deterministic.
int argmax_label(const std::vector<double>& row) {
  int best = 0;
  for (int v = 1; v < static_cast<int>(row.size()); ++v)
    if (row[static_cast<size_t>(v)] > row[static_cast<size_t>(best)]) best = v;
  return best;
}

// Streaming label attention reaches to the end of the chunk holding frame t;
// offline it always spans the whole utterance.
int attention_extent(const DecodeConfig& cfg, int t_prime, int t) {
  if (!cfg.streaming) return t_prime;
  int chunk = t / cfg.chunk.chunk_len;
  return std::min(t_prime, (chunk + 1) * cfg.chunk.chunk_len);
}

// The label row a frame-synchronous decoder scores emissions with. `hat` is
// the already-fetched HAT label row for this cell.
std::vector<double> mode_label_row(DecodeSource& src, const DecodeConfig& cfg,
                                   int ctx, int t,
                                   const std::vector<double>& hat) {
  switch (cfg.mode) {
    case DecodeMode::kHat:
      return hat;
    case DecodeMode::kAedStream:
      return src.aed_labels(ctx, attention_extent(cfg, src.t_prime(), t));
    case DecodeMode::kJoint: {
      std::vector<double> aed, ext, ilm;
      if (cfg.mu_aed() > 0.0)
        aed = src.aed_labels(ctx, attention_extent(cfg, src.t_prime(), t));
      if (cfg.rho_extlm > 0.0) ext = src.extlm_labels(ctx);
      if (cfg.rho_ilm > 0.0) ilm = src.ilm_labels(ctx);
      return fuse_label_scores(hat, aed, ext, ilm, cfg);
    }
    default:
      throw std::invalid_argument("mode_label_row: not a frame-sync mode");
  }
}

// Zero-probability hypotheses are not hypotheses: a -inf (or otherwise
// non-finite) score never enters the pool or the beam.
void pool_final(std::map<std::vector<int>, double>& finals,
                const std::vector<int>& tokens, double score) {
  if (!std::isfinite(score)) return;
  auto it = finals.find(tokens);
  if (it == finals.end())
    finals.emplace(tokens, score);
  else
    it->second = log_sum_exp2(it->second, score);
}

std::vector<ScoredTranscript> rank_finals(
    const std::map<std::vector<int>, double>& finals, int beam) {
  std::vector<ScoredTranscript> out;
  out.reserve(finals.size());
  for (const auto& [tokens, score] : finals) out.push_back({score, tokens});
  std::stable_sort(out.begin(), out.end(), transcript_order);
  if (static_cast<int>(out.size()) > beam) out.resize(static_cast<size_t>(beam));
  return out;
}

}  // namespace

void DecodeConfig::validate() const {
  require(beam >= 1, "decode config: beam must be at least 1");
  require(mu_hat >= 0.0 && mu_hat <= 1.0,
          "decode config: mu_hat must lie in [0, 1]");
  require(rho_extlm >= 0.0, "decode config: rho_extlm must be nonnegative");
  require(rho_ilm >= 0.0, "decode config: rho_ilm must be nonnegative");
  require(max_symbols_per_frame >= 1,
          "decode config: max_symbols_per_frame must be at least 1");
  if (streaming) chunk.validate();
}

std::vector<double> fuse_label_scores(const std::vector<double>& hat,
                                      const std::vector<double>& aed,
                                      const std::vector<double>& extlm,
                                      const std::vector<double>& ilm,
                                      const DecodeConfig& cfg) {
  cfg.validate();
  size_t K = hat.size();
  require(K > 0, "fuse_label_scores: hat scores required");
  std::vector<double> out(K, 0.0);
  if (cfg.mu_hat != 0.0)
    for (size_t i = 0; i < K; ++i) out[i] += cfg.mu_hat * hat[i];
  if (cfg.mu_aed() != 0.0) {
    require(aed.size() == K, "fuse_label_scores: aed scores required");
    for (size_t i = 0; i < K; ++i) out[i] += cfg.mu_aed() * aed[i];
  }
  if (cfg.rho_extlm != 0.0) {
    require(extlm.size() == K,
            "fuse_label_scores: external lm scores required");
    for (size_t i = 0; i < K; ++i) out[i] += cfg.rho_extlm * extlm[i];
  }
  if (cfg.rho_ilm != 0.0) {
    require(ilm.size() == K, "fuse_label_scores: internal lm scores required");
    for (size_t i = 0; i < K; ++i) out[i] -= cfg.rho_ilm * ilm[i];
  }
  return out;
}

// --- FrozenSource -------------------------------------------------------------

FrozenSource::FrozenSource(Tensor hat, Tensor ctc, Tensor aed, Tensor ilm,
                           Tensor extlm)
    : hat_(std::move(hat)),
      ctc_(std::move(ctc)),
      aed_(std::move(aed)),
      ilm_(std::move(ilm)),
      extlm_(std::move(extlm)) {
  if (hat_.defined()) {
    require(hat_.rank() == 3, "frozen source: hat table must be rank 3");
    vocab_ = hat_.dim(2) - 1;
  }
  if (ctc_.defined()) {
    require(ctc_.rank() == 2, "frozen source: ctc table must be rank 2");
    if (vocab_ == 0) vocab_ = ctc_.dim(1) - 1;
    require(ctc_.dim(1) == vocab_ + 1, "frozen source: ctc width mismatch");
  }
  for (const Tensor* t : {&aed_, &ilm_, &extlm_}) {
    if (!t->defined()) continue;
    require(t->rank() == 2, "frozen source: label tables must be rank 2");
    if (vocab_ == 0) vocab_ = t->dim(1);
    require(t->dim(1) == vocab_, "frozen source: label width mismatch");
  }
  require(vocab_ >= 2, "frozen source: at least one table required");
  prefixes_.push_back({});
  children_.push_back({});
}

int FrozenSource::start() { return 0; }

int FrozenSource::extend(int ctx, int label) {
  require(ctx >= 0 && ctx < contexts(), "frozen source: bad context");
  require(label >= 0 && label < vocab_, "frozen source: label out of range");
  auto it = children_[static_cast<size_t>(ctx)].find(label);
  if (it != children_[static_cast<size_t>(ctx)].end()) return it->second;
  std::vector<int> p = prefixes_[static_cast<size_t>(ctx)];
  p.push_back(label);
  int id = contexts();
  prefixes_.push_back(std::move(p));
  children_.push_back({});
  children_[static_cast<size_t>(ctx)].emplace(label, id);
  return id;
}

int FrozenSource::row_u(int ctx) const {
  int u = static_cast<int>(prefixes_[static_cast<size_t>(ctx)].size());
  int depth = hat_.defined() ? hat_.dim(1)
                             : (aed_.defined() ? aed_.dim(0) : ilm_.dim(0));
  return std::min(u, depth - 1);
}

double FrozenSource::blank_prob(int ctx, int t) {
  require(hat_.defined(), "frozen source: no hat table");
  return hat_(t, row_u(ctx), 0);
}

std::vector<double> FrozenSource::hat_labels(int ctx, int t) {
  require(hat_.defined(), "frozen source: no hat table");
  int u = row_u(ctx);
  double lnb = std::log(1.0 - hat_(t, u, 0));
  std::vector<double> out(static_cast<size_t>(vocab_));
  for (int v = 0; v < vocab_; ++v)
    out[static_cast<size_t>(v)] = std::log(hat_(t, u, v + 1)) - lnb;
  return out;
}

std::vector<double> FrozenSource::ctc_row(int t) {
  require(ctc_.defined(), "frozen source: no ctc table");
  return log_vector(ctc_.data() + static_cast<size_t>(t) * (vocab_ + 1),
                    vocab_ + 1);
}

std::vector<double> FrozenSource::aed_labels(int ctx, int frames_end) {
  require(aed_.defined(), "frozen source: no aed table");
  require(frames_end >= 1 && frames_end <= t_prime(),
          "frozen source: bad attention extent");
  int u = std::min(static_cast<int>(prefixes_[static_cast<size_t>(ctx)].size()),
                   aed_.dim(0) - 1);
  return log_vector(aed_.data() + static_cast<size_t>(u) * vocab_, vocab_);
}

std::vector<double> FrozenSource::ilm_labels(int ctx) {
  require(ilm_.defined(), "frozen source: no ilm table");
  int u = std::min(static_cast<int>(prefixes_[static_cast<size_t>(ctx)].size()),
                   ilm_.dim(0) - 1);
  return log_vector(ilm_.data() + static_cast<size_t>(u) * vocab_, vocab_);
}

std::vector<double> FrozenSource::extlm_labels(int ctx) {
  require(extlm_.defined(), "frozen source: no extlm table");
  int u = std::min(static_cast<int>(prefixes_[static_cast<size_t>(ctx)].size()),
                   extlm_.dim(0) - 1);
  return log_vector(extlm_.data() + static_cast<size_t>(u) * vocab_, vocab_);
}

// --- ModelSource --------------------------------------------------------------

ModelSource::ModelSource(const AioParams& p, const Tensor& features,
                         const DecodeConfig& cfg, const ExtLmParams* extlm)
    : p_(p), cfg_(cfg), extlm_(extlm) {
  cfg_.validate();
  require(!(cfg_.rho_extlm > 0.0 && extlm == nullptr),
          "decode: rho_extlm > 0 requires external lm weights");
  track_extlm_ = extlm != nullptr && cfg_.rho_extlm > 0.0;
  Tensor h_enc = cfg_.streaming ? encode_streaming(features, p_, cfg_.chunk)
                                : encode_offline(features, p_);
  t_prime_ = h_enc.dim(0);
  enc_ = project_encoder(h_enc, p_.joiner, p_.dims);
  ctc_rows_.resize(static_cast<size_t>(t_prime_));
}

int ModelSource::start() {
  if (ctxs_.empty()) {
    Ctx c;
    auto [row, st] = predict(kStartSymbol, predictor_start(p_), p_);
    ++predictor_calls_;
    c.state = std::move(st);
    c.pred_row = row;
    c.proj = project_predictor(row, p_.joiner, p_.dims);
    if (track_extlm_) {
      auto [erow, est] = predict(kStartSymbol,
                                 predictor_start(extlm_->pred, extlm_->dims),
                                 extlm_->pred, extlm_->dims);
      ++extlm_calls_;
      c.ext_state = std::move(est);
      c.ext_row = erow;
    }
    ctxs_.push_back(std::move(c));
  }
  return 0;
}

int ModelSource::extend(int ctx, int label) {
  require(ctx >= 0 && ctx < contexts(), "decode: bad context");
  require(label >= 0 && label < p_.dims.vocab, "decode: label out of range");
  auto it = ctxs_[static_cast<size_t>(ctx)].children.find(label);
  if (it != ctxs_[static_cast<size_t>(ctx)].children.end()) return it->second;

  Ctx c;
  c.prefix = ctxs_[static_cast<size_t>(ctx)].prefix;
  c.prefix.push_back(label);
  auto [row, st] = predict(label, ctxs_[static_cast<size_t>(ctx)].state, p_);
  ++predictor_calls_;
  c.state = std::move(st);
  c.pred_row = row;
  c.proj = project_predictor(row, p_.joiner, p_.dims);
  if (track_extlm_) {
    auto [erow, est] = predict(label, ctxs_[static_cast<size_t>(ctx)].ext_state,
                               extlm_->pred, extlm_->dims);
    ++extlm_calls_;
    c.ext_state = std::move(est);
    c.ext_row = erow;
  }
  int id = contexts();
  ctxs_.push_back(std::move(c));
  ctxs_[static_cast<size_t>(ctx)].children.emplace(label, id);
  return id;
}

const FactoredOut& ModelSource::hat_cell_at(int ctx, int t) {
  require(ctx >= 0 && ctx < contexts(), "decode: bad context");
  require(t >= 0 && t < t_prime_, "decode: frame out of range");
  Ctx& c = ctxs_[static_cast<size_t>(ctx)];
  auto it = c.hat_cells.find(t);
  if (it != c.hat_cells.end()) return it->second;
  FactoredOut out = hat_out(enc_, t, c.proj, p_.joiner, p_.dims);
  return c.hat_cells.emplace(t, std::move(out)).first->second;
}

double ModelSource::blank_prob(int ctx, int t) {
  return hat_cell_at(ctx, t).blank;
}

std::vector<double> ModelSource::hat_labels(int ctx, int t) {
  const FactoredOut& cell = hat_cell_at(ctx, t);
  return log_vector(cell.labels.data(), p_.dims.vocab);
}

std::vector<double> ModelSource::ctc_row(int t) {
  require(t >= 0 && t < t_prime_, "decode: frame out of range");
  auto& slot = ctc_rows_[static_cast<size_t>(t)];
  if (!slot) {
    Tensor cell = ctc_cell(enc_, t, p_.joiner, p_.dims);
    slot = log_vector(cell.data(), p_.dims.vocab + 1);
  }
  return *slot;
}

std::vector<double> ModelSource::aed_labels(int ctx, int frames_end) {
  require(ctx >= 0 && ctx < contexts(), "decode: bad context");
  require(frames_end >= 1 && frames_end <= t_prime_,
          "decode: bad attention extent");
  Ctx& c = ctxs_[static_cast<size_t>(ctx)];
  auto it = c.aed_rows.find(frames_end);
  if (it != c.aed_rows.end()) return it->second;
  std::vector<uint8_t> frames(static_cast<size_t>(t_prime_), 0);
  for (int t = 0; t < frames_end; ++t) frames[static_cast<size_t>(t)] = 1;
  Tensor row = aed_label_row(enc_, frames, c.proj, p_.joiner, p_.dims);
  auto logs = log_vector(row.data(), p_.dims.vocab);
  c.aed_rows.emplace(frames_end, logs);
  return logs;
}

std::vector<double> ModelSource::ilm_labels(int ctx) {
  require(ctx >= 0 && ctx < contexts(), "decode: bad context");
  Ctx& c = ctxs_[static_cast<size_t>(ctx)];
  if (!c.ilm_row) {
    Tensor row = lm_label_row(c.pred_row, p_.joiner, p_.dims);
    c.ilm_row = log_vector(row.data(), p_.dims.vocab);
  }
  return *c.ilm_row;
}

std::vector<double> ModelSource::extlm_labels(int ctx) {
  require(track_extlm_, "decode: external lm scores were not requested");
  require(ctx >= 0 && ctx < contexts(), "decode: bad context");
  Ctx& c = ctxs_[static_cast<size_t>(ctx)];
  if (!c.extlm_row) {
    Tensor row = extlm_label_row(c.ext_row, *extlm_);
    c.extlm_row = log_vector(row.data(), p_.dims.vocab);
  }
  return *c.extlm_row;
}

const PredProjection& ModelSource::pred_projection(int ctx) {
  require(ctx >= 0 && ctx < contexts(), "decode: bad context");
  return ctxs_[static_cast<size_t>(ctx)].proj;
}

// --- decoders -----------------------------------------------------------------

bool transcript_order(const ScoredTranscript& a, const ScoredTranscript& b) {
  if (a.log_score != b.log_score) return a.log_score > b.log_score;
  return a.tokens < b.tokens;
}

std::vector<int> greedy_frame_sync(DecodeSource& src, const DecodeConfig& cfg,
                                   GreedyTrace* trace) {
  cfg.validate();
  require(cfg.mode != DecodeMode::kAedOffline,
          "greedy_frame_sync: offline aed is label-synchronous");
  if (cfg.mode == DecodeMode::kCtc) {
    DecodeConfig one = cfg;
    one.beam = 1;
    auto nbest = beam_frame_sync(src, one);
    return nbest.empty() ? std::vector<int>{} : nbest.front().tokens;
  }
  int T = src.t_prime();
  int ctx = src.start();
  std::vector<int> out;
  for (int t = 0; t < T; ++t) {
    int syms = 0;
    for (;;) {
      double b = src.blank_prob(ctx, t);
      std::vector<double> hat = src.hat_labels(ctx, t);
      double best_hat = hat[static_cast<size_t>(argmax_label(hat))];
      bool advance = std::log(b) >= std::log(1.0 - b) + best_hat ||
                     syms >= cfg.max_symbols_per_frame;
      if (trace) {
        trace->advanced.push_back(advance ? 1 : 0);
        trace->cell_t.push_back(t);
        trace->cell_u.push_back(static_cast<int>(out.size()));
        trace->blank_probs.push_back(b);
      }
      if (advance) break;
      std::vector<double> row = mode_label_row(src, cfg, ctx, t, hat);
      int v = argmax_label(row);
      if (v == kEosId) return out;
      out.push_back(v);
      ctx = src.extend(ctx, v);
      ++syms;
    }
  }
  return out;
}

namespace {

struct AlsdHyp {
  int ctx = 0;
  std::vector<int> prefix;
  double score = 0.0;
  int t = 0;
  int syms = 0;  // labels emitted since the last frame advance
  bool terminal = false;
};

// Exact merge: equal prefixes at the same alignment step share (t, u), so
// their futures coincide and probabilities add, provided they also agree on
// how many labels this frame has already emitted (the symbol cap makes the
// remaining expansion depend on that counter).
using AlsdKey = std::pair<std::vector<int>, int>;

void merge_child(std::map<AlsdKey, AlsdHyp>& children, AlsdHyp h) {
  if (!std::isfinite(h.score)) return;
  auto it = children.find({h.prefix, h.syms});
  if (it == children.end()) {
    children.emplace(AlsdKey{h.prefix, h.syms}, std::move(h));
    return;
  }
  it->second.score = log_sum_exp2(it->second.score, h.score);
}

std::vector<ScoredTranscript> ctc_prefix_beam(DecodeSource& src,
                                              const DecodeConfig& cfg) {
  int T = src.t_prime();
  int K = src.vocab();
  std::map<std::vector<int>, double> finals;
  if (T == 0) return {{0.0, {}}};

  // Two mass components per prefix: alignments ending in blank vs. ending in
  // the prefix's last label. Collapsing repeats needs the split.
  struct Ent {
    double pb = kNegInf, pnb = kNegInf;
  };
  std::map<std::vector<int>, Ent> cur;
  cur[{}] = Ent{0.0, kNegInf};
  for (int t = 0; t < T; ++t) {
    std::vector<double> row = src.ctc_row(t);
    std::map<std::vector<int>, Ent> nxt;
    auto acc = [&nxt](const std::vector<int>& p, bool nonblank, double s) {
      if (!std::isfinite(s)) return;
      Ent& e = nxt.try_emplace(p).first->second;
      double& slot = nonblank ? e.pnb : e.pb;
      slot = log_sum_exp2(slot, s);
    };
    for (const auto& [p, e] : cur) {
      double total = log_sum_exp2(e.pb, e.pnb);
      acc(p, false, total + row[0]);
      if (!p.empty()) acc(p, true, e.pnb + row[static_cast<size_t>(p.back()) + 1]);
      for (int v = 0; v < K; ++v) {
        double base = (!p.empty() && v == p.back()) ? e.pb : total;
        double s = base + row[static_cast<size_t>(v) + 1];
        if (v == kEosId) {
          pool_final(finals, p, s);
        } else {
          std::vector<int> np = p;
          np.push_back(v);
          acc(np, true, s);
        }
      }
    }
    std::vector<std::pair<std::vector<int>, Ent>> order(nxt.begin(), nxt.end());
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) {
                       double sa = log_sum_exp2(a.second.pb, a.second.pnb);
                       double sb = log_sum_exp2(b.second.pb, b.second.pnb);
                       if (sa != sb) return sa > sb;
                       return a.first < b.first;
                     });
    if (static_cast<int>(order.size()) > cfg.beam)
      order.resize(static_cast<size_t>(cfg.beam));
    cur.clear();
    for (auto& [p, e] : order) cur.emplace(std::move(p), e);
  }
  for (const auto& [p, e] : cur)
    pool_final(finals, p, log_sum_exp2(e.pb, e.pnb));
  return rank_finals(finals, cfg.beam);
}

}  // namespace

std::vector<ScoredTranscript> beam_frame_sync(DecodeSource& src,
                                              const DecodeConfig& cfg) {
  cfg.validate();
  require(cfg.mode != DecodeMode::kAedOffline,
          "beam_frame_sync: offline aed is label-synchronous");
  if (cfg.mode == DecodeMode::kCtc) return ctc_prefix_beam(src, cfg);

  int T = src.t_prime();
  int K = src.vocab();
  if (T == 0) return {{0.0, {}}};

  // Completed hypotheses stay in the beam as terminal entries and keep
  // competing for slots; only survivors reach the n-best list. This is what
  // makes beam = 1 degenerate to the greedy walk: the weak end-of-sequence
  // finalizations greedy never takes are pruned instead of pooled.
  std::vector<AlsdHyp> beam_set{AlsdHyp{src.start(), {}, 0.0, 0, 0, false}};
  int max_steps = T * (1 + cfg.max_symbols_per_frame) + 1;
  auto any_live = [](const std::vector<AlsdHyp>& bs) {
    for (const AlsdHyp& h : bs)
      if (!h.terminal) return true;
    return false;
  };
  for (int step = 0; step < max_steps && any_live(beam_set); ++step) {
    std::map<AlsdKey, AlsdHyp> children;
    std::map<std::vector<int>, double> done;
    auto finish = [&done](const std::vector<int>& p, double s) {
      if (!std::isfinite(s)) return;
      auto it = done.find(p);
      if (it == done.end())
        done.emplace(p, s);
      else
        it->second = log_sum_exp2(it->second, s);
    };
    for (AlsdHyp& h : beam_set) {
      if (h.terminal) {
        finish(h.prefix, h.score);
        continue;
      }
      double b = src.blank_prob(h.ctx, h.t);
      double lb = std::log(b);
      double lnb = std::log(1.0 - b);
      if (h.t == T - 1) {
        finish(h.prefix, h.score + lb);
      } else {
        AlsdHyp adv = h;
        adv.score += lb;
        adv.t += 1;
        adv.syms = 0;
        merge_child(children, std::move(adv));
      }
      if (h.syms >= cfg.max_symbols_per_frame) continue;
      std::vector<double> hat = src.hat_labels(h.ctx, h.t);
      std::vector<double> row = mode_label_row(src, cfg, h.ctx, h.t, hat);
      for (int v = 0; v < K; ++v) {
        double s = h.score + lnb + row[static_cast<size_t>(v)];
        if (v == kEosId) {
          finish(h.prefix, s);
          continue;
        }
        AlsdHyp ext;
        ext.ctx = src.extend(h.ctx, v);
        ext.prefix = h.prefix;
        ext.prefix.push_back(v);
        ext.score = s;
        ext.t = h.t;
        ext.syms = h.syms + 1;
        merge_child(children, std::move(ext));
      }
    }
    std::vector<AlsdHyp> next;
    next.reserve(children.size() + done.size());
    for (auto& [p, h] : children) next.push_back(std::move(h));
    for (auto& [p, s] : done) {
      AlsdHyp th;
      th.prefix = p;
      th.score = s;
      th.terminal = true;
      next.push_back(std::move(th));
    }
    // Ties: live before terminal, so a blank advance that exactly matches an
    // end-of-sequence score keeps exploring, as the greedy gate does.
    std::stable_sort(next.begin(), next.end(),
                     [](const AlsdHyp& a, const AlsdHyp& b) {
                       if (a.score != b.score) return a.score > b.score;
                       if (a.prefix != b.prefix) return a.prefix < b.prefix;
                       if (a.terminal != b.terminal) return a.terminal < b.terminal;
                       return a.syms < b.syms;
                     });
    if (static_cast<int>(next.size()) > cfg.beam)
      next.resize(static_cast<size_t>(cfg.beam));
    beam_set = std::move(next);
  }
  std::map<std::vector<int>, double> finals;
  for (const AlsdHyp& h : beam_set)
    if (h.terminal) pool_final(finals, h.prefix, h.score);
  return rank_finals(finals, cfg.beam);
}

std::vector<ScoredTranscript> beam_label_sync_aed(DecodeSource& src,
                                                  const DecodeConfig& cfg) {
  cfg.validate();
  int T = src.t_prime();
  int K = src.vocab();
  if (T == 0) return {{0.0, {}}};
  int cap = T * cfg.max_symbols_per_frame;

  struct LHyp {
    int ctx;
    std::vector<int> prefix;
    double score;
  };
  std::map<std::vector<int>, double> finals;
  std::vector<LHyp> cur{LHyp{src.start(), {}, 0.0}};
  while (!cur.empty()) {
    std::vector<LHyp> nxt;
    for (LHyp& h : cur) {
      std::vector<double> row = src.aed_labels(h.ctx, T);
      for (int v = 0; v < K; ++v) {
        double s = h.score + row[static_cast<size_t>(v)];
        if (v == kEosId) {
          pool_final(finals, h.prefix, s);
          continue;
        }
        if (!std::isfinite(s)) continue;
        std::vector<int> p = h.prefix;
        p.push_back(v);
        if (static_cast<int>(p.size()) >= cap) {
          pool_final(finals, p, s);
        } else {
          nxt.push_back(LHyp{src.extend(h.ctx, v), std::move(p), s});
        }
      }
    }
    std::stable_sort(nxt.begin(), nxt.end(),
                     [](const LHyp& a, const LHyp& b) {
                       if (a.score != b.score) return a.score > b.score;
                       return a.prefix < b.prefix;
                     });
    if (static_cast<int>(nxt.size()) > cfg.beam)
      nxt.resize(static_cast<size_t>(cfg.beam));
    cur = std::move(nxt);
  }
  return rank_finals(finals, cfg.beam);
}

}  // namespace aio
