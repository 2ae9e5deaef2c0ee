#include "aio/params.hpp"

#include <cmath>
#include <stdexcept>

namespace aio {

namespace {

void check(bool ok, const char* field) {
  if (!ok) {
    throw std::invalid_argument(std::string("model dims: invalid ") + field);
  }
}

Var weight(std::vector<int> dims, int fan_in, Rng& rng) {
  Tensor t(std::move(dims));
  double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return Var::leaf(std::move(t));
}

Var zeros(std::vector<int> dims) { return Var::leaf(Tensor(std::move(dims))); }

Var ones(std::vector<int> dims) {
  return Var::leaf(Tensor::full(std::move(dims), 1.0));
}

LayerNormP init_ln(int d) { return {ones({d}), zeros({d})}; }

FeedForwardP init_ff(int d, int expansion, Rng& rng) {
  int hidden = d * expansion;
  return {weight({hidden, d}, d, rng), zeros({hidden}),
          weight({d, hidden}, hidden, rng), zeros({d})};
}

}  // namespace

void ModelDims::validate() const {
  check(feat_dim >= 1, "feat_dim");
  check(stack >= 1, "stack");
  check(enc_dim >= 1, "enc_dim");
  check(enc_blocks >= 1, "enc_blocks");
  check(enc_heads >= 1 && enc_dim % enc_heads == 0, "enc_heads");
  check(ff_expansion >= 1, "ff_expansion");
  check(embed_dim >= 1, "embed_dim");
  check(pred_layers == 1 || pred_layers == 2, "pred_layers");
  check(pred_dim >= 1, "pred_dim");
  check(joiner_dim >= 1, "joiner_dim");
  check(joiner_heads >= 1 && joiner_dim % joiner_heads == 0, "joiner_heads");
  check(vocab >= 2, "vocab");
  check(ln_eps > 0.0, "ln_eps");
}

AioParams AioParams::init(const ModelDims& dims, uint64_t seed) {
  dims.validate();
  Rng rng(seed);
  AioParams p;
  p.dims = dims;

  int sf = dims.stack * dims.feat_dim;
  p.enc.in_w = weight({dims.enc_dim, sf}, sf, rng);
  p.enc.in_b = zeros({dims.enc_dim});
  p.enc.blocks.resize(static_cast<size_t>(dims.enc_blocks));
  for (auto& blk : p.enc.blocks) {
    blk.ln1 = init_ln(dims.enc_dim);
    int d = dims.enc_dim;
    blk.attn = {weight({d, d}, d, rng), zeros({d}), weight({d, d}, d, rng),
                zeros({d}), weight({d, d}, d, rng), zeros({d}),
                weight({d, d}, d, rng), zeros({d})};
    blk.ln2 = init_ln(d);
    blk.ff = init_ff(d, dims.ff_expansion, rng);
  }

  p.pred.embedding = weight({dims.vocab, dims.embed_dim}, dims.embed_dim, rng);
  p.pred.layers.resize(static_cast<size_t>(dims.pred_layers));
  for (size_t i = 0; i < p.pred.layers.size(); ++i) {
    int in = i == 0 ? dims.embed_dim : dims.pred_dim;
    int h = dims.pred_dim;
    auto& l = p.pred.layers[i];
    l.wz = weight({h, in}, in, rng);
    l.uz = weight({h, h}, h, rng);
    l.bz = zeros({h});
    l.wr = weight({h, in}, in, rng);
    l.ur = weight({h, h}, h, rng);
    l.br = zeros({h});
    l.wn = weight({h, in}, in, rng);
    l.un = weight({h, h}, h, rng);
    l.bn = zeros({h});
    l.cn = zeros({h});
  }

  int D = dims.joiner_dim;
  p.joiner.w_enc = weight({D, dims.enc_dim}, dims.enc_dim, rng);
  p.joiner.b_enc = zeros({D});
  p.joiner.w_pred = weight({D, dims.pred_dim}, dims.pred_dim, rng);
  p.joiner.b_pred = zeros({D});
  p.joiner.ln_q = init_ln(D);
  p.joiner.ln_kv = init_ln(D);
  p.joiner.w_query = weight({D, D}, D, rng);
  p.joiner.w_key = weight({D, D}, D, rng);
  p.joiner.w_value = weight({D, D}, D, rng);
  p.joiner.w_proj = weight({D, D}, D, rng);
  p.joiner.w_blank = weight({1, D}, D, rng);
  p.joiner.b_blank = zeros({1});
  p.joiner.ff = init_ff(D, dims.ff_expansion, rng);
  p.joiner.ln_ff = init_ln(D);
  p.joiner.w_label = weight({dims.vocab, D}, D, rng);
  p.joiner.b_label = zeros({dims.vocab});
  return p;
}

namespace {

using VisitFn = std::function<void(const std::string&, const Var&)>;

void visit_ln(const std::string& prefix, const LayerNormP& ln, const VisitFn& fn) {
  fn(prefix + ".gain", ln.gain);
  fn(prefix + ".bias", ln.bias);
}

void visit_ff(const std::string& prefix, const FeedForwardP& ff, const VisitFn& fn) {
  fn(prefix + ".w1", ff.w1);
  fn(prefix + ".b1", ff.b1);
  fn(prefix + ".w2", ff.w2);
  fn(prefix + ".b2", ff.b2);
}

void visit_pred(const std::string& prefix, const PredictorP& pred, const VisitFn& fn) {
  fn(prefix + ".embedding", pred.embedding);
  for (size_t i = 0; i < pred.layers.size(); ++i) {
    const auto& l = pred.layers[i];
    std::string lp = prefix + ".layer" + std::to_string(i);
    fn(lp + ".wz", l.wz);
    fn(lp + ".uz", l.uz);
    fn(lp + ".bz", l.bz);
    fn(lp + ".wr", l.wr);
    fn(lp + ".ur", l.ur);
    fn(lp + ".br", l.br);
    fn(lp + ".wn", l.wn);
    fn(lp + ".un", l.un);
    fn(lp + ".bn", l.bn);
    fn(lp + ".cn", l.cn);
  }
}

}  // namespace

void AioParams::visit(const VisitFn& fn) const {
  fn("enc.in_proj.w", enc.in_w);
  fn("enc.in_proj.b", enc.in_b);
  for (size_t i = 0; i < enc.blocks.size(); ++i) {
    const auto& blk = enc.blocks[i];
    std::string bp = "enc.block" + std::to_string(i);
    visit_ln(bp + ".ln1", blk.ln1, fn);
    fn(bp + ".attn.wq", blk.attn.wq);
    fn(bp + ".attn.bq", blk.attn.bq);
    fn(bp + ".attn.wk", blk.attn.wk);
    fn(bp + ".attn.bk", blk.attn.bk);
    fn(bp + ".attn.wv", blk.attn.wv);
    fn(bp + ".attn.bv", blk.attn.bv);
    fn(bp + ".attn.wo", blk.attn.wo);
    fn(bp + ".attn.bo", blk.attn.bo);
    visit_ln(bp + ".ln2", blk.ln2, fn);
    visit_ff(bp + ".ff", blk.ff, fn);
  }
  visit_pred("pred", pred, fn);
  fn("joiner.w_enc", joiner.w_enc);
  fn("joiner.b_enc", joiner.b_enc);
  fn("joiner.w_pred", joiner.w_pred);
  fn("joiner.b_pred", joiner.b_pred);
  visit_ln("joiner.ln_q", joiner.ln_q, fn);
  visit_ln("joiner.ln_kv", joiner.ln_kv, fn);
  fn("joiner.w_query", joiner.w_query);
  fn("joiner.w_key", joiner.w_key);
  fn("joiner.w_value", joiner.w_value);
  fn("joiner.w_proj", joiner.w_proj);
  fn("joiner.w_blank", joiner.w_blank);
  fn("joiner.b_blank", joiner.b_blank);
  visit_ff("joiner.ff", joiner.ff, fn);
  visit_ln("joiner.ln_ff", joiner.ln_ff, fn);
  fn("joiner.w_label", joiner.w_label);
  fn("joiner.b_label", joiner.b_label);
}

std::vector<Var> AioParams::all() const {
  std::vector<Var> out;
  visit([&](const std::string&, const Var& v) { out.push_back(v); });
  return out;
}

ExtLmParams ExtLmParams::init(const ModelDims& dims, uint64_t seed) {
  dims.validate();
  Rng rng(seed ^ 0x7c0ffee5deadbeefULL);
  ExtLmParams p;
  p.dims = dims;
  p.pred.embedding = weight({dims.vocab, dims.embed_dim}, dims.embed_dim, rng);
  p.pred.layers.resize(static_cast<size_t>(dims.pred_layers));
  for (size_t i = 0; i < p.pred.layers.size(); ++i) {
    int in = i == 0 ? dims.embed_dim : dims.pred_dim;
    int h = dims.pred_dim;
    auto& l = p.pred.layers[i];
    l.wz = weight({h, in}, in, rng);
    l.uz = weight({h, h}, h, rng);
    l.bz = zeros({h});
    l.wr = weight({h, in}, in, rng);
    l.ur = weight({h, h}, h, rng);
    l.br = zeros({h});
    l.wn = weight({h, in}, in, rng);
    l.un = weight({h, h}, h, rng);
    l.bn = zeros({h});
    l.cn = zeros({h});
  }
  int D = dims.joiner_dim;
  p.w_pred = weight({D, dims.pred_dim}, dims.pred_dim, rng);
  p.b_pred = zeros({D});
  p.ff = init_ff(D, dims.ff_expansion, rng);
  p.ln_ff = init_ln(D);
  p.w_label = weight({dims.vocab, D}, D, rng);
  p.b_label = zeros({dims.vocab});
  return p;
}

void ExtLmParams::visit(const VisitFn& fn) const {
  visit_pred("extlm.pred", pred, fn);
  fn("extlm.w_pred", w_pred);
  fn("extlm.b_pred", b_pred);
  visit_ff("extlm.ff", ff, fn);
  visit_ln("extlm.ln_ff", ln_ff, fn);
  fn("extlm.w_label", w_label);
  fn("extlm.b_label", b_label);
}

std::vector<Var> ExtLmParams::all() const {
  std::vector<Var> out;
  visit([&](const std::string&, const Var& v) { out.push_back(v); });
  return out;
}

}  // namespace aio
