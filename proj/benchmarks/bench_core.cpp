// Microbenchmarks for the hot paths: encoding, joiner cell readout, lattice
// losses with backprop, beam decoding, and one full training step.
#include <benchmark/benchmark.h>

#include <vector>

#include "aio/autodiff.hpp"
#include "aio/decode.hpp"
#include "aio/encoder.hpp"
#include "aio/joiner.hpp"
#include "aio/losses.hpp"
#include "aio/params.hpp"
#include "aio/rng.hpp"
#include "aio/train.hpp"

using namespace aio;

namespace {

ModelDims desk_dims() {
  ModelDims d;
  d.feat_dim = 8;
  d.stack = 2;
  d.enc_dim = 64;
  d.enc_blocks = 2;
  d.enc_heads = 4;
  d.ff_expansion = 2;
  d.embed_dim = 32;
  d.pred_layers = 1;
  d.pred_dim = 64;
  d.joiner_dim = 64;
  d.joiner_heads = 4;
  d.vocab = 6;
  return d;
}

Tensor random_features(int t, int feat, uint64_t seed) {
  Rng rng(seed);
  Tensor X = Tensor::zeros({t, feat});
  for (int64_t i = 0; i < X.numel(); ++i) X[i] = rng.normal();
  return X;
}

std::vector<int> random_transcript(int u, int vocab, uint64_t seed) {
  Rng rng(seed);
  std::vector<int> y(static_cast<size_t>(u));
  for (int& v : y) v = rng.uniform_int(1, vocab - 1);
  return y;
}

void bench_encode_offline(benchmark::State& state) {
  AioParams p = AioParams::init(desk_dims(), 1);
  Tensor X = random_features(static_cast<int>(state.range(0)), 8, 2);
  for (auto _ : state) {
    Tensor h = encode_offline(X, p);
    benchmark::DoNotOptimize(h.data());
  }
}
BENCHMARK(bench_encode_offline)->Arg(32)->Arg(64)->Arg(128);

void bench_joiner_cells(benchmark::State& state) {
  AioParams p = AioParams::init(desk_dims(), 1);
  Tensor X = random_features(64, 8, 2);
  Tensor h_enc = encode_offline(X, p);
  EncProjection e = project_encoder(h_enc, p.joiner, p.dims);
  auto [row, st] = predict(kStartSymbol, predictor_start(p.pred, p.dims),
                           p.pred, p.dims);
  PredProjection pu = project_predictor(row, p.joiner, p.dims);
  int t_prime = h_enc.dim(0);
  for (auto _ : state) {
    double acc = 0.0;
    for (int t = 0; t < t_prime; ++t)
      acc += hat_out(e, t, pu, p.joiner, p.dims).blank;
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * t_prime);
}
BENCHMARK(bench_joiner_cells);

void bench_transducer_loss_backward(benchmark::State& state) {
  AioParams p = AioParams::init(desk_dims(), 1);
  Tensor X = random_features(32, 8, 2);
  std::vector<int> y = random_transcript(8, 6, 3);
  std::vector<Var> leaves = p.all();
  for (auto _ : state) {
    zero_grad(leaves);
    Var h_enc = encode_offline_graph(X, p);
    Var h_pred = predictor_rows_graph(y, p.pred, p.dims);
    Var lattice = hat_lattice_graph(h_enc, h_pred, p.joiner, p.dims);
    Var loss = transducer_loss(lattice, h_enc.value().dim(0), y);
    backward(loss);
    benchmark::DoNotOptimize(loss.scalar());
  }
}
BENCHMARK(bench_transducer_loss_backward);

void bench_ctc_loss_backward(benchmark::State& state) {
  AioParams p = AioParams::init(desk_dims(), 1);
  Tensor X = random_features(32, 8, 2);
  std::vector<int> y = random_transcript(6, 6, 3);
  std::vector<Var> leaves = p.all();
  for (auto _ : state) {
    zero_grad(leaves);
    Var h_enc = encode_offline_graph(X, p);
    Var rows = ctc_rows_graph(h_enc, p.joiner, p.dims);
    Var loss = ctc_loss(rows, y);
    backward(loss);
    benchmark::DoNotOptimize(loss.scalar());
  }
}
BENCHMARK(bench_ctc_loss_backward);

void bench_beam_decode(benchmark::State& state) {
  AioParams p = AioParams::init(desk_dims(), 1);
  Tensor X = random_features(48, 8, 2);
  DecodeConfig cfg;
  cfg.mode = DecodeMode::kHat;
  cfg.beam = static_cast<int>(state.range(0));
  for (auto _ : state) {
    ModelSource src(p, X, cfg);
    auto nbest = beam_frame_sync(src, cfg);
    benchmark::DoNotOptimize(nbest.size());
  }
}
BENCHMARK(bench_beam_decode)->Arg(1)->Arg(4)->Arg(8);

void bench_training_step(benchmark::State& state) {
  AioParams p = AioParams::init(desk_dims(), 1);
  Tensor X = random_features(32, 8, 2);
  std::vector<int> y = random_transcript(6, 6, 3);
  TrainConfig cfg;
  cfg.warmup_steps = 1000000;  // keep updates tiny so the model stays put
  cfg.learning_rate = 1e-4;
  std::vector<Var> leaves = p.all();
  AdamState st;
  for (auto _ : state) {
    zero_grad(leaves);
    JointLoss jl = forward_all_modes(p, X, y, cfg.chunk, cfg.lambda_lm, true);
    backward(jl.total);
    optimizer_step(leaves, st, cfg);
    benchmark::DoNotOptimize(jl.parts[0]);
  }
}
BENCHMARK(bench_training_step);

}  // namespace

BENCHMARK_MAIN();
