// Command-line front end: corpus generation, joint training, external LM
// training, decoding with TER reports, and attention diagnostics.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aio/checkpoint.hpp"
#include "aio/config.hpp"
#include "aio/corpus.hpp"
#include "aio/decode.hpp"
#include "aio/joiner.hpp"
#include "aio/train.hpp"

namespace fs = std::filesystem;
using namespace aio;

namespace {

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) {
    RunConfig rc = parse_run_config_text("");
    apply_env_seed_override(rc);
    return rc;
  }
  return parse_run_config_file(path);
}

std::string join_tokens(const std::vector<int>& tokens) {
  std::string s;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(tokens[i]);
  }
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f.good())
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f.good()) throw std::runtime_error("write failed: " + path.string());
}

std::string fmt(const char* spec, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
  std::string config, out;
};

int cmd_gen(const GenArgs& a) {
  RunConfig rc = load_run_config(a.config);
  Corpus corpus = generate(rc.corpus);
  save_split((fs::path(a.out) / "train").string(), corpus.train);
  save_split((fs::path(a.out) / "dev").string(), corpus.dev);
  save_split((fs::path(a.out) / "test").string(), corpus.test);
  std::printf("wrote %zu train / %zu dev / %zu test utterances to %s\n",
              corpus.train.size(), corpus.dev.size(), corpus.test.size(),
              a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config, corpus, out_ckpt, init_ckpt, loss_csv;
  int ckpt_every = 0;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc = load_run_config(a.config);
  AioParams p = a.init_ckpt.empty()
                    ? AioParams::init(rc.model, rc.train.seed)
                    : load_checkpoint(a.init_ckpt);
  if (p.dims.feat_dim != rc.corpus.feat_dim)
    throw std::invalid_argument(
        "train: model feat_dim " + std::to_string(p.dims.feat_dim) +
        " does not match corpus feat_dim " +
        std::to_string(rc.corpus.feat_dim));
  if (p.dims.vocab != rc.corpus.vocab)
    throw std::invalid_argument(
        "train: model vocab " + std::to_string(p.dims.vocab) +
        " does not match corpus vocab " + std::to_string(rc.corpus.vocab));
  std::vector<Utterance> data =
      load_split((fs::path(a.corpus) / "train").string(), p.dims.feat_dim);

  std::ofstream csv;
  if (!a.loss_csv.empty()) {
    csv.open(a.loss_csv, std::ios::binary);
    if (!csv.good())
      throw std::runtime_error("cannot open loss CSV " + a.loss_csv);
  }
  auto epoch_end = [&](int epoch) {
    if (a.ckpt_every > 0 && epoch % a.ckpt_every == 0)
      save_checkpoint(p, a.out_ckpt + ".epoch" + std::to_string(epoch));
  };
  TrainResult r = train(p, data, rc.train, csv.is_open() ? &csv : nullptr,
                        &std::cerr, epoch_end);
  save_checkpoint(p, a.out_ckpt);
  double final_loss = r.log.empty() ? 0.0 : r.log.back().total;
  std::printf(
      "trained %d epochs (%zu steps, %d skipped utterances), final loss %s\n",
      rc.train.epochs, r.log.size(), r.skipped_utterances,
      fmt("%.6g", final_loss).c_str());
  std::printf("checkpoint written to %s\n", a.out_ckpt.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train-extlm

struct TrainExtLmArgs {
  std::string config, corpus, out_ckpt, loss_csv;
};

int cmd_train_extlm(const TrainExtLmArgs& a) {
  RunConfig rc = load_run_config(a.config);
  if (rc.model.vocab != rc.corpus.vocab)
    throw std::invalid_argument(
        "train-extlm: model vocab " + std::to_string(rc.model.vocab) +
        " does not match corpus vocab " + std::to_string(rc.corpus.vocab));
  ExtLmParams lm = ExtLmParams::init(rc.model, rc.train.seed);
  std::vector<Utterance> data =
      load_split((fs::path(a.corpus) / "train").string(), rc.corpus.feat_dim);
  std::vector<Utterance> dev =
      load_split((fs::path(a.corpus) / "dev").string(), rc.corpus.feat_dim);

  std::ofstream csv;
  if (!a.loss_csv.empty()) {
    csv.open(a.loss_csv, std::ios::binary);
    if (!csv.good())
      throw std::runtime_error("cannot open loss CSV " + a.loss_csv);
  }
  auto epoch_end = [&](int epoch) {
    std::printf("epoch %d dev perplexity %s\n", epoch,
                fmt("%.6g", extlm_perplexity(lm, dev)).c_str());
  };
  TrainResult r = train_extlm(lm, data, rc.train,
                              csv.is_open() ? &csv : nullptr, &std::cerr,
                              epoch_end);
  save_extlm_checkpoint(lm, a.out_ckpt);
  std::printf("trained %zu steps; checkpoint written to %s\n", r.log.size(),
              a.out_ckpt.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// decode

struct DecodeArgs {
  std::string ckpt, split, out, extlm_ckpt;
  std::string mode = "hat";
  int beam = 8;
  double mu_hat = 1.0;
  double rho_extlm = 0.0;
  double rho_ilm = 0.0;
  int max_symbols = 5;
  bool streaming = false;
  int chunk_len = 8;
  int history_chunks = 1;
};

int cmd_decode(const DecodeArgs& a) {
  DecodeConfig cfg;
  cfg.mode = parse_decode_mode(a.mode);
  cfg.beam = a.beam;
  cfg.mu_hat = a.mu_hat;
  cfg.rho_extlm = a.rho_extlm;
  cfg.rho_ilm = a.rho_ilm;
  cfg.max_symbols_per_frame = a.max_symbols;
  cfg.streaming = a.streaming;
  cfg.chunk.chunk_len = a.chunk_len;
  cfg.chunk.history_chunks = a.history_chunks;
  if (cfg.rho_extlm > 0.0 && a.extlm_ckpt.empty())
    throw std::invalid_argument(
        "decode: --rho-extlm > 0 requires --extlm-ckpt");
  cfg.validate();

  AioParams p = load_checkpoint(a.ckpt);
  std::optional<ExtLmParams> extlm;
  if (!a.extlm_ckpt.empty()) extlm = load_extlm_checkpoint(a.extlm_ckpt);
  std::vector<Utterance> data = load_split(a.split, p.dims.feat_dim);
  fs::create_directories(a.out);

  int64_t total_edits = 0, total_ref = 0;
  std::string ter_text;
  for (size_t id = 0; id < data.size(); ++id) {
    const Utterance& utt = data[id];
    ModelSource src(p, utt.features, cfg, extlm ? &*extlm : nullptr);
    std::vector<ScoredTranscript> nbest =
        cfg.mode == DecodeMode::kAedOffline ? beam_label_sync_aed(src, cfg)
                                            : beam_frame_sync(src, cfg);
    std::string lines;
    for (const ScoredTranscript& h : nbest) {
      lines += fmt("%.12g", h.log_score);
      lines += '\t';
      lines += join_tokens(h.tokens);
      lines += '\n';
    }
    write_text(fs::path(a.out) / ("nbest_" + std::to_string(id) + ".tsv"),
               lines);
    const std::vector<int> hyp =
        nbest.empty() ? std::vector<int>{} : nbest.front().tokens;
    int edits = edit_distance(hyp, utt.transcript);
    total_edits += edits;
    total_ref += static_cast<int64_t>(utt.transcript.size());
    ter_text += std::to_string(id) + '\t' +
                fmt("%.6g", token_error_rate(hyp, utt.transcript)) + '\n';
  }
  double corpus_ter =
      static_cast<double>(total_edits) /
      static_cast<double>(std::max<int64_t>(int64_t{1}, total_ref));
  ter_text += "corpus\t" + fmt("%.6g", corpus_ter) + '\n';
  write_text(fs::path(a.out) / "ter.tsv", ter_text);
  std::printf(
      "corpus TER %s (%lld edits / %lld reference tokens, %zu utterances)\n",
      fmt("%.6g", corpus_ter).c_str(), static_cast<long long>(total_edits),
      static_cast<long long>(total_ref), data.size());
  return 0;
}

// ---------------------------------------------------------------------------
// dump-attention

struct DumpArgs {
  std::string ckpt, split, out;
  int utt_id = -1;
  bool streaming = false;
  int chunk_len = 8;
  int history_chunks = 1;
};

int cmd_dump_attention(const DumpArgs& a) {
  AioParams p = load_checkpoint(a.ckpt);
  std::vector<Utterance> data = load_split(a.split, p.dims.feat_dim);
  if (a.utt_id < 0 || a.utt_id >= static_cast<int>(data.size()))
    throw std::invalid_argument("dump-attention: unknown utterance id " +
                                std::to_string(a.utt_id));
  const Utterance& utt = data[static_cast<size_t>(a.utt_id)];

  DecodeConfig cfg;
  cfg.mode = DecodeMode::kHat;
  cfg.beam = 1;
  cfg.streaming = a.streaming;
  cfg.chunk.chunk_len = a.chunk_len;
  cfg.chunk.history_chunks = a.history_chunks;
  cfg.validate();

  ModelSource src(p, utt.features, cfg);
  GreedyTrace trace;
  std::vector<int> tokens = greedy_frame_sync(src, cfg, &trace);
  int t_prime = src.t_prime();

  // Prefix handles along the greedy path: handle[u] serves cells at depth u.
  std::vector<int> handle(tokens.size() + 1);
  handle[0] = src.start();
  for (size_t u = 0; u < tokens.size(); ++u)
    handle[u + 1] = src.extend(handle[u], tokens[u]);

  // Per frame, the first visited cell: at an emitting frame that is the first
  // emission (where the non-blank mass and the matched query live), at a
  // blank-only frame it is the advance cell. Frames never reached (the walk
  // stops on EOS) hold the final context.
  std::vector<int> frame_u(static_cast<size_t>(t_prime),
                           static_cast<int>(tokens.size()));
  std::vector<double> frame_blank(static_cast<size_t>(t_prime), -1.0);
  for (size_t i = 0; i < trace.cell_t.size(); ++i) {
    size_t t = static_cast<size_t>(trace.cell_t[i]);
    if (frame_blank[t] >= 0.0) continue;
    frame_u[t] = trace.cell_u[i];
    frame_blank[t] = trace.blank_probs[i];
  }
  for (int t = 0; t < t_prime; ++t)
    if (frame_blank[static_cast<size_t>(t)] < 0.0)
      frame_blank[static_cast<size_t>(t)] =
          src.blank_prob(handle[tokens.size()], t);

  fs::create_directories(a.out);
  std::string tag = std::to_string(a.utt_id);

  std::string nonblank_csv = "t,nonblank\n";
  std::string sigmoid_csv = "t,weight\n";
  for (int t = 0; t < t_prime; ++t) {
    size_t u = static_cast<size_t>(frame_u[static_cast<size_t>(t)]);
    nonblank_csv += std::to_string(t) + ',' +
                    fmt("%.12g", 1.0 - frame_blank[static_cast<size_t>(t)]) +
                    '\n';
    std::vector<double> w = sigmoid_attention_weights(
        src.enc(), t, src.pred_projection(handle[u]), p.joiner, p.dims);
    double mean = 0.0;
    for (double x : w) mean += x;
    mean /= static_cast<double>(w.size());
    sigmoid_csv += std::to_string(t) + ',' + fmt("%.12g", mean) + '\n';
  }

  // One attention row per emitted token: the full-sequence softmax attention
  // the label at position u was read with (mean over heads; rows sum to 1).
  std::string aed_csv = "u,label";
  for (int t = 0; t < t_prime; ++t) aed_csv += ",w" + std::to_string(t);
  aed_csv += '\n';
  std::vector<uint8_t> all_frames(static_cast<size_t>(t_prime), 1);
  for (size_t u = 0; u < tokens.size(); ++u) {
    Tensor w = softmax_attention_weights(
        src.enc(), all_frames, src.pred_projection(handle[u]), p.joiner,
        p.dims);
    aed_csv += std::to_string(u) + ',' + std::to_string(tokens[u]);
    for (int t = 0; t < t_prime; ++t) {
      double mean = 0.0;
      for (int h = 0; h < w.dim(0); ++h) mean += w(h, t);
      mean /= static_cast<double>(w.dim(0));
      aed_csv += ',' + fmt("%.12g", mean);
    }
    aed_csv += '\n';
  }

  write_text(fs::path(a.out) / ("nonblank_" + tag + ".csv"), nonblank_csv);
  write_text(fs::path(a.out) / ("sigmoid_attention_" + tag + ".csv"),
             sigmoid_csv);
  write_text(fs::path(a.out) / ("aed_attention_" + tag + ".csv"), aed_csv);
  std::printf("wrote %d framewise rows and %zu label rows to %s\n", t_prime,
              tokens.size(), a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"all-in-one speech recognizer: one parameter set, five ways to decode"};
  app.require_subcommand(1);

  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  gen->add_option("--config", gen_args.config, "run configuration file");
  gen->add_option("--out", gen_args.out, "output corpus directory")
      ->required();

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train the joint model");
  train->add_option("--config", train_args.config, "run configuration file");
  train->add_option("--corpus", train_args.corpus, "corpus directory")
      ->required();
  train->add_option("--out-ckpt", train_args.out_ckpt, "output checkpoint")
      ->required();
  train->add_option("--init-ckpt", train_args.init_ckpt,
                    "resume from this checkpoint (its architecture wins)");
  train->add_option("--loss-csv", train_args.loss_csv, "per-step loss CSV");
  train->add_option("--ckpt-every", train_args.ckpt_every,
                    "also checkpoint every N epochs");

  TrainExtLmArgs extlm_args;
  CLI::App* textlm =
      app.add_subcommand("train-extlm", "train the external language model");
  textlm->add_option("--config", extlm_args.config, "run configuration file");
  textlm->add_option("--corpus", extlm_args.corpus, "corpus directory")
      ->required();
  textlm->add_option("--out-ckpt", extlm_args.out_ckpt, "output checkpoint")
      ->required();
  textlm->add_option("--loss-csv", extlm_args.loss_csv, "per-step loss CSV");

  DecodeArgs dec_args;
  CLI::App* dec = app.add_subcommand("decode", "decode a corpus split");
  dec->add_option("--ckpt", dec_args.ckpt, "model checkpoint")->required();
  dec->add_option("--corpus-split", dec_args.split,
                  "split directory (e.g. corpus/test)")
      ->required();
  dec->add_option("--out", dec_args.out, "output directory")->required();
  dec->add_option("--mode", dec_args.mode,
                  "hat | ctc | aed | aed-stream | joint");
  dec->add_option("--beam", dec_args.beam, "beam width");
  dec->add_option("--mu-hat", dec_args.mu_hat,
                  "transducer weight in joint label fusion");
  dec->add_option("--rho-extlm", dec_args.rho_extlm,
                  "external LM weight in joint label fusion");
  dec->add_option("--rho-ilm", dec_args.rho_ilm,
                  "internal LM subtraction weight");
  dec->add_option("--extlm-ckpt", dec_args.extlm_ckpt,
                  "external LM checkpoint");
  dec->add_option("--max-symbols", dec_args.max_symbols,
                  "emission cap per frame");
  dec->add_flag("--streaming", dec_args.streaming, "chunked encoding");
  dec->add_option("--chunk-len", dec_args.chunk_len,
                  "streaming chunk length (post-subsampling frames)");
  dec->add_option("--history-chunks", dec_args.history_chunks,
                  "streaming attention history");

  DumpArgs dump_args;
  CLI::App* dump = app.add_subcommand(
      "dump-attention", "dump greedy-path attention diagnostics");
  dump->add_option("--ckpt", dump_args.ckpt, "model checkpoint")->required();
  dump->add_option("--corpus-split", dump_args.split, "split directory")
      ->required();
  dump->add_option("--utt-id", dump_args.utt_id, "utterance id")->required();
  dump->add_option("--out", dump_args.out, "output directory")->required();
  dump->add_flag("--streaming", dump_args.streaming, "chunked encoding");
  dump->add_option("--chunk-len", dump_args.chunk_len,
                   "streaming chunk length (post-subsampling frames)");
  dump->add_option("--history-chunks", dump_args.history_chunks,
                   "streaming attention history");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_args);
    if (train->parsed()) return cmd_train(train_args);
    if (textlm->parsed()) return cmd_train_extlm(extlm_args);
    if (dec->parsed()) return cmd_decode(dec_args);
    if (dump->parsed()) return cmd_dump_attention(dump_args);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
