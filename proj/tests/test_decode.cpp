#include <cmath>
#include <limits>
#include <vector>

#include "aio/decode.hpp"
#include "aio/joiner.hpp"
#include "aio/params.hpp"
#include "aio/predictor.hpp"
#include "aio/rng.hpp"
#include "decode_oracles.hpp"
#include "doctest.h"

using namespace aio;

namespace {

// Factored hat table: per (t, u) a blank in [0.15, 0.85] and labels filling
// the rest of the mass. eos_share caps the EOS slice of the label mass so
// tests can keep walks from terminating early.
Tensor random_hat_table(int t_prime, int u_depth, int k, Rng& rng,
                        double eos_share = -1.0) {
  Tensor h = Tensor::zeros({t_prime, u_depth, k + 1});
  for (int t = 0; t < t_prime; ++t)
    for (int u = 0; u < u_depth; ++u) {
      double blank = 0.15 + 0.7 * rng.uniform();
      h(t, u, 0) = blank;
      std::vector<double> w(static_cast<size_t>(k));
      double sum = 0.0;
      for (double& x : w) sum += (x = 0.05 + rng.uniform());
      if (eos_share >= 0.0) {
        sum -= w[0];
        w[0] = eos_share * sum / (1.0 - eos_share);
        sum += w[0];
      }
      for (int v = 0; v < k; ++v)
        h(t, u, v + 1) = (1.0 - blank) * w[static_cast<size_t>(v)] / sum;
    }
  return h;
}

// Concentrates each row's mass on its few largest entries, the shape trained
// models produce. Beam-width monotonicity of the top hypothesis is a property
// of such concentrated tables; on near-uniform tables a wider beam can rerank
// a narrow beam's surviving chain out mid-utterance and lose its later mass.
Tensor sharpen_rows(Tensor m, double power) {
  int rows = m.dim(0), cols = m.dim(1);
  for (int r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) sum += (m(r, c) = std::pow(m(r, c), power));
    for (int c = 0; c < cols; ++c) m(r, c) /= sum;
  }
  return m;
}

Tensor random_rows(int rows, int cols, Rng& rng, double col0_share = -1.0) {
  Tensor m = Tensor::zeros({rows, cols});
  for (int r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) sum += (m(r, c) = 0.05 + rng.uniform());
    if (col0_share >= 0.0) {
      sum -= m(r, 0);
      m(r, 0) = col0_share * sum / (1.0 - col0_share);
      sum += m(r, 0);
    }
    for (int c = 0; c < cols; ++c) m(r, c) /= sum;
  }
  return m;
}

FrozenSource random_source(int t_prime, int u_depth, int k, Rng& rng,
                           bool with_extlm = false) {
  return FrozenSource(random_hat_table(t_prime, u_depth, k, rng),
                      random_rows(t_prime, k + 1, rng),
                      random_rows(u_depth, k, rng),
                      random_rows(u_depth, k, rng),
                      with_extlm ? random_rows(u_depth, k, rng) : Tensor());
}

// Equal up to exact-tie ordering: the ranked score profiles must match, and
// both lists must hold the same transcript-to-score mapping. Transcripts of
// mathematically equal score may legally swap positions, because the two
// sides accumulate the shared value in different summation orders.
bool same_nbest(std::vector<ScoredTranscript> a, std::vector<ScoredTranscript> b,
                double tol) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i].log_score - b[i].log_score) > tol) return false;
  auto by_tokens = [](const ScoredTranscript& x, const ScoredTranscript& y) {
    return x.tokens < y.tokens;
  };
  std::sort(a.begin(), a.end(), by_tokens);
  std::sort(b.begin(), b.end(), by_tokens);
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].tokens != b[i].tokens) return false;
    if (std::abs(a[i].log_score - b[i].log_score) > tol) return false;
  }
  return true;
}

ModelDims tiny_dims() {
  ModelDims d;
  d.feat_dim = 3;
  d.stack = 2;
  d.enc_dim = 8;
  d.enc_blocks = 1;
  d.enc_heads = 2;
  d.ff_expansion = 2;
  d.embed_dim = 4;
  d.pred_layers = 1;
  d.pred_dim = 8;
  d.joiner_dim = 8;
  d.joiner_heads = 2;
  d.vocab = 4;
  return d;
}

Tensor random_features(int frames, int feat_dim, Rng& rng) {
  Tensor X = Tensor::zeros({frames, feat_dim});
  for (int64_t i = 0; i < X.numel(); ++i) X[i] = rng.normal();
  return X;
}

}  // namespace

TEST_CASE("decode config validation") {
  DecodeConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.beam = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.beam = 8;
  cfg.mu_hat = 1.2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.mu_hat = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.mu_hat = 0.5;
  cfg.rho_extlm = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.rho_extlm = 0.0;
  cfg.max_symbols_per_frame = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("label fusion") {
  std::vector<double> hat = {-0.3, -1.7, -2.2};
  std::vector<double> lm = {-0.9, -1.2, -1.3};

  SUBCASE("mu_hat one with zero rho is the hat row bit for bit") {
    DecodeConfig cfg;
    cfg.mu_hat = 1.0;
    std::vector<double> fused = fuse_label_scores(hat, {}, {}, {}, cfg);
    for (size_t i = 0; i < hat.size(); ++i) CHECK(fused[i] == hat[i]);
  }
  SUBCASE("identical inputs stay fixed under convex mixing") {
    DecodeConfig cfg;
    cfg.mu_hat = 0.37;
    std::vector<double> fused = fuse_label_scores(hat, hat, {}, {}, cfg);
    for (size_t i = 0; i < hat.size(); ++i)
      CHECK(fused[i] == doctest::Approx(hat[i]).epsilon(1e-12));
  }
  SUBCASE("equal-weight identical lm terms cancel") {
    DecodeConfig cfg;
    cfg.mu_hat = 1.0;
    cfg.rho_extlm = 0.7;
    cfg.rho_ilm = 0.7;
    std::vector<double> fused = fuse_label_scores(hat, {}, lm, lm, cfg);
    for (size_t i = 0; i < hat.size(); ++i)
      CHECK(fused[i] == doctest::Approx(hat[i]).epsilon(1e-12));
  }
  SUBCASE("weighted sources must be present") {
    DecodeConfig cfg;
    cfg.mu_hat = 0.5;
    CHECK_THROWS_AS(fuse_label_scores(hat, {}, {}, {}, cfg),
                    std::invalid_argument);
    cfg.mu_hat = 1.0;
    cfg.rho_extlm = 0.3;
    CHECK_THROWS_AS(fuse_label_scores(hat, {}, {}, lm, cfg),
                    std::invalid_argument);
  }
}

TEST_CASE("frozen source bookkeeping") {
  Rng rng(5);
  FrozenSource src = random_source(2, 3, 3, rng);
  int root = src.start();
  CHECK(root == 0);
  int a = src.extend(root, 1);
  CHECK(src.extend(root, 1) == a);
  int b = src.extend(root, 2);
  CHECK(b != a);
  CHECK(src.contexts() == 3);
  CHECK(src.prefix(a) == std::vector<int>{1});

  std::vector<double> labels = src.hat_labels(root, 0);
  double sum = 0.0;
  for (double l : labels) sum += std::exp(l);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("greedy frame-synchronous walks") {
  // Cell layout: index 0 blank, index 1 EOS, index 2 the only real label.
  auto cell = [](Tensor& hat, int t, int u, double blank, double eos,
                 double lab) {
    hat(t, u, 0) = blank;
    hat(t, u, 1) = eos;
    hat(t, u, 2) = lab;
  };

  SUBCASE("dominant blank everywhere yields the empty transcript") {
    Rng rng(7);
    Tensor hat = random_hat_table(4, 3, 3, rng);
    for (int t = 0; t < 4; ++t)
      for (int u = 0; u < 3; ++u) {
        double scale = 0.3 / (1.0 - hat(t, u, 0));
        hat(t, u, 0) = 0.7;
        for (int v = 1; v <= 3; ++v) hat(t, u, v) *= scale;
      }
    FrozenSource src(hat, Tensor(), Tensor(), Tensor());
    DecodeConfig cfg;
    CHECK(greedy_frame_sync(src, cfg).empty());
  }

  SUBCASE("label-dominant first frame then blanks yields that label") {
    Tensor hat = Tensor::zeros({2, 2, 3});
    cell(hat, 0, 0, 0.05, 0.05, 0.90);
    cell(hat, 0, 1, 0.90, 0.05, 0.05);
    cell(hat, 1, 0, 0.90, 0.05, 0.05);
    cell(hat, 1, 1, 0.90, 0.05, 0.05);
    FrozenSource src(hat, Tensor(), Tensor(), Tensor());
    DecodeConfig cfg;
    CHECK(greedy_frame_sync(src, cfg) == std::vector<int>{1});
  }

  SUBCASE("the symbol cap forces a frame advance") {
    // Labels dominate at every cell; without the cap this would never end.
    Tensor hat = Tensor::zeros({2, 2, 3});
    for (int t = 0; t < 2; ++t)
      for (int u = 0; u < 2; ++u) cell(hat, t, u, 0.02, 0.01, 0.97);
    FrozenSource src(hat, Tensor(), Tensor(), Tensor());
    DecodeConfig cfg;
    cfg.max_symbols_per_frame = 3;
    CHECK(greedy_frame_sync(src, cfg) == std::vector<int>(6, 1));
  }

  SUBCASE("an eos argmax ends the utterance") {
    Tensor hat = Tensor::zeros({3, 2, 3});
    for (int t = 0; t < 3; ++t) {
      cell(hat, t, 0, 0.10, 0.10, 0.80);
      cell(hat, t, 1, 0.10, 0.85, 0.05);
    }
    FrozenSource src(hat, Tensor(), Tensor(), Tensor());
    DecodeConfig cfg;
    CHECK(greedy_frame_sync(src, cfg) == std::vector<int>{1});
  }
}

TEST_CASE("greedy ctc collapses best-path repeats") {
  // Peaked frames: label 1, label 1, blank, label 2 -> collapse to [1, 2].
  Tensor ctc = Tensor::zeros({4, 4});
  auto row = [&](int t, double blank, double eos, double l1, double l2) {
    ctc(t, 0) = blank;
    ctc(t, 1) = eos;
    ctc(t, 2) = l1;
    ctc(t, 3) = l2;
  };
  row(0, 0.05, 0.025, 0.900, 0.025);
  row(1, 0.05, 0.025, 0.900, 0.025);
  row(2, 0.90, 0.025, 0.050, 0.025);
  row(3, 0.05, 0.025, 0.025, 0.900);
  FrozenSource src(Tensor(), ctc, Tensor(), Tensor());
  DecodeConfig cfg;
  cfg.mode = DecodeMode::kCtc;
  CHECK(greedy_frame_sync(src, cfg) == std::vector<int>{1, 2});
}

TEST_CASE("blank decisions never depend on the label source") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    // Tiny EOS mass keeps both walks from stopping early, so they visit the
    // same cells and the decision sequences are comparable.
    Tensor hat = random_hat_table(4, 5, 3, rng, 1e-4);
    Tensor ctc = random_rows(4, 4, rng);
    Tensor aed = random_rows(5, 3, rng, 1e-4);
    FrozenSource src(hat, ctc, aed, Tensor());

    DecodeConfig hat_cfg;
    GreedyTrace hat_trace;
    std::vector<int> hat_out = greedy_frame_sync(src, hat_cfg, &hat_trace);

    DecodeConfig aed_cfg;
    aed_cfg.mode = DecodeMode::kAedStream;
    GreedyTrace aed_trace;
    std::vector<int> aed_out = greedy_frame_sync(src, aed_cfg, &aed_trace);

    CHECK(aed_trace.advanced == hat_trace.advanced);
    CHECK(aed_trace.cell_t == hat_trace.cell_t);
    CHECK(aed_trace.cell_u == hat_trace.cell_u);
    CHECK(aed_trace.blank_probs == hat_trace.blank_probs);
    CHECK(aed_out.size() == hat_out.size());
  }
}

TEST_CASE("alignment-synchronous beam merges duplicate prefixes") {
  // Two alignments produce transcript [1] on a 2-frame lattice; the reported
  // score must be their log-sum-exp. EOS mass is zero so nothing else
  // contributes to the pooled totals.
  Tensor hat = Tensor::zeros({2, 2, 3});
  auto cell = [&](int t, int u, double blank, double lab) {
    hat(t, u, 0) = blank;
    hat(t, u, 1) = 0.0;
    hat(t, u, 2) = lab;
  };
  cell(0, 0, 0.4, 0.6);
  cell(0, 1, 0.6, 0.4);
  cell(1, 0, 0.2, 0.8);
  cell(1, 1, 0.8, 0.2);
  FrozenSource src(hat, Tensor(), Tensor(), Tensor());
  DecodeConfig cfg;
  cfg.beam = 8;
  std::vector<ScoredTranscript> nbest = beam_frame_sync(src, cfg);

  double path_a = std::log(0.6) + std::log(0.6) + std::log(0.8);
  double path_b = std::log(0.4) + std::log(0.8) + std::log(0.8);
  double expect = oracle::lse(path_a, path_b);
  double empty_expect = std::log(0.4) + std::log(0.2);
  bool found_one = false, found_empty = false;
  for (const auto& h : nbest) {
    if (h.tokens == std::vector<int>{1}) {
      found_one = true;
      CHECK(h.log_score == doctest::Approx(expect).epsilon(1e-12));
    }
    if (h.tokens.empty()) {
      found_empty = true;
      CHECK(h.log_score == doctest::Approx(empty_expect).epsilon(1e-12));
    }
  }
  CHECK(found_one);
  CHECK(found_empty);
}

TEST_CASE("weak eos mass cannot hijack the one-hypothesis beam") {
  // At (t, 0) EOS holds a large slice but the real label still wins the
  // argmax; after the emission every cell bleeds probability slowly. The
  // summed EOS mass makes the empty transcript the best complete hypothesis,
  // which a wide beam must find, while beam = 1 must stay on the greedy path
  // instead of being dragged off by pooled finalizations it never kept.
  Tensor hat = Tensor::zeros({6, 2, 3});
  for (int t = 0; t < 6; ++t) {
    hat(t, 0, 0) = 0.28;
    hat(t, 0, 1) = 0.345;
    hat(t, 0, 2) = 0.375;
    hat(t, 1, 0) = 0.5;
    hat(t, 1, 1) = 0.0005;
    hat(t, 1, 2) = 0.4995;
  }
  FrozenSource src(hat, Tensor(), Tensor(), Tensor());
  DecodeConfig cfg;
  std::vector<int> greedy = greedy_frame_sync(src, cfg);
  CHECK(greedy == std::vector<int>{1});

  cfg.beam = 1;
  auto one = beam_frame_sync(src, cfg);
  REQUIRE_FALSE(one.empty());
  CHECK(one.front().tokens == greedy);

  cfg.beam = 4096;
  auto wide = beam_frame_sync(src, cfg);
  auto exact = oracle::exhaustive_frame_sync(src, cfg);
  REQUIRE_FALSE(wide.empty());
  CHECK(wide.front().tokens.empty());
  CHECK(same_nbest(wide, exact, 1e-9));
}

TEST_CASE("wide beams equal exhaustive search") {
  Rng rng(13);
  SUBCASE("hat mode") {
    for (int rep = 0; rep < 6; ++rep) {
      FrozenSource src = random_source(2, 4, 3, rng);
      DecodeConfig cfg;
      cfg.beam = 4096;
      cfg.max_symbols_per_frame = 3;
      auto beam = beam_frame_sync(src, cfg);
      auto exact = oracle::exhaustive_frame_sync(src, cfg);
      if (static_cast<int>(exact.size()) > cfg.beam)
        exact.resize(static_cast<size_t>(cfg.beam));
      CHECK(same_nbest(beam, exact, 1e-9));
    }
  }
  SUBCASE("joint mode with every source weighted") {
    for (int rep = 0; rep < 4; ++rep) {
      FrozenSource src = random_source(2, 4, 3, rng, true);
      DecodeConfig cfg;
      cfg.mode = DecodeMode::kJoint;
      cfg.beam = 4096;
      cfg.max_symbols_per_frame = 3;
      cfg.mu_hat = 0.6;
      cfg.rho_extlm = 0.3;
      cfg.rho_ilm = 0.2;
      auto beam = beam_frame_sync(src, cfg);
      auto exact = oracle::exhaustive_frame_sync(src, cfg);
      if (static_cast<int>(exact.size()) > cfg.beam)
        exact.resize(static_cast<size_t>(cfg.beam));
      CHECK(same_nbest(beam, exact, 1e-9));
    }
  }
  SUBCASE("ctc prefix search") {
    for (int rep = 0; rep < 6; ++rep) {
      FrozenSource src(Tensor(), random_rows(4, 4, rng), Tensor(), Tensor());
      DecodeConfig cfg;
      cfg.mode = DecodeMode::kCtc;
      cfg.beam = 4096;
      auto beam = beam_frame_sync(src, cfg);
      auto exact = oracle::exhaustive_ctc(src);
      if (static_cast<int>(exact.size()) > cfg.beam)
        exact.resize(static_cast<size_t>(cfg.beam));
      CHECK(same_nbest(beam, exact, 1e-9));
    }
  }
  SUBCASE("label-synchronous aed") {
    for (int rep = 0; rep < 6; ++rep) {
      FrozenSource src(Tensor(), random_rows(2, 4, rng), random_rows(5, 3, rng),
                       Tensor());
      DecodeConfig cfg;
      cfg.mode = DecodeMode::kAedOffline;
      cfg.beam = 100000;
      cfg.max_symbols_per_frame = 2;
      auto beam = beam_label_sync_aed(src, cfg);
      auto exact = oracle::exhaustive_label_sync(src, cfg);
      if (static_cast<int>(exact.size()) > cfg.beam)
        exact.resize(static_cast<size_t>(cfg.beam));
      CHECK(same_nbest(beam, exact, 1e-9));
    }
  }
}

TEST_CASE("joint with mu_hat one and zero rho is hat decoding exactly") {
  Rng rng(17);
  for (int rep = 0; rep < 8; ++rep) {
    FrozenSource src = random_source(3, 4, 3, rng);

    DecodeConfig hat_cfg;
    hat_cfg.beam = 4;
    DecodeConfig joint_cfg = hat_cfg;
    joint_cfg.mode = DecodeMode::kJoint;
    joint_cfg.mu_hat = 1.0;

    auto hat_nbest = beam_frame_sync(src, hat_cfg);
    auto joint_nbest = beam_frame_sync(src, joint_cfg);
    REQUIRE(hat_nbest.size() == joint_nbest.size());
    for (size_t i = 0; i < hat_nbest.size(); ++i) {
      CHECK(joint_nbest[i].tokens == hat_nbest[i].tokens);
      CHECK(joint_nbest[i].log_score == hat_nbest[i].log_score);
    }
    CHECK(greedy_frame_sync(src, hat_cfg) == greedy_frame_sync(src, joint_cfg));
  }
}

TEST_CASE("beam one reproduces the greedy transcript") {
  Rng rng(19);
  for (int rep = 0; rep < 20; ++rep) {
    FrozenSource src(random_hat_table(4, 5, 3, rng), Tensor(), Tensor(),
                     Tensor());
    DecodeConfig cfg;
    cfg.beam = 1;
    auto nbest = beam_frame_sync(src, cfg);
    REQUIRE_FALSE(nbest.empty());
    CHECK(nbest.front().tokens == greedy_frame_sync(src, cfg));
  }
  for (int rep = 0; rep < 20; ++rep) {
    FrozenSource src(Tensor(), random_rows(5, 4, rng), Tensor(), Tensor());
    DecodeConfig cfg;
    cfg.mode = DecodeMode::kCtc;
    cfg.beam = 1;
    auto nbest = beam_frame_sync(src, cfg);
    REQUIRE_FALSE(nbest.empty());
    CHECK(nbest.front().tokens == greedy_frame_sync(src, cfg));
  }
}

TEST_CASE("wider beams never lower the best score") {
  Rng rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    FrozenSource src(random_hat_table(4, 6, 3, rng), Tensor(), Tensor(),
                     Tensor());
    double prev = -std::numeric_limits<double>::infinity();
    for (int beam : {1, 2, 4, 8, 16}) {
      DecodeConfig cfg;
      cfg.beam = beam;
      auto nbest = beam_frame_sync(src, cfg);
      REQUIRE_FALSE(nbest.empty());
      CHECK(nbest.front().log_score >= prev - 1e-12);
      prev = nbest.front().log_score;
    }
  }
  for (int rep = 0; rep < 10; ++rep) {
    FrozenSource src(Tensor(), sharpen_rows(random_rows(5, 4, rng), 4.0),
                     Tensor(), Tensor());
    double prev = -std::numeric_limits<double>::infinity();
    for (int beam : {1, 2, 4, 8, 16}) {
      DecodeConfig cfg;
      cfg.mode = DecodeMode::kCtc;
      cfg.beam = beam;
      auto nbest = beam_frame_sync(src, cfg);
      REQUIRE_FALSE(nbest.empty());
      CHECK(nbest.front().log_score >= prev - 1e-12);
      prev = nbest.front().log_score;
    }
  }
}

TEST_CASE("one-hot eos at the first row gives an empty aed transcript") {
  Tensor rows = Tensor::zeros({2, 3});
  rows(0, 0) = 1.0;  // eos immediately
  rows(1, 1) = 1.0;
  Tensor ctc = Tensor::full({2, 4}, 0.25);
  FrozenSource src(Tensor(), ctc, rows, Tensor());
  DecodeConfig cfg;
  cfg.mode = DecodeMode::kAedOffline;
  auto nbest = beam_label_sync_aed(src, cfg);
  REQUIRE_FALSE(nbest.empty());
  CHECK(nbest.front().tokens.empty());
  CHECK(nbest.front().log_score == 0.0);
}

TEST_CASE("model-backed source shares one predictor pass across modes") {
  ModelDims d = tiny_dims();
  AioParams p = AioParams::init(d, 321);
  ExtLmParams lm = ExtLmParams::init(d, 654);
  Rng rng(29);
  Tensor X = random_features(8, d.feat_dim, rng);

  SUBCASE("joint beam evaluates the predictor once per distinct prefix") {
    DecodeConfig cfg;
    cfg.mode = DecodeMode::kJoint;
    cfg.beam = 3;
    cfg.mu_hat = 0.5;
    cfg.rho_ilm = 0.2;
    cfg.rho_extlm = 0.3;
    ModelSource src(p, X, cfg, &lm);
    beam_frame_sync(src, cfg);
    CHECK(src.predictor_calls() == src.contexts());
    CHECK(src.extlm_predictor_calls() == src.contexts());
  }

  SUBCASE("greedy hat costs one predictor call per emitted label plus start") {
    DecodeConfig cfg;
    ModelSource src(p, X, cfg);
    std::vector<int> out = greedy_frame_sync(src, cfg);
    CHECK(src.predictor_calls() == static_cast<int>(out.size()) + 1);
  }

  SUBCASE("external lm machinery stays untouched at rho zero") {
    DecodeConfig cfg;
    cfg.mode = DecodeMode::kJoint;
    cfg.mu_hat = 0.5;
    ModelSource src(p, X, cfg, &lm);
    beam_frame_sync(src, cfg);
    CHECK(src.extlm_predictor_calls() == 0);
  }

  SUBCASE("weighted external lm without weights is rejected") {
    DecodeConfig cfg;
    cfg.mode = DecodeMode::kJoint;
    cfg.rho_extlm = 0.5;
    CHECK_THROWS_AS(ModelSource(p, X, cfg), std::invalid_argument);
  }
}

TEST_CASE("model-backed scores equal the training-side forwards") {
  ModelDims d = tiny_dims();
  AioParams p = AioParams::init(d, 99);
  Rng rng(31);
  Tensor X = random_features(8, d.feat_dim, rng);

  std::vector<int> y = {2, 1};
  Tensor h_enc = encode_offline(X, p);
  Tensor h_pred = predictor_rows_graph(y, p.pred, p.dims).value();
  Tensor lattice = hat_forward(h_enc, h_pred, p.joiner, d);
  Tensor lm_rows = lm_forward(h_pred, p.joiner, d);
  int t_prime = h_enc.dim(0);
  Tensor aed_rows = aed_forward(
      h_enc, h_pred, p.joiner, d,
      AttentionMask::all_true(static_cast<int>(y.size()) + 1, t_prime));
  Tensor ctc_rows = ctc_forward(h_enc, p.joiner, d);

  DecodeConfig cfg;
  ModelSource src(p, X, cfg);
  CHECK(src.t_prime() == t_prime);
  int ctx = src.start();
  for (int u = 0;; ++u) {
    for (int t = 0; t < t_prime; ++t) {
      CHECK(src.blank_prob(ctx, t) == lattice(t, u, 0));
      std::vector<double> labels = src.hat_labels(ctx, t);
      double blank = lattice(t, u, 0);
      for (int v = 0; v < d.vocab; ++v)
        CHECK(std::exp(labels[static_cast<size_t>(v)]) * (1.0 - blank) ==
              doctest::Approx(lattice(t, u, v + 1)).epsilon(1e-12));
    }
    std::vector<double> ilm = src.ilm_labels(ctx);
    std::vector<double> aed = src.aed_labels(ctx, t_prime);
    for (int v = 0; v < d.vocab; ++v) {
      CHECK(ilm[static_cast<size_t>(v)] == std::log(lm_rows(u, v)));
      CHECK(aed[static_cast<size_t>(v)] == std::log(aed_rows(u, v)));
    }
    if (u == static_cast<int>(y.size())) break;
    ctx = src.extend(ctx, y[static_cast<size_t>(u)]);
  }
  for (int t = 0; t < t_prime; ++t) {
    std::vector<double> row = src.ctc_row(t);
    for (int k = 0; k <= d.vocab; ++k)
      CHECK(row[static_cast<size_t>(k)] == std::log(ctc_rows(t, k)));
  }

  // The internal lm never reads the acoustics.
  Tensor X2 = random_features(8, d.feat_dim, rng);
  ModelSource src2(p, X2, cfg);
  int ctx2 = src2.extend(src2.start(), y[0]);
  int ctx1 = src.extend(src.start(), y[0]);
  CHECK(src.ilm_labels(ctx1) == src2.ilm_labels(ctx2));
}

TEST_CASE("streaming decode runs end to end") {
  ModelDims d = tiny_dims();
  AioParams p = AioParams::init(d, 7);
  Rng rng(37);
  Tensor X = random_features(16, d.feat_dim, rng);

  DecodeConfig cfg;
  cfg.mode = DecodeMode::kAedStream;
  cfg.streaming = true;
  cfg.chunk.chunk_len = 2;
  cfg.chunk.history_chunks = 1;
  cfg.beam = 2;
  ModelSource src(p, X, cfg);
  auto nbest = beam_frame_sync(src, cfg);
  CHECK_FALSE(nbest.empty());
}
