#include "aio/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "aio/rng.hpp"

namespace aio {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Little-endian IEEE-754 binary32, written byte by byte so the file format
// does not depend on host endianness.
void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

float get_f32(const unsigned char* p) {
  uint32_t bits = static_cast<uint32_t>(p[0]) |
                  (static_cast<uint32_t>(p[1]) << 8) |
                  (static_cast<uint32_t>(p[2]) << 16) |
                  (static_cast<uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

Utterance make_utterance(const CorpusConfig& cfg, const Tensor& templates,
                         Rng rng) {
  Utterance u;
  int count = rng.uniform_int(cfg.min_tokens, cfg.max_tokens);
  std::vector<int> durations(static_cast<size_t>(count));
  u.transcript.resize(static_cast<size_t>(count));
  int frames = 0;
  for (int i = 0; i < count; ++i) {
    u.transcript[static_cast<size_t>(i)] = rng.uniform_int(1, cfg.vocab - 1);
    durations[static_cast<size_t>(i)] =
        rng.uniform_int(cfg.min_duration, cfg.max_duration);
    frames += durations[static_cast<size_t>(i)];
  }
  u.features = Tensor::zeros({frames, cfg.feat_dim});
  int t = 0;
  for (int i = 0; i < count; ++i) {
    int tok = u.transcript[static_cast<size_t>(i)];
    for (int d = 0; d < durations[static_cast<size_t>(i)]; ++d, ++t)
      for (int f = 0; f < cfg.feat_dim; ++f)
        u.features(t, f) = templates(tok, f) + cfg.noise_std * rng.normal();
  }
  return u;
}

std::vector<Utterance> make_split(const CorpusConfig& cfg,
                                  const Tensor& templates, Rng& master,
                                  uint64_t split_id, int count) {
  std::vector<Utterance> split;
  split.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i)
    split.push_back(make_utterance(
        cfg, templates,
        master.fork(split_id * (uint64_t{1} << 20) + static_cast<uint64_t>(i))));
  return split;
}

}  // namespace

void CorpusConfig::validate() const {
  require(vocab >= 3, "corpus: vocabulary needs EOS plus at least two tokens");
  require(feat_dim >= 1, "corpus: feature dim must be positive");
  require(min_tokens >= 1 && min_tokens <= max_tokens,
          "corpus: min_tokens must lie in [1, max_tokens]");
  require(min_duration >= 1 && min_duration <= max_duration,
          "corpus: min_duration must lie in [1, max_duration]");
  require(noise_std >= 0.0, "corpus: noise std must be nonnegative");
  require(train_count >= 0 && dev_count >= 0 && test_count >= 0,
          "corpus: utterance counts must be nonnegative");
}

Tensor token_templates(const CorpusConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Tensor templates = Tensor::zeros({cfg.vocab, cfg.feat_dim});
  for (int v = 1; v < cfg.vocab; ++v)
    for (int f = 0; f < cfg.feat_dim; ++f) templates(v, f) = rng.normal();
  return templates;
}

Corpus generate(const CorpusConfig& cfg) {
  cfg.validate();
  Tensor templates = token_templates(cfg);
  // Every utterance draws from its own fork keyed by (split, index), so the
  // corpus is a pure function of the seed, independent of generation order.
  Rng master(cfg.seed);
  Corpus c;
  c.train = make_split(cfg, templates, master, 0, cfg.train_count);
  c.dev = make_split(cfg, templates, master, 1, cfg.dev_count);
  c.test = make_split(cfg, templates, master, 2, cfg.test_count);
  return c;
}

int edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref) {
  size_t H = hyp.size(), R = ref.size();
  std::vector<int> prev(R + 1), cur(R + 1);
  for (size_t j = 0; j <= R; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= H; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= R; ++j) {
      int sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[R];
}

double token_error_rate(const std::vector<int>& hyp,
                        const std::vector<int>& ref) {
  return static_cast<double>(edit_distance(hyp, ref)) /
         static_cast<double>(std::max<size_t>(size_t{1}, ref.size()));
}

void save_split(const std::string& dir, const std::vector<Utterance>& split) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string refs;
  for (size_t i = 0; i < split.size(); ++i) {
    const Utterance& u = split[i];
    std::string bytes;
    bytes.reserve(static_cast<size_t>(u.features.numel()) * 4);
    for (int64_t k = 0; k < u.features.numel(); ++k)
      put_f32(bytes, static_cast<float>(u.features[k]));
    std::ofstream f(fs::path(dir) / ("feats_" + std::to_string(i) + ".f32"),
                    std::ios::binary);
    require(f.good(), "corpus: cannot open feature file for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(f.good(), "corpus: feature write failed");
    refs += std::to_string(i);
    refs += '\t';
    for (size_t j = 0; j < u.transcript.size(); ++j) {
      if (j) refs += ' ';
      refs += std::to_string(u.transcript[j]);
    }
    refs += '\n';
  }
  std::ofstream f(fs::path(dir) / "refs.tsv", std::ios::binary);
  require(f.good(), "corpus: cannot open refs.tsv for writing");
  f.write(refs.data(), static_cast<std::streamsize>(refs.size()));
  require(f.good(), "corpus: refs.tsv write failed");
}

std::vector<Utterance> load_split(const std::string& dir, int feat_dim) {
  namespace fs = std::filesystem;
  require(feat_dim >= 1, "corpus: feature dim must be positive");
  std::ifstream refs(fs::path(dir) / "refs.tsv");
  require(refs.good(), "corpus: missing refs.tsv in " + dir);
  std::vector<std::pair<long, std::vector<int>>> entries;
  std::string line;
  while (std::getline(refs, line)) {
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    require(tab != std::string::npos, "corpus: refs.tsv line lacks a tab");
    long id = std::stol(line.substr(0, tab));
    std::vector<int> tokens;
    std::istringstream rest(line.substr(tab + 1));
    int tok;
    while (rest >> tok) tokens.push_back(tok);
    entries.emplace_back(id, std::move(tokens));
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (size_t i = 1; i < entries.size(); ++i)
    require(entries[i].first != entries[i - 1].first,
            "corpus: duplicate utterance id in refs.tsv");

  std::vector<Utterance> split;
  split.reserve(entries.size());
  for (auto& [id, tokens] : entries) {
    fs::path p = fs::path(dir) / ("feats_" + std::to_string(id) + ".f32");
    std::ifstream f(p, std::ios::binary);
    require(f.good(), "corpus: missing feature file " + p.string());
    std::string bytes((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
    require(bytes.size() % (4 * static_cast<size_t>(feat_dim)) == 0,
            "corpus: feature file size not a multiple of the row size");
    int frames = static_cast<int>(bytes.size() / 4 / static_cast<size_t>(feat_dim));
    Utterance u;
    u.features = Tensor::zeros({frames, feat_dim});
    const unsigned char* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    for (int64_t k = 0; k < u.features.numel(); ++k)
      u.features[k] = static_cast<double>(get_f32(raw + 4 * k));
    u.transcript = std::move(tokens);
    split.push_back(std::move(u));
  }
  return split;
}

}  // namespace aio
