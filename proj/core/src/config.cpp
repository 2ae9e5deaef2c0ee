#include "aio/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace aio {

namespace {

void fail(const std::string& what) { throw std::invalid_argument(what); }

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  size_t pos = 0;
  int x = 0;
  try {
    x = std::stoi(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size()) fail("config: " + key + " is not an integer: " + v);
  return x;
}

double to_double(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size()) fail("config: " + key + " is not a number: " + v);
  return x;
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  size_t pos = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size() || v.empty() || v[0] == '-')
    fail("config: " + key + " is not a nonnegative integer: " + v);
  return static_cast<uint64_t>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("config: " + key + " must be true or false: " + v);
  return false;
}

}  // namespace

DecodeMode parse_decode_mode(const std::string& name) {
  if (name == "hat") return DecodeMode::kHat;
  if (name == "ctc") return DecodeMode::kCtc;
  if (name == "aed") return DecodeMode::kAedOffline;
  if (name == "aed-stream") return DecodeMode::kAedStream;
  if (name == "joint") return DecodeMode::kJoint;
  fail("config: unknown decode mode '" + name +
       "' (expected hat|ctc|aed|aed-stream|joint)");
  return DecodeMode::kHat;
}

std::string decode_mode_name(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::kHat: return "hat";
    case DecodeMode::kCtc: return "ctc";
    case DecodeMode::kAedOffline: return "aed";
    case DecodeMode::kAedStream: return "aed-stream";
    case DecodeMode::kJoint: return "joint";
  }
  return "hat";
}

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig rc;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  std::map<std::string, Setter> keys;
  auto add_int = [&keys](const std::string& key, int* slot) {
    keys[key] = [slot](const std::string& k, const std::string& v) {
      *slot = to_int(k, v);
    };
  };
  auto add_double = [&keys](const std::string& key, double* slot) {
    keys[key] = [slot](const std::string& k, const std::string& v) {
      *slot = to_double(k, v);
    };
  };
  auto add_u64 = [&keys](const std::string& key, uint64_t* slot) {
    keys[key] = [slot](const std::string& k, const std::string& v) {
      *slot = to_u64(k, v);
    };
  };
  auto add_bool = [&keys](const std::string& key, bool* slot) {
    keys[key] = [slot](const std::string& k, const std::string& v) {
      *slot = to_bool(k, v);
    };
  };

  add_int("corpus.vocab", &rc.corpus.vocab);
  add_int("corpus.feat_dim", &rc.corpus.feat_dim);
  add_int("corpus.min_tokens", &rc.corpus.min_tokens);
  add_int("corpus.max_tokens", &rc.corpus.max_tokens);
  add_int("corpus.min_duration", &rc.corpus.min_duration);
  add_int("corpus.max_duration", &rc.corpus.max_duration);
  add_double("corpus.noise_std", &rc.corpus.noise_std);
  add_int("corpus.train_count", &rc.corpus.train_count);
  add_int("corpus.dev_count", &rc.corpus.dev_count);
  add_int("corpus.test_count", &rc.corpus.test_count);
  add_u64("corpus.seed", &rc.corpus.seed);

  add_int("model.feat_dim", &rc.model.feat_dim);
  add_int("model.stack", &rc.model.stack);
  add_int("model.enc_dim", &rc.model.enc_dim);
  add_int("model.enc_blocks", &rc.model.enc_blocks);
  add_int("model.enc_heads", &rc.model.enc_heads);
  add_int("model.ff_expansion", &rc.model.ff_expansion);
  add_int("model.embed_dim", &rc.model.embed_dim);
  add_int("model.pred_layers", &rc.model.pred_layers);
  add_int("model.pred_dim", &rc.model.pred_dim);
  add_int("model.joiner_dim", &rc.model.joiner_dim);
  add_int("model.joiner_heads", &rc.model.joiner_heads);
  add_int("model.vocab", &rc.model.vocab);

  add_int("train.epochs", &rc.train.epochs);
  add_int("train.batch_size", &rc.train.batch_size);
  add_double("train.learning_rate", &rc.train.learning_rate);
  add_int("train.warmup_steps", &rc.train.warmup_steps);
  add_double("train.lambda_lm", &rc.train.lambda_lm);
  add_int("train.chunk_len", &rc.train.chunk.chunk_len);
  add_int("train.history_chunks", &rc.train.chunk.history_chunks);
  add_u64("train.seed", &rc.train.seed);
  add_bool("train.dual_mode", &rc.train.dual_mode);

  keys["decode.mode"] = [&rc](const std::string&, const std::string& v) {
    rc.decode.mode = parse_decode_mode(v);
  };
  add_int("decode.beam", &rc.decode.beam);
  add_double("decode.mu_hat", &rc.decode.mu_hat);
  add_double("decode.rho_extlm", &rc.decode.rho_extlm);
  add_double("decode.rho_ilm", &rc.decode.rho_ilm);
  add_int("decode.max_symbols_per_frame", &rc.decode.max_symbols_per_frame);
  add_bool("decode.streaming", &rc.decode.streaming);
  add_int("decode.chunk_len", &rc.decode.chunk.chunk_len);
  add_int("decode.history_chunks", &rc.decode.chunk.history_chunks);

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail("config: line " + std::to_string(lineno) +
           " is not a key = value pair");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    auto it = keys.find(key);
    if (it == keys.end())
      fail("config: unknown key '" + key + "' on line " +
           std::to_string(lineno));
    if (value.empty())
      fail("config: empty value for '" + key + "' on line " +
           std::to_string(lineno));
    it->second(key, value);
  }

  rc.corpus.validate();
  rc.model.validate();
  rc.train.validate();
  rc.decode.validate();
  return rc;
}

void apply_env_seed_override(RunConfig& rc) {
  if (const char* env = std::getenv("AIO_SEED")) {
    uint64_t seed = to_u64("AIO_SEED", env);
    rc.corpus.seed = seed;
    rc.train.seed = seed;
  }
}

RunConfig parse_run_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f.good()) fail("config: cannot open " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  RunConfig rc = parse_run_config_text(buf.str());
  apply_env_seed_override(rc);
  return rc;
}

}  // namespace aio
