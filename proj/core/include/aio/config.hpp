#pragma once

#include <string>

#include "aio/corpus.hpp"
#include "aio/decode.hpp"
#include "aio/params.hpp"
#include "aio/train.hpp"

namespace aio {

// Plain-text `key = value` run configuration. One file drives generation,
// training, and decoding; sections are dotted prefixes (corpus., model.,
// train., decode.). '#' starts a comment, blank lines are skipped, unknown
// keys are rejected by name, and every section is validated after parsing.
struct RunConfig {
  CorpusConfig corpus;
  ModelDims model;
  TrainConfig train;
  DecodeConfig decode;
};

RunConfig parse_run_config_text(const std::string& text);
// Reads the file; afterwards the AIO_SEED environment variable, when set,
// overrides both corpus.seed and train.seed.
RunConfig parse_run_config_file(const std::string& path);
// The AIO_SEED override alone, for callers that start from defaults.
void apply_env_seed_override(RunConfig& rc);

// Flag spelling of the decoding modes: hat, ctc, aed, aed-stream, joint.
DecodeMode parse_decode_mode(const std::string& name);
std::string decode_mode_name(DecodeMode mode);

}  // namespace aio
