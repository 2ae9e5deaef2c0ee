#pragma once

#include <string>
#include <utility>
#include <vector>

#include "aio/params.hpp"
#include "aio/tensor.hpp"

namespace aio {

// Named-tensor container: magic "AIO1ASR\0", version u32 = 1, tensor count
// u32, then per tensor: name length u16, name bytes, rank u8, one u32 per
// dim, values as IEEE-754 binary32 row-major. Every integer and value is
// little-endian on disk regardless of host order. Values quantize to 32 bits
// on save; in-memory parameters stay 64-bit.
using NamedTensorList = std::vector<std::pair<std::string, Tensor>>;

void write_tensor_file(const std::string& path, const NamedTensorList& items);
NamedTensorList read_tensor_file(const std::string& path);

// Model checkpoints add two metadata tensors: meta.kind (0 = recognizer,
// 1 = external language model) and meta.arch (the dimension fields), so a
// load rebuilds the right shapes and rejects the wrong model family.
void save_checkpoint(const AioParams& p, const std::string& path);
AioParams load_checkpoint(const std::string& path);

void save_extlm_checkpoint(const ExtLmParams& p, const std::string& path);
ExtLmParams load_extlm_checkpoint(const std::string& path);

}  // namespace aio
