#include "aio/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace aio {

namespace {

constexpr char kMagic[8] = {'A', 'I', 'O', '1', 'A', 'S', 'R', '\0'};
constexpr uint32_t kVersion = 1;

void fail(const std::string& what) { throw std::runtime_error(what); }

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Cursor {
  const unsigned char* p;
  size_t left;
  std::string path;

  void need(size_t n) const {
    if (left < n) fail("checkpoint: " + path + " is truncated");
  }
  uint8_t u8() {
    need(1);
    uint8_t v = p[0];
    p += 1;
    left -= 1;
    return v;
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                 (static_cast<uint32_t>(p[2]) << 16) |
                 (static_cast<uint32_t>(p[3]) << 24);
    p += 4;
    left -= 4;
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
};

// Dimension fields flattened into one metadata tensor, in declaration order,
// with ln_eps and the activation id appended.
Tensor pack_dims(const ModelDims& d) {
  Tensor t = Tensor::zeros({14});
  int i = 0;
  for (int v : {d.feat_dim, d.stack, d.enc_dim, d.enc_blocks, d.enc_heads,
                d.ff_expansion, d.embed_dim, d.pred_layers, d.pred_dim,
                d.joiner_dim, d.joiner_heads, d.vocab})
    t[i++] = static_cast<double>(v);
  t[i++] = d.ln_eps;
  t[i++] = static_cast<double>(static_cast<int>(d.act));
  return t;
}

ModelDims unpack_dims(const Tensor& t, const std::string& path) {
  if (t.rank() != 1 || t.numel() != 14)
    fail("checkpoint: " + path + " has a malformed meta.arch tensor");
  ModelDims d;
  int i = 0;
  for (int* f : {&d.feat_dim, &d.stack, &d.enc_dim, &d.enc_blocks,
                 &d.enc_heads, &d.ff_expansion, &d.embed_dim, &d.pred_layers,
                 &d.pred_dim, &d.joiner_dim, &d.joiner_heads, &d.vocab})
    *f = static_cast<int>(t[i++]);
  d.ln_eps = t[i++];
  d.act = static_cast<Activation>(static_cast<int>(t[i++]));
  d.validate();
  return d;
}

template <typename Params>
NamedTensorList collect(const Params& p, double kind) {
  NamedTensorList items;
  Tensor k = Tensor::zeros({1});
  k[0] = kind;
  items.emplace_back("meta.kind", std::move(k));
  items.emplace_back("meta.arch", pack_dims(p.dims));
  p.visit([&items](const std::string& name, const Var& v) {
    items.emplace_back(name, v.value());
  });
  return items;
}

// Overwrites the freshly initialized parameter tensors with the stored ones,
// demanding an exact one-to-one match of names and shapes.
template <typename Params>
void restore(Params& p, const NamedTensorList& items, const std::string& path) {
  std::map<std::string, const Tensor*> stored;
  for (const auto& [name, t] : items)
    if (name.rfind("meta.", 0) != 0) stored.emplace(name, &t);
  size_t used = 0;
  p.visit([&](const std::string& name, const Var& v) {
    auto it = stored.find(name);
    if (it == stored.end())
      fail("checkpoint: " + path + " lacks tensor " + name);
    const Tensor& src = *it->second;
    Tensor& dst = v.node()->value;
    if (src.dims() != dst.dims())
      fail("checkpoint: " + path + " has a wrong shape for " + name);
    for (int64_t i = 0; i < src.numel(); ++i) dst[i] = src[i];
    ++used;
  });
  if (used != stored.size())
    fail("checkpoint: " + path + " holds tensors this model does not have");
}

double stored_kind(const NamedTensorList& items, const std::string& path) {
  for (const auto& [name, t] : items)
    if (name == "meta.kind") {
      if (t.numel() != 1) fail("checkpoint: " + path + " meta.kind malformed");
      return t[0];
    }
  fail("checkpoint: " + path + " lacks meta.kind");
  return 0.0;
}

ModelDims stored_dims(const NamedTensorList& items, const std::string& path) {
  for (const auto& [name, t] : items)
    if (name == "meta.arch") return unpack_dims(t, path);
  fail("checkpoint: " + path + " lacks meta.arch");
  return ModelDims{};
}

}  // namespace

void write_tensor_file(const std::string& path, const NamedTensorList& items) {
  std::map<std::string, int> seen;
  for (const auto& [name, t] : items) {
    if (++seen[name] > 1) fail("checkpoint: duplicate tensor name " + name);
    if (name.empty() || name.size() > 0xffff)
      fail("checkpoint: bad tensor name length");
    if (!t.defined()) fail("checkpoint: undefined tensor " + name);
    if (t.rank() > 0xff) fail("checkpoint: rank too large for " + name);
  }
  std::string out;
  out.append(kMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(items.size()));
  for (const auto& [name, t] : items) {
    put_u16(out, static_cast<uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (int d = 0; d < t.rank(); ++d)
      put_u32(out, static_cast<uint32_t>(t.dim(d)));
    for (int64_t i = 0; i < t.numel(); ++i)
      put_f32(out, static_cast<float>(t[i]));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f.good()) fail("checkpoint: cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f.good()) fail("checkpoint: write to " + path + " failed");
}

NamedTensorList read_tensor_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f.good()) fail("checkpoint: cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  Cursor c{reinterpret_cast<const unsigned char*>(data.data()), data.size(),
           path};
  if (c.bytes(8) != std::string(kMagic, 8))
    fail("checkpoint: " + path + " is not a checkpoint (bad magic)");
  uint32_t version = c.u32();
  if (version != kVersion)
    fail("checkpoint: " + path + " has unsupported version " +
         std::to_string(version));
  uint32_t count = c.u32();
  NamedTensorList items;
  items.reserve(count);
  std::map<std::string, int> seen;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t name_len = c.u16();
    std::string name = c.bytes(name_len);
    if (++seen[name] > 1)
      fail("checkpoint: " + path + " repeats tensor name " + name);
    uint8_t rank = c.u8();
    std::vector<int> dims(rank);
    int64_t numel = 1;
    for (uint8_t d = 0; d < rank; ++d) {
      uint32_t x = c.u32();
      if (x == 0 || x > (uint32_t{1} << 28))
        fail("checkpoint: " + path + " has an implausible dim for " + name);
      dims[d] = static_cast<int>(x);
      numel *= dims[d];
    }
    Tensor t = rank == 0 ? Tensor::zeros({1}) : Tensor::zeros(dims);
    if (rank == 0) numel = 1;
    for (int64_t k = 0; k < numel; ++k) t[k] = static_cast<double>(c.f32());
    items.emplace_back(std::move(name), std::move(t));
  }
  if (c.left != 0) fail("checkpoint: " + path + " has trailing bytes");
  return items;
}

void save_checkpoint(const AioParams& p, const std::string& path) {
  write_tensor_file(path, collect(p, 0.0));
}

AioParams load_checkpoint(const std::string& path) {
  NamedTensorList items = read_tensor_file(path);
  if (stored_kind(items, path) != 0.0)
    fail("checkpoint: " + path + " holds an external language model, not a recognizer");
  AioParams p = AioParams::init(stored_dims(items, path), 0);
  restore(p, items, path);
  return p;
}

void save_extlm_checkpoint(const ExtLmParams& p, const std::string& path) {
  write_tensor_file(path, collect(p, 1.0));
}

ExtLmParams load_extlm_checkpoint(const std::string& path) {
  NamedTensorList items = read_tensor_file(path);
  if (stored_kind(items, path) != 1.0)
    fail("checkpoint: " + path + " holds a recognizer, not an external language model");
  ExtLmParams p = ExtLmParams::init(stored_dims(items, path), 0);
  restore(p, items, path);
  return p;
}

}  // namespace aio
