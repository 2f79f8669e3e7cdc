#include "seec/weights.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace seec {

nd::Tensor ParamStore::create(const std::string& name, std::vector<int> shape,
                              double gain, int fan_in) {
  SEEC_CHECK(fan_in >= 1);
  nd::Tensor t(std::move(shape));
  double bound = gain * std::sqrt(3.0 / fan_in);
  for (auto& v : t.values()) v = uniform_range(rng_, -bound, bound);
  t.set_requires_grad(true);
  items_.emplace_back(name, t);
  return t;
}

nd::Tensor ParamStore::create_const(const std::string& name,
                                    std::vector<int> shape, double value) {
  nd::Tensor t = nd::Tensor::full(std::move(shape), value);
  t.set_requires_grad(true);
  items_.emplace_back(name, t);
  return t;
}

nd::Tensor ParamStore::create_meta(const std::string& name,
                                   std::vector<int> shape,
                                   std::vector<double> values) {
  nd::Tensor t(std::move(shape), std::move(values));
  items_.emplace_back(name, t);
  return t;
}

nd::Tensor ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw ValidationError("parameter not found: " + name);
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : items_) {
    t.grad();
    t.zero_grad();
  }
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

struct Reader {
  std::span<const std::uint8_t> in;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > in.size()) throw ValidationError("truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = in[pos] | (in[pos + 1] << 8) | (in[pos + 2] << 16) |
                      (static_cast<std::uint32_t>(in[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
    pos += 8;
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

std::vector<std::uint8_t> serialize_params(const ParamStore& store) {
  std::vector<std::uint8_t> out(kWeightsMagic, kWeightsMagic + 8);
  for (const auto& [name, t] : store.items()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.values()) put_f64(out, v);
  }
  return out;
}

void deserialize_params(std::span<const std::uint8_t> bytes,
                        ParamStore& store) {
  Reader r{bytes};
  r.need(8);
  if (std::memcmp(bytes.data(), kWeightsMagic, 8) != 0)
    throw ValidationError("bad checkpoint magic");
  r.pos = 8;
  std::size_t loaded = 0;
  while (r.pos < bytes.size()) {
    std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    std::uint32_t ndim = r.u32();
    if (ndim > 8) throw ValidationError("checkpoint tensor rank too large");
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    nd::Tensor t = store.find(name);
    if (t.shape() != shape)
      throw ValidationError("checkpoint shape mismatch for " + name);
    for (auto& v : t.values()) v = r.f64();
    ++loaded;
  }
  if (loaded != store.items().size())
    throw ValidationError("checkpoint parameter count mismatch");
}

namespace {

// MurmurHash3 x64 128-bit (public-domain construction).
inline std::uint64_t rotl64(std::uint64_t x, int r) {
  return (x << r) | (x >> (64 - r));
}
inline std::uint64_t fmix64(std::uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdULL;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ULL;
  k ^= k >> 33;
  return k;
}

}  // namespace

std::array<std::uint8_t, 16> model_hash(const ParamStore& store) {
  std::vector<std::uint8_t> data = serialize_params(store);
  const std::uint8_t* p = data.data();
  const std::size_t len = data.size();
  const std::size_t nblocks = len / 16;

  std::uint64_t h1 = 0x5eec5eec5eec5eecULL, h2 = 0x5eec5eec5eec5eecULL;
  const std::uint64_t c1 = 0x87c37b91114253d5ULL;
  const std::uint64_t c2 = 0x4cf5ad432745937fULL;

  for (std::size_t i = 0; i < nblocks; ++i) {
    std::uint64_t k1, k2;
    std::memcpy(&k1, p + i * 16, 8);
    std::memcpy(&k2, p + i * 16 + 8, 8);
    k1 *= c1; k1 = rotl64(k1, 31); k1 *= c2; h1 ^= k1;
    h1 = rotl64(h1, 27); h1 += h2; h1 = h1 * 5 + 0x52dce729;
    k2 *= c2; k2 = rotl64(k2, 33); k2 *= c1; h2 ^= k2;
    h2 = rotl64(h2, 31); h2 += h1; h2 = h2 * 5 + 0x38495ab5;
  }

  const std::uint8_t* tail = p + nblocks * 16;
  std::uint64_t k1 = 0, k2 = 0;
  switch (len & 15) {
    case 15: k2 ^= static_cast<std::uint64_t>(tail[14]) << 48; [[fallthrough]];
    case 14: k2 ^= static_cast<std::uint64_t>(tail[13]) << 40; [[fallthrough]];
    case 13: k2 ^= static_cast<std::uint64_t>(tail[12]) << 32; [[fallthrough]];
    case 12: k2 ^= static_cast<std::uint64_t>(tail[11]) << 24; [[fallthrough]];
    case 11: k2 ^= static_cast<std::uint64_t>(tail[10]) << 16; [[fallthrough]];
    case 10: k2 ^= static_cast<std::uint64_t>(tail[9]) << 8; [[fallthrough]];
    case 9:
      k2 ^= static_cast<std::uint64_t>(tail[8]);
      k2 *= c2; k2 = rotl64(k2, 33); k2 *= c1; h2 ^= k2;
      [[fallthrough]];
    case 8: k1 ^= static_cast<std::uint64_t>(tail[7]) << 56; [[fallthrough]];
    case 7: k1 ^= static_cast<std::uint64_t>(tail[6]) << 48; [[fallthrough]];
    case 6: k1 ^= static_cast<std::uint64_t>(tail[5]) << 40; [[fallthrough]];
    case 5: k1 ^= static_cast<std::uint64_t>(tail[4]) << 32; [[fallthrough]];
    case 4: k1 ^= static_cast<std::uint64_t>(tail[3]) << 24; [[fallthrough]];
    case 3: k1 ^= static_cast<std::uint64_t>(tail[2]) << 16; [[fallthrough]];
    case 2: k1 ^= static_cast<std::uint64_t>(tail[1]) << 8; [[fallthrough]];
    case 1:
      k1 ^= static_cast<std::uint64_t>(tail[0]);
      k1 *= c1; k1 = rotl64(k1, 31); k1 *= c2; h1 ^= k1;
      break;
    default: break;
  }

  h1 ^= static_cast<std::uint64_t>(len);
  h2 ^= static_cast<std::uint64_t>(len);
  h1 += h2;
  h2 += h1;
  h1 = fmix64(h1);
  h2 = fmix64(h2);
  h1 += h2;
  h2 += h1;

  std::array<std::uint8_t, 16> out;
  std::memcpy(out.data(), &h1, 8);
  std::memcpy(out.data() + 8, &h2, 8);
  return out;
}

void save_checkpoint(const std::string& path, const ParamStore& store) {
  std::vector<std::uint8_t> bytes = serialize_params(store);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open " + path);
  std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw IoError("read failed: " + path);
  return bytes;
}

}  // namespace

void load_checkpoint(const std::string& path, ParamStore& store) {
  auto bytes = read_file(path);
  deserialize_params(bytes, store);
}

std::vector<std::pair<std::string, nd::Tensor>> read_checkpoint(
    const std::string& path) {
  auto bytes = read_file(path);
  Reader r{bytes};
  r.need(8);
  if (std::memcmp(bytes.data(), kWeightsMagic, 8) != 0)
    throw ValidationError("bad checkpoint magic");
  r.pos = 8;
  std::vector<std::pair<std::string, nd::Tensor>> out;
  while (r.pos < bytes.size()) {
    std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    std::uint32_t ndim = r.u32();
    if (ndim > 8) throw ValidationError("checkpoint tensor rank too large");
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    nd::Tensor t(shape);
    for (auto& v : t.values()) v = r.f64();
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

std::vector<std::pair<std::string, std::vector<int>>> peek_checkpoint(
    const std::string& path) {
  auto bytes = read_file(path);
  Reader r{bytes};
  r.need(8);
  if (std::memcmp(bytes.data(), kWeightsMagic, 8) != 0)
    throw ValidationError("bad checkpoint magic");
  r.pos = 8;
  std::vector<std::pair<std::string, std::vector<int>>> out;
  while (r.pos < bytes.size()) {
    std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    std::uint32_t ndim = r.u32();
    if (ndim > 8) throw ValidationError("checkpoint tensor rank too large");
    std::vector<int> shape(ndim);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<int>(r.u32());
      numel *= static_cast<std::size_t>(d);
    }
    r.need(numel * 8);
    r.pos += numel * 8;
    out.emplace_back(std::move(name), std::move(shape));
  }
  return out;
}

}  // namespace seec
