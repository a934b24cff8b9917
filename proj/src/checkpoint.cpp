#include "rgan/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace rgan {

namespace {

constexpr char kMagic[4] = {'R', 'G', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v & 0xFF));
  out.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xFF));
}

struct Reader {
  const std::vector<uint8_t>& b;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError("checkpoint: " + what + " at byte offset " +
                          std::to_string(pos));
  }
  void need(size_t n, const char* what) const {
    if (b.size() - pos < n) {
      throw CheckpointError("checkpoint: truncated " + std::string(what) +
                            " at byte offset " + std::to_string(pos));
    }
  }
  uint16_t u16() {
    need(2, "u16");
    const uint16_t v = uint16_t(b[pos]) | uint16_t(b[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4, "u32");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[pos + size_t(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  uint8_t u8() {
    need(1, "u8");
    return b[pos++];
  }
};

}  // namespace

std::vector<uint8_t> serialize_checkpoint(
    const std::vector<NamedTensorF>& tensors) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, uint32_t(tensors.size()));
  for (const NamedTensorF& t : tensors) {
    if (t.name.size() > 0xFFFF)
      throw CheckpointError("checkpoint: tensor name too long: " + t.name);
    if (int64_t(t.data.size()) != shape_numel(t.shape))
      throw CheckpointError("checkpoint: data/shape mismatch for " + t.name);
    put_u16(out, uint16_t(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(uint8_t(t.shape.size()));
    for (int d : t.shape) put_u32(out, uint32_t(d));
    const size_t off = out.size();
    out.resize(off + t.data.size() * 4);
    static_assert(sizeof(float) == 4);
    std::memcpy(out.data() + off, t.data.data(), t.data.size() * 4);
  }
  return out;
}

std::vector<NamedTensorF> deserialize_checkpoint(
    const std::vector<uint8_t>& bytes) {
  Reader r{bytes};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError("checkpoint: bad magic, expected RGCK");
  r.pos = 4;
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw CheckpointError("checkpoint: unsupported version " +
                          std::to_string(version));
  const uint32_t count = r.u32();

  std::vector<NamedTensorF> tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensorF t;
    const uint16_t name_len = r.u16();
    r.need(name_len, "name");
    t.name.assign(reinterpret_cast<const char*>(bytes.data() + r.pos),
                  name_len);
    r.pos += name_len;
    const uint8_t ndim = r.u8();
    int64_t numel = 1;
    for (int d = 0; d < ndim; ++d) {
      const uint32_t dim = r.u32();
      if (dim == 0) r.fail("zero dimension in tensor " + t.name);
      t.shape.push_back(int(dim));
      numel *= dim;
    }
    r.need(size_t(numel) * 4, ("payload of " + t.name).c_str());
    t.data.resize(size_t(numel));
    std::memcpy(t.data.data(), bytes.data() + r.pos, size_t(numel) * 4);
    r.pos += size_t(numel) * 4;
    tensors.push_back(std::move(t));
  }
  if (r.pos != bytes.size())
    r.fail("trailing bytes after last tensor");
  return tensors;
}

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<NamedTensorF>& tensors) {
  const std::vector<uint8_t> bytes = serialize_checkpoint(tensors);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), long(bytes.size()));
    if (!out) throw CheckpointError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<NamedTensorF> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace rgan
