// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "tempocoh/error.hpp"

namespace tempocoh {

namespace {

constexpr char kMagic[4] = {'T', 'C', 'M', '1'};

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Cursor {
  const unsigned char* data;
  size_t len;
  size_t pos = 0;
  const std::string& path;

  void need(size_t n, const char* what) {
    if (pos + n > len) {
      throw IoError(std::string("truncated ") + what + " at byte offset " + std::to_string(pos) + " in " + path);
    }
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::string bytes(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, 1);
  put_u64(buf, cp.meta_json.size());
  buf.append(cp.meta_json);
  put_u64(buf, cp.params.size());
  for (const auto& [name, tensor] : cp.params) {
    put_u32(buf, static_cast<uint32_t>(name.size()));
    buf.append(name);
    put_u32(buf, static_cast<uint32_t>(tensor.rank()));
    for (int64_t r = 0; r < tensor.rank(); ++r) put_u64(buf, static_cast<uint64_t>(tensor.dim(r)));
    for (int64_t i = 0; i < tensor.numel(); ++i) put_u64(buf, std::bit_cast<uint64_t>(tensor.data()[i]));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Cursor c{raw.data(), raw.size(), 0, path};
  c.need(4, "magic");
  if (std::memcmp(raw.data(), kMagic, 4) != 0) {
    throw IoError("bad checkpoint magic at byte offset 0 in " + path + " (want TCM1)");
  }
  c.pos = 4;
  uint32_t version = c.u32("version");
  if (version != 1) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " at byte offset 4 in " + path);
  }
  Checkpoint cp;
  uint64_t meta_len = c.u64("metadata length");
  cp.meta_json = c.bytes(meta_len, "metadata");
  uint64_t count = c.u64("array count");
  for (uint64_t a = 0; a < count; ++a) {
    uint32_t name_len = c.u32("array name length");
    std::string name = c.bytes(name_len, "array name");
    uint32_t rank = c.u32("array rank");
    std::vector<int64_t> dims;
    int64_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      int64_t d = static_cast<int64_t>(c.u64("array dim"));
      dims.push_back(d);
      numel *= d;
    }
    Tensor t(Shape{std::move(dims)});
    for (int64_t i = 0; i < numel; ++i) t.data()[i] = std::bit_cast<double>(c.u64("array value"));
    cp.params.emplace(std::move(name), std::move(t));
  }
  if (c.pos != c.len) {
    throw IoError("checkpoint has " + std::to_string(c.len - c.pos) + " trailing bytes at byte offset " +
                  std::to_string(c.pos) + " in " + path);
  }
  return cp;
}

}  // namespace tempocoh
