#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ginv/errors.hpp"
#include "ginv/tensor.hpp"

namespace ginv {

// Binary checkpoint, little-endian throughout:
//   magic "C2GCKPT1" | u32 tensor count
//   per tensor: u16 name length | name | u8 rank | rank x u32 dims | f32 values
//   u32 config length | config text | u64 step
struct ModelCheckpoint {
  std::vector<std::pair<std::string, Tensor>> entries;
  std::string config_text;
  std::uint64_t step = 0;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : entries)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline constexpr char kMagicPrefix[] = "C2GCKPT";  // 7 chars + version byte
inline constexpr char kVersion = '1';

struct ByteWriter {
  std::vector<std::uint8_t> buf;
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u16(std::uint16_t v) { raw(&v, 2); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
};

struct ByteReader {
  const std::uint8_t* p;
  std::size_t left;
  void raw(void* out, std::size_t n) {
    if (left < n) throw TruncatedFileError("checkpoint truncated");
    std::memcpy(out, p, n);
    p += n;
    left -= n;
  }
  std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
  std::uint16_t u16() { std::uint16_t v; raw(&v, 2); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& cp) {
  detail::ByteWriter w;
  w.raw(detail::kMagicPrefix, 7);
  w.u8(static_cast<std::uint8_t>(detail::kVersion));
  w.u32(static_cast<std::uint32_t>(cp.entries.size()));
  for (const auto& [name, t] : cp.entries) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.raw(t.value().data(), t.size() * sizeof(float));
  }
  w.u32(static_cast<std::uint32_t>(cp.config_text.size()));
  w.raw(cp.config_text.data(), cp.config_text.size());
  w.u64(cp.step);
  return std::move(w.buf);
}

inline ModelCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r{bytes.data(), bytes.size()};
  char magic[7];
  r.raw(magic, 7);
  if (std::memcmp(magic, detail::kMagicPrefix, 7) != 0)
    throw BadMagicError("bad checkpoint magic");
  const char version = static_cast<char>(r.u8());
  if (version != detail::kVersion)
    throw VersionError(std::string("unsupported checkpoint version '") + version + "'");
  ModelCheckpoint cp;
  const std::uint32_t count = r.u32();
  std::unordered_set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    std::string name(len, '\0');
    r.raw(name.data(), len);
    if (!seen.insert(name).second)
      throw DuplicateNameError("duplicate tensor name: " + name);
    const std::uint8_t rank = r.u8();
    std::vector<std::size_t> shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = r.u32();
      total *= d;
    }
    std::vector<float> values(total);
    r.raw(values.data(), total * sizeof(float));
    cp.entries.emplace_back(std::move(name), Tensor::create(std::move(shape), std::move(values)));
  }
  const std::uint32_t clen = r.u32();
  cp.config_text.resize(clen);
  r.raw(cp.config_text.data(), clen);
  cp.step = r.u64();
  return cp;
}

// Atomic write: temp file in the same directory, then rename.
inline void save_checkpoint(const ModelCheckpoint& cp, const std::string& path) {
  const auto bytes = serialize_checkpoint(cp);
  const std::string tmp = path + ".tmp";
  {
    FILE* fp = std::fopen(tmp.c_str(), "wb");
    if (!fp) throw IoError("cannot write checkpoint: " + tmp);
    const std::size_t written = std::fwrite(bytes.data(), 1, bytes.size(), fp);
    std::fclose(fp);
    if (written != bytes.size()) throw IoError("short checkpoint write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline ModelCheckpoint load_checkpoint(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw FileMissingError("cannot open checkpoint: " + path);
  std::fseek(fp, 0, SEEK_END);
  const long sz = std::ftell(fp);
  std::fseek(fp, 0, SEEK_SET);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(sz));
  const std::size_t got = std::fread(bytes.data(), 1, bytes.size(), fp);
  std::fclose(fp);
  if (got != bytes.size()) throw IoError("read failed: " + path);
  return deserialize_checkpoint(bytes);
}

}  // namespace ginv
