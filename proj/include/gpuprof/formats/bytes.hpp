#pragma once

// Little-endian fixed-width encoding helpers shared by the binary formats.

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpuprof/error.hpp"

namespace gpuprof::formats {

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
 public:
  explicit ByteWriter(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void raw(std::span<const std::uint8_t> s) { out_.insert(out_.end(), s.begin(), s.end()); }
  /// u16 length prefix followed by the bytes.
  void str16(std::string_view s) {
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }

  std::size_t size() const { return out_.size(); }
  /// Overwrites a previously written u64 at `pos`.
  void patch_u64(std::size_t pos, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_[pos + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }

 private:
  Bytes& out_;
  void put(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

/// Bounds-checked reader; every failure throws CorruptFile with the byte
/// offset where reading failed.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in, std::size_t pos = 0)
      : in_(in), pos_(pos) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::string str16() {
    std::size_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void expect_magic(std::string_view magic) {
    need(magic.size());
    if (std::memcmp(in_.data() + pos_, magic.data(), magic.size()) != 0)
      throw Error(Errc::CorruptFile, "bad magic, expected " + std::string(magic), pos_);
    pos_ += magic.size();
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

  std::size_t pos() const { return pos_; }
  void seek(std::size_t pos) {
    if (pos > in_.size()) throw Error(Errc::CorruptFile, "seek past end", pos);
    pos_ = pos;
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  std::span<const std::uint8_t> data() const { return in_; }

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error(Errc::CorruptFile, "truncated data", pos_);
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_;

  std::uint64_t get(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= std::uint64_t(in_[pos_ + i]) << (8 * i);
    pos_ += width;
    return v;
  }
};

/// Unchecked little-endian loads for hot lookup paths over validated data.
inline std::uint16_t load_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t load_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
inline std::uint64_t load_u64(const std::uint8_t* p) {
  return std::uint64_t(load_u32(p)) | (std::uint64_t(load_u32(p + 4)) << 32);
}

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
std::string read_text(const std::string& path);
void write_text(const std::string& path, std::string_view text);

}  // namespace gpuprof::formats
