#pragma once

#include <array>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "cayley/common.hpp"

// Little-endian binary serialization helpers plus CRC-32. All multi-byte
// fields in every file format of this project go through these, so the
// artifacts are portable across hosts regardless of native endianness.

namespace cayley {

namespace detail {
constexpr std::array<u32, 256> make_crc32_table() {
  std::array<u32, 256> t{};
  for (u32 i = 0; i < 256; ++i) {
    u32 c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    t[i] = c;
  }
  return t;
}
inline constexpr std::array<u32, 256> kCrc32Table = make_crc32_table();
}  // namespace detail

// Standard CRC-32 (zlib polynomial). crc32("123456789") == 0xcbf43926.
inline u32 crc32(const void* data, size_t len, u32 crc = 0) {
  const u8* p = static_cast<const u8*>(data);
  crc = ~crc;
  for (size_t i = 0; i < len; ++i) crc = detail::kCrc32Table[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
  return ~crc;
}

inline u32 crc32(std::string_view s) { return crc32(s.data(), s.size()); }

class ByteWriter {
 public:
  void put_u8(u8 v) { buf_.push_back(static_cast<char>(v)); }
  void put_u16(u16 v) { put_le(v); }
  void put_u32(u32 v) { put_le(v); }
  void put_u64(u64 v) { put_le(v); }
  void put_f32(float v) {
    u32 bits;
    std::memcpy(&bits, &v, 4);
    put_le(bits);
  }
  void put_bytes(const void* p, size_t len) {
    buf_.append(static_cast<const char*>(p), len);
  }
  // Length-prefixed string (u16 length).
  void put_str(std::string_view s) {
    if (s.size() > 0xffff) throw IoError("ByteWriter: string too long");
    put_u16(static_cast<u16>(s.size()));
    buf_.append(s);
  }

  const std::string& bytes() const { return buf_; }
  size_t size() const { return buf_.size(); }

 private:
  template <class T>
  void put_le(T v) {
    for (size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const void* data, size_t len, std::string name = "buffer")
      : p_(static_cast<const u8*>(data)), len_(len), name_(std::move(name)) {}
  explicit ByteReader(std::string_view s, std::string name = "buffer")
      : ByteReader(s.data(), s.size(), std::move(name)) {}

  u8 get_u8() { return get_le<u8>(); }
  u16 get_u16() { return get_le<u16>(); }
  u32 get_u32() { return get_le<u32>(); }
  u64 get_u64() { return get_le<u64>(); }
  float get_f32() {
    u32 bits = get_le<u32>();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  void get_bytes(void* dst, size_t len) {
    need(len);
    std::memcpy(dst, p_ + pos_, len);
    pos_ += len;
  }
  std::string get_str() {
    u16 n = get_u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
    pos_ += n;
    return s;
  }

  size_t pos() const { return pos_; }
  size_t remaining() const { return len_ - pos_; }
  void need(size_t n) const {
    if (len_ - pos_ < n)
      throw ChecksumError(name_ + ": truncated (need " + std::to_string(n) + " bytes at offset " +
                          std::to_string(pos_) + ", have " + std::to_string(len_ - pos_) + ")");
  }

 private:
  template <class T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  const u8* p_;
  size_t len_;
  size_t pos_ = 0;
  std::string name_;
};

// Whole-file helpers.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view data);
void write_file_atomic(const std::string& path, std::string_view data);

}  // namespace cayley
