#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "alba/errors.hpp"

namespace alba {

// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320). Trailing checksum of every
// binary container in this project.
inline std::uint32_t crc32(const void* bytes, std::size_t n, std::uint32_t seed = 0) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

// Little-endian append-only buffer. Containers are serialized in memory first
// so the trailing CRC covers exactly the bytes written.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { raw(&v, 2); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f32s(const float* v, std::size_t n) { raw(v, n * 4); }
  void str16(const std::string& s) {
    if (s.size() > 0xFFFF) throw IoError("string too long for u16 length prefix");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s.data(), s.size());
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::uint32_t crc() const { return crc32(buf_.data(), buf_.size()); }
  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size, std::string context)
      : data_(data), size_(size), ctx_(std::move(context)) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() { return scalar<std::uint16_t>(); }
  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  float f32() { return scalar<float>(); }
  void f32s(float* out, std::size_t n) { std::memcpy(out, take(n * 4), n * 4); }
  std::string str16() {
    std::size_t n = u16();
    const unsigned char* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  template <class T>
  T scalar() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const unsigned char* take(std::size_t n) {
    if (pos_ + n > size_) throw IoError(ctx_ + ": truncated (need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ")");
    const unsigned char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string ctx_;
};

std::vector<unsigned char> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes);
void write_file_text(const std::string& path, const std::string& text);
std::string read_file_text(const std::string& path);

// Writes the payload followed by its CRC32; the standard container epilogue.
void write_container(const std::string& path, const ByteWriter& w);
// Reads a container, verifies the trailing CRC, returns payload bytes.
std::vector<unsigned char> read_container(const std::string& path);

}  // namespace alba
