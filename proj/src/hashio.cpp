#include "alba/hashio.hpp"

#include <cstdio>
#include <filesystem>

namespace alba {

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open for read: " + path);
  std::fseek(f, 0, SEEK_END);
  long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<unsigned char> bytes(size < 0 ? 0 : static_cast<std::size_t>(size));
  if (!bytes.empty() && std::fread(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
    std::fclose(f);
    throw IoError("short read: " + path);
  }
  std::fclose(f);
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for write: " + path);
  if (!bytes.empty() && std::fwrite(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
    std::fclose(f);
    throw IoError("short write: " + path);
  }
  std::fclose(f);
}

void write_file_text(const std::string& path, const std::string& text) {
  std::vector<unsigned char> b(text.begin(), text.end());
  write_file_bytes(path, b);
}

std::string read_file_text(const std::string& path) {
  auto b = read_file_bytes(path);
  return std::string(b.begin(), b.end());
}

void write_container(const std::string& path, const ByteWriter& w) {
  ByteWriter out;
  out.raw(w.bytes().data(), w.bytes().size());
  out.u32(w.crc());
  write_file_bytes(path, out.bytes());
}

std::vector<unsigned char> read_container(const std::string& path) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() < 4) throw ChecksumError(path + ": too short to hold a checksum");
  std::size_t payload = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + payload, 4);
  std::uint32_t computed = crc32(bytes.data(), payload);
  if (stored != computed) {
    throw ChecksumError(path + ": CRC mismatch (stored " + std::to_string(stored) +
                        ", computed " + std::to_string(computed) + ")");
  }
  bytes.resize(payload);
  return bytes;
}

}  // namespace alba
