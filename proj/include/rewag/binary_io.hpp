#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rewag/errors.hpp"

namespace rewag {

/// CRC-64/XZ (reflected poly 0xC96C5795D7870F42, init/xorout all-ones).
inline std::uint64_t crc64(const unsigned char* data, std::size_t len,
                           std::uint64_t crc = 0) {
  static const std::array<std::uint64_t, 256> table = [] {
    std::array<std::uint64_t, 256> t{};
    for (std::uint64_t i = 0; i < 256; ++i) {
      std::uint64_t c = i;
      for (int k = 0; k < 8; ++k) {
        c = (c & 1) ? (c >> 1) ^ 0xC96C5795D7870F42ull : c >> 1;
      }
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (std::size_t i = 0; i < len; ++i) {
    crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  }
  return ~crc;
}

inline std::uint64_t crc64(const std::vector<unsigned char>& data) {
  return crc64(data.data(), data.size());
}

/// Little-endian append-only byte sink.
class ByteWriter {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* p, std::size_t n) {
    buf_.insert(buf_.end(), reinterpret_cast<const unsigned char*>(p),
                reinterpret_cast<const unsigned char*>(p) + n);
  }
  void magic(const char (&m)[5]) { bytes(m, 4); }

  const std::vector<unsigned char>& data() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> buf_;
};

/// Little-endian cursor over a byte buffer. Throws CorruptStoreError on
/// reads past the end, which is how truncated files surface.
class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& buf) : buf_(buf) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  bool check_magic(const char (&m)[5]) {
    if (buf_.size() - pos_ < 4) throw CorruptStoreError("truncated header");
    const bool ok = std::memcmp(buf_.data() + pos_, m, 4) == 0;
    pos_ += 4;
    return ok;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  std::uint64_t get(int n) {
    if (remaining() < static_cast<std::size_t>(n)) {
      throw CorruptStoreError("truncated file");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }

  const std::vector<unsigned char>& buf_;
  std::size_t pos_ = 0;
};

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return buf;
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace rewag
