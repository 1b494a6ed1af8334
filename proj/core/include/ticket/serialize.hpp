#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ticket/tensor.hpp"

namespace ticket {

class SerializeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

/// Little-endian binary encoder for the on-disk containers.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v);
  void f64(double v);
  void str(const std::string& s);
  void bytes(const void* p, std::size_t n);
  void floats(const std::vector<float>& v);
  void tensor(const Tensor& t);
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string data) : buf_(std::move(data)) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32();
  double f64();
  std::string str();
  std::vector<float> floats();
  Tensor tensor();
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n);
  std::string buf_;
  std::size_t pos_ = 0;
};

/// Writes magic + payload + trailing CRC32 of (magic+payload), atomically via
/// a temp file rename.
void write_container(const std::filesystem::path& path, const char magic[4],
                     const std::string& payload);

/// Verifies magic and CRC, returns the payload. Throws SerializeError with the
/// observed magic/CRC on mismatch.
std::string read_container(const std::filesystem::path& path, const char magic[4]);

}  // namespace ticket
