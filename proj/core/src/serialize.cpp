#include "ticket/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace ticket {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int j = 0; j < 8; ++j) {
      c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    }
    table[i] = c;
  }
  return table;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed) {
  static const auto table = make_crc_table();
  std::uint32_t c = seed ^ 0xffffffffu;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  }
  return c ^ 0xffffffffu;
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void ByteWriter::f32(float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  u32(bits);
}

void ByteWriter::f64(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  u64(bits);
}

void ByteWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.append(s);
}

void ByteWriter::bytes(const void* p, std::size_t n) {
  buf_.append(static_cast<const char*>(p), n);
}

void ByteWriter::floats(const std::vector<float>& v) {
  u64(v.size());
  // Host is little-endian (checked at container write time); dump raw.
  bytes(v.data(), v.size() * 4);
}

void ByteWriter::tensor(const Tensor& t) {
  u32(static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) i32(d);
  floats(t.data);
}

void ByteReader::need(std::size_t n) {
  if (pos_ + n > buf_.size()) throw SerializeError("container truncated");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(buf_[pos_++]);
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
  return v;
}

float ByteReader::f32() {
  std::uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double ByteReader::f64() {
  std::uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string ByteReader::str() {
  std::uint32_t n = u32();
  need(n);
  std::string s = buf_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::vector<float> ByteReader::floats() {
  std::uint64_t n = u64();
  need(n * 4);
  std::vector<float> v(n);
  std::memcpy(v.data(), buf_.data() + pos_, n * 4);
  pos_ += n * 4;
  return v;
}

Tensor ByteReader::tensor() {
  std::uint32_t rank = u32();
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) shape[i] = i32();
  std::vector<float> data = floats();
  if (numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw SerializeError("tensor payload does not match shape " + shape_str(shape));
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_container(const std::filesystem::path& path, const char magic[4],
                     const std::string& payload) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  std::string body(magic, 4);
  body += payload;
  const std::uint32_t crc = crc32(body.data(), body.size());
  for (int i = 0; i < 4; ++i) body.push_back(static_cast<char>((crc >> (8 * i)) & 0xff));

  const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw SerializeError("cannot open " + tmp.string() + " for writing");
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw SerializeError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_container(const std::filesystem::path& path, const char magic[4]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SerializeError("cannot open " + path.string());
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (body.size() < 8) throw SerializeError("container too small: " + path.string());

  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) {
    stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(body[body.size() - 4 + i])) << (8 * i);
  }
  body.resize(body.size() - 4);
  const std::uint32_t actual = crc32(body.data(), body.size());
  if (stored != actual) {
    throw SerializeError("checksum mismatch in " + path.string() + ": stored " +
                         std::to_string(stored) + ", computed " + std::to_string(actual));
  }
  if (std::memcmp(body.data(), magic, 4) != 0) {
    throw SerializeError("bad magic in " + path.string() + ": got '" + body.substr(0, 4) + "'");
  }
  return body.substr(4);
}

}  // namespace ticket
