#include "blocktx/types.hpp"

#include <stdexcept>

namespace blocktx {

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  throw std::invalid_argument("bad hex digit");
}
}  // namespace

std::string to_hex(ByteView data) {
  std::string out;
  out.reserve(data.size() * 2);
  for (std::byte b : data) {
    out.push_back(kHexDigits[std::to_integer<int>(b) >> 4]);
    out.push_back(kHexDigits[std::to_integer<int>(b) & 0xf]);
  }
  return out;
}

Bytes from_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd hex length");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::byte>((hex_value(hex[2 * i]) << 4) | hex_value(hex[2 * i + 1]));
  }
  return out;
}

void put_u64(std::span<std::byte> dst, std::size_t off, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) dst[off + i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
}

std::uint64_t get_u64(ByteView src, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(std::to_integer<unsigned>(src[off + i])) << (8 * i);
  return v;
}

void put_u32(std::span<std::byte> dst, std::size_t off, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) dst[off + i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
}

std::uint32_t get_u32(ByteView src, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(std::to_integer<unsigned>(src[off + i])) << (8 * i);
  return v;
}

void put_u16(std::span<std::byte> dst, std::size_t off, std::uint16_t v) {
  dst[off] = static_cast<std::byte>(v & 0xff);
  dst[off + 1] = static_cast<std::byte>((v >> 8) & 0xff);
}

std::uint16_t get_u16(ByteView src, std::size_t off) {
  return static_cast<std::uint16_t>(std::to_integer<unsigned>(src[off]) |
                                    (std::to_integer<unsigned>(src[off + 1]) << 8));
}

}  // namespace blocktx
