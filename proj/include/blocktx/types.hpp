#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace blocktx {

using BlockId = std::uint64_t;
using TxId = std::uint64_t;
using OpId = std::uint64_t;
using OpType = std::uint32_t;

constexpr OpType kInvalidOpType = 0;

using Bytes = std::vector<std::byte>;
using ByteView = std::span<const std::byte>;

enum class AccessMode : std::uint8_t { Read, Write };

enum class LockMode : std::uint8_t { Shared, Exclusive };

// A single read or write of one block: the unit of conflict detection.
struct RWAction {
  BlockId block = 0;
  AccessMode mode = AccessMode::Read;

  friend auto operator<=>(const RWAction&, const RWAction&) = default;
};

inline char mode_char(AccessMode m) { return m == AccessMode::Read ? 'R' : 'W'; }
inline char mode_char(LockMode m) { return m == LockMode::Shared ? 'S' : 'X'; }

std::string to_hex(ByteView data);
Bytes from_hex(const std::string& hex);

// Little-endian fixed-width scalar packing, used for op arguments and
// page fields so that logs and replays are byte-stable across runs.
void put_u64(std::span<std::byte> dst, std::size_t off, std::uint64_t v);
std::uint64_t get_u64(ByteView src, std::size_t off);
void put_u32(std::span<std::byte> dst, std::size_t off, std::uint32_t v);
std::uint32_t get_u32(ByteView src, std::size_t off);
void put_u16(std::span<std::byte> dst, std::size_t off, std::uint16_t v);
std::uint16_t get_u16(ByteView src, std::size_t off);

}  // namespace blocktx
