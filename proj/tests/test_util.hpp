#pragma once

#include <string>

#include "blocktx/engine.hpp"

namespace blocktx::testutil {

inline EngineConfig small_config(SchedulerMode mode = SchedulerMode::Basic) {
  EngineConfig cfg;
  cfg.block_size = 256;
  cfg.capacity = 1024;
  cfg.mode = mode;
  cfg.log_full = true;
  return cfg;
}

// args: block u64 -> first 8 bytes of the block
inline Bytes raw_read_program(OpHandle& h, ByteView args) {
  const Bytes& page = h.read(get_u64(args, 0));
  return Bytes(page.begin(), page.begin() + 8);
}

// args: block u64, value u64 -> stores value at offset 0
inline Bytes raw_write_program(OpHandle& h, ByteView args) {
  BlockId block = get_u64(args, 0);
  Bytes page = h.read_for_update(block);
  put_u64(page, 0, get_u64(args, 8));
  h.write(block, page);
  return {};
}

struct RawOps {
  OpType read = kInvalidOpType;
  OpType write = kInvalidOpType;
};

inline RawOps attach_raw(Engine& engine) {
  RawOps ops;
  ops.read = engine.register_operation("rawRead", raw_read_program);
  ops.write = engine.register_operation("rawWrite", raw_write_program);
  return ops;
}

inline Bytes block_arg(std::uint64_t block) {
  Bytes out(8);
  put_u64(out, 0, block);
  return out;
}

inline Bytes write_args(std::uint64_t block, std::uint64_t value) {
  Bytes out(16);
  put_u64(out, 0, block);
  put_u64(out, 8, value);
  return out;
}

}  // namespace blocktx::testutil
