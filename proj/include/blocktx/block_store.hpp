#pragma once

#include <map>
#include <memory>
#include <mutex>

#include "blocktx/types.hpp"

namespace blocktx {

// Private working set of one operation invocation. Pages hold the
// operation's modified images; before_images hold the shared-store
// content captured at the first write to each block.
struct Workspace {
  TxId tx = 0;
  OpId op = 0;
  std::map<BlockId, Bytes> pages;
  std::map<BlockId, Bytes> before_images;

  bool empty() const { return pages.empty(); }
  void clear() {
    pages.clear();
    before_images.clear();
  }
};

// The physical storage tier: a memory-resident flat array of fixed-size
// blocks. Individual block reads and writes are atomic; any further
// mutual exclusion is the schedulers' job.
class BlockStore {
 public:
  BlockStore(std::size_t block_size, std::size_t capacity);

  std::size_t block_size() const { return block_size_; }
  std::size_t capacity() const { return capacity_; }

  // Copies the current shared content of `block` into `out`
  // (out.size() == block_size).
  void read(BlockId block, std::span<std::byte> out) const;
  Bytes read(BlockId block) const;

  // Installs every page of `ws` into the shared store. Caller must hold
  // write latches on all pages.
  void publish(const Workspace& ws);

  // Reverts the listed blocks to the provided before-images.
  void restore(const std::map<BlockId, Bytes>& images);

 private:
  std::mutex& stripe(BlockId block) const;
  void check_range(BlockId block) const;

  std::size_t block_size_;
  std::size_t capacity_;
  Bytes data_;
  // Striped locks make single-block access atomic without a mutex per block.
  static constexpr std::size_t kStripes = 256;
  mutable std::unique_ptr<std::mutex[]> stripes_;
};

}  // namespace blocktx
