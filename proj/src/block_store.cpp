#include "blocktx/block_store.hpp"

#include <cstring>
#include <stdexcept>

namespace blocktx {

BlockStore::BlockStore(std::size_t block_size, std::size_t capacity)
    : block_size_(block_size),
      capacity_(capacity),
      data_(block_size * capacity),
      stripes_(std::make_unique<std::mutex[]>(kStripes)) {
  if (block_size < 64) throw std::invalid_argument("block_size must be >= 64");
  if (capacity < 1) throw std::invalid_argument("capacity must be >= 1");
}

std::mutex& BlockStore::stripe(BlockId block) const { return stripes_[block % kStripes]; }

void BlockStore::check_range(BlockId block) const {
  if (block >= capacity_) throw std::out_of_range("block id out of range");
}

void BlockStore::read(BlockId block, std::span<std::byte> out) const {
  check_range(block);
  std::lock_guard guard(stripe(block));
  std::memcpy(out.data(), data_.data() + block * block_size_, block_size_);
}

Bytes BlockStore::read(BlockId block) const {
  Bytes out(block_size_);
  read(block, out);
  return out;
}

void BlockStore::publish(const Workspace& ws) {
  for (const auto& [block, page] : ws.pages) {
    check_range(block);
    if (page.size() != block_size_) throw std::logic_error("page size mismatch");
    std::lock_guard guard(stripe(block));
    std::memcpy(data_.data() + block * block_size_, page.data(), block_size_);
  }
}

void BlockStore::restore(const std::map<BlockId, Bytes>& images) {
  for (const auto& [block, image] : images) {
    check_range(block);
    if (image.size() != block_size_) throw std::logic_error("image size mismatch");
    std::lock_guard guard(stripe(block));
    std::memcpy(data_.data() + block * block_size_, image.data(), block_size_);
  }
}

}  // namespace blocktx
