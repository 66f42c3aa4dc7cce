#include "blocktx/latch_table.hpp"

#include <stdexcept>

namespace blocktx {

LatchTable::LatchTable(std::size_t capacity)
    : latches_(std::make_unique<Latch[]>(capacity)), capacity_(capacity) {}

LatchTable::Latch& LatchTable::latch(BlockId block) const {
  if (block >= capacity_) throw std::out_of_range("latch block id out of range");
  return latches_[block];
}

bool LatchTable::try_acquire(BlockId block, AccessMode mode) {
  Latch& l = latch(block);
  std::lock_guard guard(l.m);
  if (!l.queue.empty()) return false;  // never bypass early-latching waiters
  if (!l.holders_allow(mode)) return false;
  l.grant_holder(mode);
  return true;
}

bool LatchTable::try_upgrade(BlockId block) {
  Latch& l = latch(block);
  std::lock_guard guard(l.m);
  if (!l.queue.empty()) return false;
  if (l.writer || l.readers != 1) return false;
  l.readers = 0;
  l.writer = true;
  return true;
}

void LatchTable::acquire(BlockId block, AccessMode mode) {
  Latch& l = latch(block);
  std::unique_lock guard(l.m);
  if (l.queue.empty() && l.holders_allow(mode)) {
    l.grant_holder(mode);
    return;
  }
  Waiter w{mode};
  l.queue.push_back(&w);
  l.cv.wait(guard, [&] { return w.granted; });
}

bool LatchTable::acquire_nowait(BlockId block, AccessMode mode) {
  Latch& l = latch(block);
  std::lock_guard guard(l.m);
  if (!l.queue.empty() || !l.holders_allow(mode)) return false;
  l.grant_holder(mode);
  return true;
}

void LatchTable::release(BlockId block, AccessMode mode) {
  Latch& l = latch(block);
  std::lock_guard guard(l.m);
  if (mode == AccessMode::Write) {
    l.writer = false;
  } else {
    --l.readers;
  }
  l.drain_queue();
  l.cv.notify_all();
}

std::uint64_t LatchTable::count_and_release(BlockId block, AccessMode mode) {
  Latch& l = latch(block);
  std::lock_guard guard(l.m);
  std::uint64_t snapshot = l.count;
  l.count += 1;
  if (mode == AccessMode::Write) {
    l.writer = false;
  } else {
    --l.readers;
  }
  l.drain_queue();
  l.cv.notify_all();
  return snapshot;
}

std::uint64_t LatchTable::latch_count(BlockId block) const {
  Latch& l = latch(block);
  std::lock_guard guard(l.m);
  return l.count;
}

}  // namespace blocktx
