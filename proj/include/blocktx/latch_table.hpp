#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>

#include "blocktx/types.hpp"

namespace blocktx {

// Per-block reader-writer latches for the operational tier.
//
// Two acquisition disciplines exist on purpose:
//  - acquire(): blocking with FIFO hand-off, allowed only while an
//    operation early-latches its immunity set in ascending block order;
//  - try_acquire()/try_upgrade(): non-waiting, used for every access made
//    during the execution phase. A conflict (or any queued waiter, which
//    must not be bypassed) fails instantly and the caller aborts the
//    operation instead of blocking.
class LatchTable {
 public:
  LatchTable(std::size_t capacity);

  // Non-waiting acquisition; returns false on any conflict.
  bool try_acquire(BlockId block, AccessMode mode);
  // Non-waiting read->write upgrade; caller must hold the read latch.
  bool try_upgrade(BlockId block);

  // Blocking FIFO acquisition (early-latching phase only).
  void acquire(BlockId block, AccessMode mode);
  // Like acquire() but never waits; used by deterministic single-threaded
  // schedule tests that simulate blocking themselves.
  bool acquire_nowait(BlockId block, AccessMode mode);

  void release(BlockId block, AccessMode mode);

  // Atomically snapshots the block's latch counter, increments it, and
  // releases the latch. Returns the pre-increment value.
  std::uint64_t count_and_release(BlockId block, AccessMode mode);

  std::uint64_t latch_count(BlockId block) const;

 private:
  struct Waiter {
    AccessMode mode;
    bool granted = false;
  };

  struct Latch {
    mutable std::mutex m;
    std::condition_variable cv;
    int readers = 0;
    bool writer = false;
    std::deque<Waiter*> queue;
    std::uint64_t count = 0;

    bool holders_allow(AccessMode mode) const {
      if (mode == AccessMode::Read) return !writer;
      return !writer && readers == 0;
    }
    void grant_holder(AccessMode mode) {
      if (mode == AccessMode::Read)
        ++readers;
      else
        writer = true;
    }
    // FIFO hand-off: grant from the head while compatible.
    void drain_queue() {
      while (!queue.empty()) {
        Waiter* w = queue.front();
        if (!holders_allow(w->mode)) break;
        grant_holder(w->mode);
        w->granted = true;
        queue.pop_front();
      }
    }
  };

  Latch& latch(BlockId block) const;

  std::unique_ptr<Latch[]> latches_;
  std::size_t capacity_;
};

}  // namespace blocktx
