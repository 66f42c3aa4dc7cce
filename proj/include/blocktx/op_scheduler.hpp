#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "blocktx/block_store.hpp"
#include "blocktx/latch_table.hpp"
#include "blocktx/types.hpp"

namespace blocktx {

// Actions an operation invocation has failed on. They are latched upfront
// on every retry, so the same failure cannot recur. A write entry subsumes
// the read entry for the same block.
class ImmunitySet {
 public:
  void add(RWAction action);
  bool contains(RWAction action) const;
  std::size_t size() const { return actions_.size(); }
  bool empty() const { return actions_.empty(); }

  // Ascending block order, write-deduplicated: the early-latching schedule.
  std::vector<RWAction> latch_plan() const;

 private:
  std::set<RWAction> actions_;
};

enum class OpPhase : std::uint8_t { EarlyLatching, Execution, Clearing, Done };

// One attempt of a data operation: confined to a single worker.
struct OperationContext {
  TxId tx = 0;
  OpId op = 0;
  OpType op_type = kInvalidOpType;
  bool inverse = false;  // undo-path invocation of an aborting transaction

  ImmunitySet* immunity = nullptr;
  OpPhase phase = OpPhase::EarlyLatching;

  std::map<BlockId, AccessMode> held;  // latches currently held

  struct Access {
    bool written = false;
    bool for_update = false;
  };
  std::map<BlockId, Access> accessed;  // blocks touched this attempt

  Workspace ws;
  std::map<BlockId, Bytes> read_cache;

  std::set<RWAction> issued;  // distinct latch requests, for the retry bound
  bool failed = false;
  RWAction failed_action{};

  std::size_t early_progress = 0;  // resumable early latching (tests)

  LockMode lock_mode(BlockId block) const {
    const Access& a = accessed.at(block);
    return (a.written || a.for_update) ? LockMode::Exclusive : LockMode::Shared;
  }
};

// Per-block access record handed to the transactional scheduler after the
// clearing phase, carrying the latch-counter snapshot taken at release.
struct AccessRecord {
  BlockId block;
  LockMode mode;
  std::uint64_t latch_snapshot;
};

// The operational CC tier: serializes data operations over r/w actions via
// two-phase latching with early latching and early abortion. Failures are
// normal control flow; the engine retries the operation with a grown
// immunity set until it succeeds.
class OpScheduler {
 public:
  OpScheduler(BlockStore& store, LatchTable& latches) : store_(store), latches_(latches) {}

  // Early-latching phase: latches the immunity set in ascending block order,
  // waiting as needed, then enters the execution phase. Cannot fail.
  void begin_op(OperationContext& ctx);

  // Non-waiting variant for deterministic schedule tests: performs latch
  // acquisitions one at a time and reports whether the next one would block.
  // Call repeatedly until it returns true.
  bool begin_op_step(OperationContext& ctx);

  // Execution-phase accesses. On a latch conflict they record the action in
  // the immunity set, fail the operation, release all its latches, and
  // return nullptr/false; the caller must stop executing the attempt.
  const Bytes* read(OperationContext& ctx, BlockId block);
  const Bytes* read_for_update(OperationContext& ctx, BlockId block);
  bool write(OperationContext& ctx, BlockId block, ByteView data);

  // Releases all latches without touching counters (failed attempts and
  // uncommitted-data aborts).
  void release_all(OperationContext& ctx);

  // Clearing: snapshots and increments the latch counter of every accessed
  // block and releases its latch; early latches never touched during
  // execution are released uncounted. Caller must have published first.
  std::vector<AccessRecord> clearing_unlatch(OperationContext& ctx);

  std::uint64_t latch_count(BlockId block) const { return latches_.latch_count(block); }
  std::size_t block_size() const { return store_.block_size(); }
  std::size_t capacity() const { return store_.capacity(); }

 private:
  const Bytes* visible(OperationContext& ctx, BlockId block);
  const Bytes* read_with_mode(OperationContext& ctx, BlockId block, AccessMode mode);
  void fail_on(OperationContext& ctx, RWAction action);

  BlockStore& store_;
  LatchTable& latches_;
};

}  // namespace blocktx
