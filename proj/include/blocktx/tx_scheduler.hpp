#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <unordered_map>
#include <vector>

#include "blocktx/op_scheduler.hpp"
#include "blocktx/semantics.hpp"
#include "blocktx/types.hpp"

namespace blocktx {

enum class TxStatus : std::uint8_t { Active, Aborting, Committed, Aborted };

enum class LockResult : std::uint8_t { Granted, CounterGap, Deadlock };

// Identity of one operation instance, kept with lock holds and
// uncommitted-writer entries so commutativity can be judged per instance.
struct OpEntry {
  OpType op_type = kInvalidOpType;
  Bytes args;
};

struct UndoRecord {
  OpType op_type;
  Bytes args;
  std::map<BlockId, Bytes> before_images;
};

// Session-confined transaction state. Exactly one worker drives a given
// transaction at a time; only the lock table below is shared.
struct TransactionContext {
  TxId id = 0;
  TxStatus status = TxStatus::Active;
  std::vector<UndoRecord> history;  // invocation order
  OpId next_op = 1;
};

// The transactional CC tier: strict two-phase locking on blocks, performed
// only after an operation's latches are released. Latch/lock counters keep
// the locking order consistent with the latching order; a gap aborts the
// locker. The extended mode treats locks held by registry-commutative
// operation instances as compatible.
class TxScheduler {
 public:
  TxScheduler(const SemanticsRegistry& registry, bool extended, bool counter_checks = true)
      : registry_(registry), extended_(extended), counter_checks_(counter_checks) {}

  bool extended() const { return extended_; }

  TransactionContext* begin_tx(TxId tx);
  TransactionContext* find_tx(TxId tx);
  void erase_tx(TxId tx);

  // Uncommitted-data check, run in the clearing phase before publish.
  // Returns the transactions whose published-but-uncommitted writes block
  // this operation (empty means the access is admissible).
  std::vector<TxId> uncommitted_blockers(TxId tx, OpType op_type, ByteView args,
                                         const std::map<BlockId, OperationContext::Access>& accessed);

  // Records published-but-uncommitted writes of an operation.
  void note_published(TxId tx, OpType op_type, ByteView args, const Workspace& ws);

  // Locking phase of a completed operation, ascending block order, waiting
  // in FIFO queues. Applies the counter-consistency check after each grant.
  LockResult lock_phase(TxId tx, OpType op_type, ByteView args,
                        const std::vector<AccessRecord>& records);

  // Non-waiting bulk acquisition used by inverse operations before publish:
  // grants what it can, returns the transactions blocking the rest (empty
  // means every lock is now held).
  std::vector<TxId> try_lock_all(TxId tx, OpType op_type, ByteView args,
                                 const std::vector<std::pair<BlockId, LockMode>>& wanted);

  // Counter application without abort semantics, for operations of an
  // already-aborting transaction (their locks were acquired upfront).
  void apply_counters_relaxed(const std::vector<AccessRecord>& records);

  // Marks any queued lock request of the given transactions as a deadlock
  // victim, waking it. Used to break abort-path waits; returns the number
  // of tickets displaced.
  std::size_t displace_waiting(const std::vector<TxId>& txs);

  // Releases every lock and uncommitted-writer entry of the transaction.
  void release_all(TxId tx);

  // Periodic detector pass (backstop; enqueue-time detection already covers
  // cycles). Returns the number of victims marked.
  std::size_t detect_and_mark();

  std::uint64_t lock_count(BlockId block) const;
  std::size_t skip_set_size(BlockId block) const;
  bool has_waiters(BlockId block) const;
  std::size_t held_lock_count(TxId tx) const;

 private:
  struct Ticket {
    TxId tx;
    BlockId block;
    LockMode mode;
    OpEntry entry;
    std::uint64_t seq;
    bool granted = false;
    bool victim = false;
  };

  struct Holder {
    LockMode mode = LockMode::Shared;
    std::vector<OpEntry> entries;
  };

  struct BlockLockState {
    std::uint64_t lock_count = 0;
    std::set<std::uint64_t> skip_set;  // latch slots of aborted out-of-order lockers
    std::map<TxId, Holder> holders;
    std::deque<Ticket*> queue;
    std::map<TxId, std::vector<OpEntry>> uncommitted;
  };

  BlockLockState& state(BlockId block);
  const BlockLockState* state_if_present(BlockId block) const;

  bool instance_commutative(const OpEntry& a, const OpEntry& b) const;
  bool holder_blocks(const Holder& holder, LockMode mode, const OpEntry& entry) const;
  bool compatible_with_holders(const BlockLockState& st, TxId tx, LockMode mode,
                               const OpEntry& entry) const;
  bool tickets_conflict(const Ticket& a, const Ticket& b) const;
  void record_grant(BlockLockState& st, BlockId block, TxId tx, LockMode mode,
                    const OpEntry& entry);
  void drain_block(BlockLockState& st);
  void consume_slot(BlockLockState& st, std::uint64_t snapshot);
  void fill_gaps_locked(const std::vector<AccessRecord>& records, std::size_t from);
  std::map<TxId, std::set<TxId>> waits_for_edges() const;
  bool closes_cycle(TxId requester) const;

  const SemanticsRegistry& registry_;
  bool extended_;
  bool counter_checks_;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::unordered_map<BlockId, BlockLockState> blocks_;
  std::map<TxId, std::map<BlockId, LockMode>> held_;
  std::map<TxId, std::set<BlockId>> dirty_;  // blocks with uncommitted entries
  std::map<TxId, std::unique_ptr<TransactionContext>> txs_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace blocktx
