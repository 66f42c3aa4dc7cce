#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "blocktx/block_store.hpp"
#include "blocktx/latch_table.hpp"
#include "blocktx/op_scheduler.hpp"
#include "blocktx/schedule_log.hpp"
#include "blocktx/semantics.hpp"
#include "blocktx/tx_scheduler.hpp"
#include "blocktx/types.hpp"

namespace blocktx {

enum class SchedulerMode : std::uint8_t { Basic, Extended };

struct EngineConfig {
  std::size_t block_size = 4096;
  std::size_t capacity = 4096;
  SchedulerMode mode = SchedulerMode::Basic;
  std::chrono::milliseconds detector_period{100};
  std::uint64_t rng_seed = 0;
  bool log_full = false;
  // Fault injection for the schedule validator: disables the latch/lock
  // counter consistency check. Test builds only.
  bool disable_counter_check = false;
};

// Handle given to registered operation programs. It is the only channel a
// data operation has to shared state; everything lives in blocks.
class OpHandle {
 public:
  const Bytes& read(BlockId block);
  // Requests the write latch on first access, for operations that know
  // they will update the block (select-for-update style).
  const Bytes& read_for_update(BlockId block);
  void write(BlockId block, ByteView data);

  std::size_t block_size() const;
  std::size_t capacity() const;

 private:
  friend class Engine;
  OpHandle(OpScheduler& sched, OperationContext& ctx) : sched_(sched), ctx_(ctx) {}
  OpScheduler& sched_;
  OperationContext& ctx_;
};

using OpProgram = std::function<Bytes(OpHandle&, ByteView)>;

struct OpResult {
  enum class Status : std::uint8_t { Ok, TxAborted };
  Status status = Status::Ok;
  Bytes value;
  std::uint32_t retries = 0;
};

enum class TxOutcome : std::uint8_t { Committed, Aborted };

enum class AbortReason : std::uint8_t { Client, UncommittedData, CounterGap, Deadlock };

// Aggregate counters; snapshot is a plain copy.
struct EngineStats {
  std::uint64_t txs_started = 0;
  std::uint64_t txs_committed = 0;
  std::uint64_t txs_aborted = 0;
  std::uint64_t deadlock_victims = 0;
  std::uint64_t counter_gap_aborts = 0;
  std::uint64_t uncommitted_data_aborts = 0;
  std::uint64_t ops_completed = 0;
  std::uint64_t op_failures = 0;          // latch-conflict failures
  std::uint64_t op_retries = 0;           // attempts beyond the first
  std::uint64_t max_retries = 0;          // per-invocation maximum
  std::uint64_t inverse_clearing_retries = 0;
  std::uint64_t progressiveness_violations = 0;
  std::uint64_t phase_order_violations = 0;  // latch held while lock requested
};

// The engine: wires the physical store, the operational scheduler and the
// transactional scheduler behind the public transaction/operation calls,
// and drives the retry and abort plumbing between them.
class Engine {
 public:
  explicit Engine(EngineConfig config);
  ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const EngineConfig& config() const { return config_; }

  // -- setup ---------------------------------------------------------------
  OpType register_operation(const std::string& name, OpProgram program);
  OpType op_type(const std::string& name) const;
  const std::string& op_name(OpType type) const;
  void add_commutativity(OpType a, OpType b, ArgMatcher matcher = {});
  void add_inverse(OpType op, OpType inverse_op, ArgTransform transform);
  const SemanticsRegistry& registry() const { return registry_; }

  // -- transaction lifecycle ------------------------------------------------
  void begin_tx(TxId tx);
  TxId begin_tx();  // engine-assigned id
  TxOutcome end_tx(TxId tx);
  void abort_tx(TxId tx);
  OpResult execute(TxId tx, OpType op_type, ByteView args);

  // -- introspection ---------------------------------------------------------
  EngineStats stats() const;
  std::string export_log() const { return log_.text(); }
  std::vector<ScheduleEvent> log_events() const { return log_.snapshot(); }
  BlockStore& store() { return store_; }
  const BlockStore& store() const { return store_; }

  std::uint64_t latch_count(BlockId block) const { return latches_.latch_count(block); }
  std::uint64_t lock_count(BlockId block) const { return tx_sched_.lock_count(block); }
  std::size_t skip_set_size(BlockId block) const { return tx_sched_.skip_set_size(block); }
  bool lock_has_waiters(BlockId block) const { return tx_sched_.has_waiters(block); }

  struct TestHooks {
    // Runs between an operation's clearing phase and its locking phase.
    std::function<void(TxId, OpId)> before_lock_phase;
  };
  void set_test_hooks(TestHooks hooks) { hooks_ = std::move(hooks); }

 private:
  struct InvocationResult {
    bool ok = false;
    AbortReason reason = AbortReason::Client;
    Bytes value;
    std::uint32_t retries = 0;
  };

  InvocationResult run_operation(TransactionContext& tc, OpId op_id, OpType type, ByteView args,
                                 bool inverse);
  void abort_transaction(TransactionContext& tc);
  const OpProgram& program(OpType type) const;
  void bump_max_retries(std::uint64_t retries);

  EngineConfig config_;
  BlockStore store_;
  LatchTable latches_;
  OpScheduler op_sched_;
  SemanticsRegistry registry_;
  TxScheduler tx_sched_;
  ScheduleLog log_;

  std::vector<std::pair<std::string, OpProgram>> programs_;
  std::unordered_map<std::string, OpType> program_ids_;

  std::atomic<TxId> next_tx_id_{1};
  TestHooks hooks_;

  struct Counters {
    std::atomic<std::uint64_t> txs_started{0}, txs_committed{0}, txs_aborted{0};
    std::atomic<std::uint64_t> deadlock_victims{0}, counter_gap_aborts{0},
        uncommitted_data_aborts{0};
    std::atomic<std::uint64_t> ops_completed{0}, op_failures{0}, op_retries{0}, max_retries{0};
    std::atomic<std::uint64_t> inverse_clearing_retries{0};
    std::atomic<std::uint64_t> progressiveness_violations{0}, phase_order_violations{0};
  };
  mutable Counters counters_;

  std::mutex detector_mutex_;
  std::condition_variable detector_cv_;
  bool stop_detector_ = false;
  std::thread detector_;
};

}  // namespace blocktx
