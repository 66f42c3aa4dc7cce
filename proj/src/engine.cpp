#include "blocktx/engine.hpp"

#include <algorithm>
#include <stdexcept>

namespace blocktx {

namespace {
// Internal control-flow signal: the current attempt hit a latch conflict
// and was failed by the operational scheduler.
struct OpRetrySignal {};
}  // namespace

const Bytes& OpHandle::read(BlockId block) {
  const Bytes* content = sched_.read(ctx_, block);
  if (!content) throw OpRetrySignal{};
  return *content;
}

const Bytes& OpHandle::read_for_update(BlockId block) {
  const Bytes* content = sched_.read_for_update(ctx_, block);
  if (!content) throw OpRetrySignal{};
  return *content;
}

void OpHandle::write(BlockId block, ByteView data) {
  if (!sched_.write(ctx_, block, data)) throw OpRetrySignal{};
}

std::size_t OpHandle::block_size() const { return sched_.block_size(); }
std::size_t OpHandle::capacity() const { return sched_.capacity(); }

Engine::Engine(EngineConfig config)
    : config_(config),
      store_(config.block_size, config.capacity),
      latches_(config.capacity),
      op_sched_(store_, latches_),
      tx_sched_(registry_, config.mode == SchedulerMode::Extended, !config.disable_counter_check),
      log_(config.log_full) {
  if (config_.detector_period.count() > 0) {
    detector_ = std::thread([this] {
      std::unique_lock guard(detector_mutex_);
      while (!detector_cv_.wait_for(guard, config_.detector_period,
                                    [this] { return stop_detector_; })) {
        // Victims surface (and are counted) on their own session thread.
        tx_sched_.detect_and_mark();
      }
    });
  }
}

Engine::~Engine() {
  {
    std::lock_guard guard(detector_mutex_);
    stop_detector_ = true;
  }
  detector_cv_.notify_all();
  if (detector_.joinable()) detector_.join();
}

OpType Engine::register_operation(const std::string& name, OpProgram program) {
  if (program_ids_.contains(name)) throw std::invalid_argument("operation name already registered");
  programs_.emplace_back(name, std::move(program));
  OpType id = static_cast<OpType>(programs_.size());
  program_ids_[name] = id;
  return id;
}

OpType Engine::op_type(const std::string& name) const {
  auto it = program_ids_.find(name);
  if (it == program_ids_.end()) throw std::invalid_argument("unknown operation name: " + name);
  return it->second;
}

const std::string& Engine::op_name(OpType type) const {
  if (type == kInvalidOpType || type > programs_.size())
    throw std::invalid_argument("unknown op type");
  return programs_[type - 1].first;
}

const OpProgram& Engine::program(OpType type) const {
  if (type == kInvalidOpType || type > programs_.size())
    throw std::invalid_argument("unknown op type");
  return programs_[type - 1].second;
}

void Engine::add_commutativity(OpType a, OpType b, ArgMatcher matcher) {
  op_name(a);
  op_name(b);  // validates both types
  registry_.add_commutativity(a, b, std::move(matcher));
}

void Engine::add_inverse(OpType op, OpType inverse_op, ArgTransform transform) {
  op_name(op);
  op_name(inverse_op);
  registry_.add_inverse(op, inverse_op, std::move(transform));
}

void Engine::begin_tx(TxId tx) {
  tx_sched_.begin_tx(tx);
  counters_.txs_started.fetch_add(1, std::memory_order_relaxed);
  log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::BeginTx, .tx = tx});
}

TxId Engine::begin_tx() {
  TxId tx = next_tx_id_.fetch_add(1, std::memory_order_relaxed);
  begin_tx(tx);
  return tx;
}

TxOutcome Engine::end_tx(TxId tx) {
  TransactionContext* tc = tx_sched_.find_tx(tx);
  if (!tc) throw std::invalid_argument("end_tx: unknown transaction");
  if (tc->status == TxStatus::Aborted) {
    log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::EndTx, .tx = tx});
    tx_sched_.erase_tx(tx);
    return TxOutcome::Aborted;
  }
  if (tc->status != TxStatus::Active) throw std::logic_error("end_tx: transaction not endable");
  tx_sched_.release_all(tx);
  tc->status = TxStatus::Committed;
  counters_.txs_committed.fetch_add(1, std::memory_order_relaxed);
  log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::Commit, .tx = tx});
  log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::EndTx, .tx = tx});
  tx_sched_.erase_tx(tx);
  return TxOutcome::Committed;
}

void Engine::abort_tx(TxId tx) {
  TransactionContext* tc = tx_sched_.find_tx(tx);
  if (!tc) throw std::invalid_argument("abort_tx: unknown transaction");
  if (tc->status == TxStatus::Active) {
    abort_transaction(*tc);
  } else if (tc->status != TxStatus::Aborted) {
    throw std::logic_error("abort_tx: transaction not abortable");
  }
  tx_sched_.erase_tx(tx);
}

OpResult Engine::execute(TxId tx, OpType op_type, ByteView args) {
  TransactionContext* tc = tx_sched_.find_tx(tx);
  if (!tc) throw std::invalid_argument("execute: unknown transaction");
  program(op_type);  // validates the type
  if (tc->status == TxStatus::Aborted) return OpResult{OpResult::Status::TxAborted, {}, 0};
  if (tc->status != TxStatus::Active) throw std::logic_error("execute: transaction not active");

  OpId op_id = tc->next_op++;
  log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::BeginOp,
                            .tx = tx,
                            .op = op_id,
                            .op_type = op_type,
                            .args = Bytes(args.begin(), args.end())});
  InvocationResult r = run_operation(*tc, op_id, op_type, args, /*inverse=*/false);
  if (!r.ok) {
    abort_transaction(*tc);
    return OpResult{OpResult::Status::TxAborted, {}, r.retries};
  }
  return OpResult{OpResult::Status::Ok, std::move(r.value), r.retries};
}

Engine::InvocationResult Engine::run_operation(TransactionContext& tc, OpId op_id, OpType type,
                                               ByteView args, bool inverse) {
  const OpProgram& prog = program(type);
  ImmunitySet immunity;
  std::set<RWAction> failed_actions;
  std::set<RWAction> issued_actions;
  std::uint32_t retries = 0;
  std::uint32_t clearing_failures = 0;

  for (;;) {
    OperationContext ctx;
    ctx.tx = tc.id;
    ctx.op = op_id;
    ctx.op_type = type;
    ctx.inverse = inverse;
    ctx.immunity = &immunity;
    op_sched_.begin_op(ctx);

    Bytes value;
    bool attempt_failed = false;
    try {
      OpHandle handle(op_sched_, ctx);
      value = prog(handle, args);
    } catch (const OpRetrySignal&) {
      attempt_failed = true;
    } catch (...) {
      // Program error: clean up the attempt and surface it unchanged.
      op_sched_.release_all(ctx);
      log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::EndOpFail, .tx = tc.id, .op = op_id});
      throw;
    }
    issued_actions.insert(ctx.issued.begin(), ctx.issued.end());

    if (attempt_failed) {
      // Latches were already released when the conflict failed the attempt.
      counters_.op_failures.fetch_add(1, std::memory_order_relaxed);
      if (!failed_actions.insert(ctx.failed_action).second) {
        // Progressiveness guarantee broken: the same action failed twice.
        counters_.progressiveness_violations.fetch_add(1, std::memory_order_relaxed);
      }
      log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::EndOpFail, .tx = tc.id, .op = op_id});
      ++retries;
      counters_.op_retries.fetch_add(1, std::memory_order_relaxed);
      continue;
    }

    // Clearing phase: recoverability check before anything becomes visible.
    std::vector<TxId> blockers =
        tx_sched_.uncommitted_blockers(tc.id, type, args, ctx.accessed);
    if (!blockers.empty()) {
      op_sched_.release_all(ctx);
      log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::EndOpFail, .tx = tc.id, .op = op_id});
      if (!inverse) {
        counters_.uncommitted_data_aborts.fetch_add(1, std::memory_order_relaxed);
        return InvocationResult{false, AbortReason::UncommittedData, {}, retries};
      }
      // An aborting transaction cannot abort again: fail the inverse
      // operation and retry until the blockers resolve, displacing any
      // blocker that is itself parked in a lock queue.
      ++retries;
      ++clearing_failures;
      counters_.inverse_clearing_retries.fetch_add(1, std::memory_order_relaxed);
      if (clearing_failures >= 2) tx_sched_.displace_waiting(blockers);
      std::this_thread::sleep_for(std::chrono::microseconds(100));
      continue;
    }

    if (inverse) {
      // Inverse operations take their locks before publishing, without
      // waiting, so a failed attempt leaves no published state behind.
      std::vector<std::pair<BlockId, LockMode>> wanted;
      wanted.reserve(ctx.accessed.size());
      for (const auto& [block, access] : ctx.accessed) {
        wanted.emplace_back(block, ctx.lock_mode(block));
      }
      std::vector<TxId> lock_blockers = tx_sched_.try_lock_all(tc.id, type, args, wanted);
      if (!lock_blockers.empty()) {
        op_sched_.release_all(ctx);
        log_.append(
            ScheduleEvent{.kind = ScheduleEvent::Kind::EndOpFail, .tx = tc.id, .op = op_id});
        ++retries;
        ++clearing_failures;
        counters_.inverse_clearing_retries.fetch_add(1, std::memory_order_relaxed);
        if (clearing_failures >= 2) tx_sched_.displace_waiting(lock_blockers);
        std::this_thread::sleep_for(std::chrono::microseconds(100));
        continue;
      }
    }

    store_.publish(ctx.ws);
    tx_sched_.note_published(tc.id, type, args, ctx.ws);
    if (!inverse) {
      tc.history.push_back(UndoRecord{type, Bytes(args.begin(), args.end()),
                                      std::move(ctx.ws.before_images)});
    }

    std::vector<AccessRecord> records = op_sched_.clearing_unlatch(ctx);
    for (const AccessRecord& rec : records) {
      log_.append(ScheduleEvent{
          .kind = ScheduleEvent::Kind::Action,
          .tx = tc.id,
          .op = op_id,
          .block = rec.block,
          .mode = rec.mode == LockMode::Exclusive ? AccessMode::Write : AccessMode::Read,
          .latch_snapshot = rec.latch_snapshot});
    }

    if (hooks_.before_lock_phase) hooks_.before_lock_phase(tc.id, op_id);
    if (!ctx.held.empty()) {
      counters_.phase_order_violations.fetch_add(1, std::memory_order_relaxed);
    }

    LockResult lock_result;
    if (inverse) {
      // Locks are already held; only the counters need applying, and an
      // order gap cannot abort a transaction that is already aborting.
      tx_sched_.apply_counters_relaxed(records);
      lock_result = LockResult::Granted;
    } else {
      lock_result = tx_sched_.lock_phase(tc.id, type, args, records);
    }

    if (lock_result == LockResult::Granted) {
      for (const AccessRecord& rec : records) {
        log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::LockAcquired,
                                  .tx = tc.id,
                                  .op = op_id,
                                  .block = rec.block,
                                  .lock_mode = rec.mode});
      }
      log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::EndOpOk,
                                .tx = tc.id,
                                .op = op_id,
                                .result = value});
      counters_.ops_completed.fetch_add(1, std::memory_order_relaxed);
      if (!inverse) {
        if (failed_actions.size() > issued_actions.size()) {
          counters_.progressiveness_violations.fetch_add(1, std::memory_order_relaxed);
        }
        bump_max_retries(retries);
      }
      return InvocationResult{true, AbortReason::Client, std::move(value), retries};
    }

    log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::EndOpFail, .tx = tc.id, .op = op_id});
    if (lock_result == LockResult::CounterGap) {
      counters_.counter_gap_aborts.fetch_add(1, std::memory_order_relaxed);
      return InvocationResult{false, AbortReason::CounterGap, {}, retries};
    }
    counters_.deadlock_victims.fetch_add(1, std::memory_order_relaxed);
    return InvocationResult{false, AbortReason::Deadlock, {}, retries};
  }
}

void Engine::abort_transaction(TransactionContext& tc) {
  tc.status = TxStatus::Aborting;
  // Undo in reverse invocation order: inverse operation when declared,
  // physical before-images otherwise.
  for (auto it = tc.history.rbegin(); it != tc.history.rend(); ++it) {
    if (auto rule = registry_.inverse_of(it->op_type)) {
      Bytes inv_args = rule->transform(it->args);
      OpId op_id = tc.next_op++;
      log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::BeginOp,
                                .tx = tc.id,
                                .op = op_id,
                                .op_type = rule->inverse_op,
                                .args = inv_args});
      run_operation(tc, op_id, rule->inverse_op, inv_args, /*inverse=*/true);
    } else {
      store_.restore(it->before_images);
    }
  }
  tc.history.clear();
  tx_sched_.release_all(tc.id);
  tc.status = TxStatus::Aborted;
  counters_.txs_aborted.fetch_add(1, std::memory_order_relaxed);
  log_.append(ScheduleEvent{.kind = ScheduleEvent::Kind::AbortTx, .tx = tc.id});
}

void Engine::bump_max_retries(std::uint64_t retries) {
  std::uint64_t cur = counters_.max_retries.load(std::memory_order_relaxed);
  while (retries > cur &&
         !counters_.max_retries.compare_exchange_weak(cur, retries, std::memory_order_relaxed)) {
  }
}

EngineStats Engine::stats() const {
  EngineStats s;
  s.txs_started = counters_.txs_started.load(std::memory_order_relaxed);
  s.txs_committed = counters_.txs_committed.load(std::memory_order_relaxed);
  s.txs_aborted = counters_.txs_aborted.load(std::memory_order_relaxed);
  s.deadlock_victims = counters_.deadlock_victims.load(std::memory_order_relaxed);
  s.counter_gap_aborts = counters_.counter_gap_aborts.load(std::memory_order_relaxed);
  s.uncommitted_data_aborts = counters_.uncommitted_data_aborts.load(std::memory_order_relaxed);
  s.ops_completed = counters_.ops_completed.load(std::memory_order_relaxed);
  s.op_failures = counters_.op_failures.load(std::memory_order_relaxed);
  s.op_retries = counters_.op_retries.load(std::memory_order_relaxed);
  s.max_retries = counters_.max_retries.load(std::memory_order_relaxed);
  s.inverse_clearing_retries = counters_.inverse_clearing_retries.load(std::memory_order_relaxed);
  s.progressiveness_violations =
      counters_.progressiveness_violations.load(std::memory_order_relaxed);
  s.phase_order_violations = counters_.phase_order_violations.load(std::memory_order_relaxed);
  return s;
}

}  // namespace blocktx
