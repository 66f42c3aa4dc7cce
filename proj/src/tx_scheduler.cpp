#include "blocktx/tx_scheduler.hpp"

#include <algorithm>
#include <stdexcept>

namespace blocktx {

TransactionContext* TxScheduler::begin_tx(TxId tx) {
  std::lock_guard guard(mutex_);
  auto [it, inserted] = txs_.try_emplace(tx);
  if (!inserted) throw std::invalid_argument("transaction id already live");
  it->second = std::make_unique<TransactionContext>();
  it->second->id = tx;
  return it->second.get();
}

TransactionContext* TxScheduler::find_tx(TxId tx) {
  std::lock_guard guard(mutex_);
  auto it = txs_.find(tx);
  return it == txs_.end() ? nullptr : it->second.get();
}

void TxScheduler::erase_tx(TxId tx) {
  std::lock_guard guard(mutex_);
  txs_.erase(tx);
}

TxScheduler::BlockLockState& TxScheduler::state(BlockId block) { return blocks_[block]; }

const TxScheduler::BlockLockState* TxScheduler::state_if_present(BlockId block) const {
  auto it = blocks_.find(block);
  return it == blocks_.end() ? nullptr : &it->second;
}

bool TxScheduler::instance_commutative(const OpEntry& a, const OpEntry& b) const {
  return registry_.commutative(a.op_type, a.args, b.op_type, b.args);
}

bool TxScheduler::holder_blocks(const Holder& holder, LockMode mode, const OpEntry& entry) const {
  if (mode == LockMode::Shared && holder.mode == LockMode::Shared) return false;
  if (extended_) {
    bool all_commute = true;
    for (const OpEntry& held : holder.entries) {
      if (!instance_commutative(entry, held)) {
        all_commute = false;
        break;
      }
    }
    if (all_commute) return false;
  }
  return true;
}

bool TxScheduler::compatible_with_holders(const BlockLockState& st, TxId tx, LockMode mode,
                                          const OpEntry& entry) const {
  for (const auto& [holder_tx, holder] : st.holders) {
    if (holder_tx == tx) continue;
    if (holder_blocks(holder, mode, entry)) return false;
  }
  return true;
}

bool TxScheduler::tickets_conflict(const Ticket& a, const Ticket& b) const {
  if (a.tx == b.tx) return false;
  if (a.mode == LockMode::Shared && b.mode == LockMode::Shared) return false;
  if (extended_ && instance_commutative(a.entry, b.entry)) return false;
  return true;
}

void TxScheduler::record_grant(BlockLockState& st, BlockId block, TxId tx, LockMode mode,
                               const OpEntry& entry) {
  Holder& holder = st.holders[tx];
  if (mode == LockMode::Exclusive) holder.mode = LockMode::Exclusive;
  holder.entries.push_back(entry);
  auto& held = held_[tx];
  auto [it, inserted] = held.try_emplace(block, mode);
  if (!inserted && mode == LockMode::Exclusive) it->second = LockMode::Exclusive;
}

void TxScheduler::drain_block(BlockLockState& st) {
  // Grant in FIFO order; a request may pass a stuck earlier request only if
  // the two do not conflict, so positional waiting equals conflict waiting
  // and the waits-for graph stays exact.
  std::vector<Ticket*> still_queued;
  for (auto it = st.queue.begin(); it != st.queue.end();) {
    Ticket* t = *it;
    bool blocked = t->victim || !compatible_with_holders(st, t->tx, t->mode, t->entry);
    if (!blocked) {
      for (Ticket* earlier : still_queued) {
        if (tickets_conflict(*t, *earlier)) {
          blocked = true;
          break;
        }
      }
    }
    if (blocked) {
      still_queued.push_back(t);
      ++it;
    } else {
      record_grant(st, t->block, t->tx, t->mode, t->entry);
      t->granted = true;
      it = st.queue.erase(it);
    }
  }
}

void TxScheduler::consume_slot(BlockLockState& st, std::uint64_t snapshot) {
  if (snapshot > st.lock_count) {
    st.skip_set.insert(snapshot);
    return;
  }
  if (snapshot != st.lock_count) throw std::logic_error("lock counter regression");
  st.lock_count += 1;
  while (st.skip_set.erase(st.lock_count) != 0) st.lock_count += 1;
}

void TxScheduler::fill_gaps_locked(const std::vector<AccessRecord>& records, std::size_t from) {
  for (std::size_t i = from; i < records.size(); ++i) {
    consume_slot(state(records[i].block), records[i].latch_snapshot);
  }
}

std::map<TxId, std::set<TxId>> TxScheduler::waits_for_edges() const {
  std::map<TxId, std::set<TxId>> edges;
  for (const auto& [block, st] : blocks_) {
    std::vector<const Ticket*> earlier;
    for (const Ticket* t : st.queue) {
      if (t->victim) continue;  // about to leave the queue
      for (const auto& [holder_tx, holder] : st.holders) {
        if (holder_tx == t->tx) continue;
        if (holder_blocks(holder, t->mode, t->entry)) edges[t->tx].insert(holder_tx);
      }
      for (const Ticket* e : earlier) {
        if (tickets_conflict(*t, *e)) edges[t->tx].insert(e->tx);
      }
      earlier.push_back(t);
    }
  }
  return edges;
}

bool TxScheduler::closes_cycle(TxId requester) const {
  auto edges = waits_for_edges();
  std::vector<TxId> stack;
  std::set<TxId> visited;
  if (auto it = edges.find(requester); it != edges.end()) {
    for (TxId to : it->second) {
      if (visited.insert(to).second) stack.push_back(to);
    }
  }
  while (!stack.empty()) {
    TxId cur = stack.back();
    stack.pop_back();
    if (cur == requester) return true;
    if (auto it = edges.find(cur); it != edges.end()) {
      for (TxId to : it->second) {
        if (to == requester) return true;
        if (visited.insert(to).second) stack.push_back(to);
      }
    }
  }
  return false;
}

std::vector<TxId> TxScheduler::uncommitted_blockers(
    TxId tx, OpType op_type, ByteView args,
    const std::map<BlockId, OperationContext::Access>& accessed) {
  std::lock_guard guard(mutex_);
  std::vector<TxId> blockers;
  for (const auto& [block, access] : accessed) {
    const BlockLockState* st = state_if_present(block);
    if (!st) continue;
    for (const auto& [writer_tx, entries] : st->uncommitted) {
      if (writer_tx == tx) continue;
      bool blocked = true;
      if (extended_) {
        blocked = false;
        for (const OpEntry& entry : entries) {
          if (!registry_.commutative(op_type, args, entry.op_type, entry.args)) {
            blocked = true;
            break;
          }
        }
      }
      if (blocked) blockers.push_back(writer_tx);
    }
  }
  return blockers;
}

void TxScheduler::note_published(TxId tx, OpType op_type, ByteView args, const Workspace& ws) {
  if (ws.pages.empty()) return;
  std::lock_guard guard(mutex_);
  auto& dirty = dirty_[tx];
  for (const auto& [block, page] : ws.pages) {
    state(block).uncommitted[tx].push_back(OpEntry{op_type, Bytes(args.begin(), args.end())});
    dirty.insert(block);
  }
}

LockResult TxScheduler::lock_phase(TxId tx, OpType op_type, ByteView args,
                                   const std::vector<AccessRecord>& records) {
  OpEntry entry{op_type, Bytes(args.begin(), args.end())};
  std::unique_lock guard(mutex_);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const AccessRecord& rec = records[i];
    BlockLockState& st = state(rec.block);
    auto& held = held_[tx];
    auto hit = held.find(rec.block);
    bool reentrant = hit != held.end() &&
                     (rec.mode == LockMode::Shared || hit->second == LockMode::Exclusive);
    if (reentrant) {
      st.holders[tx].entries.push_back(entry);
    } else if (compatible_with_holders(st, tx, rec.mode, entry)) {
      record_grant(st, rec.block, tx, rec.mode, entry);
    } else {
      Ticket ticket{tx, rec.block, rec.mode, entry, next_seq_++};
      st.queue.push_back(&ticket);
      if (closes_cycle(tx)) {
        // This request completed a waits-for cycle: the requester is the victim.
        st.queue.erase(std::find(st.queue.begin(), st.queue.end(), &ticket));
        drain_block(st);
        cv_.notify_all();
        fill_gaps_locked(records, i);
        return LockResult::Deadlock;
      }
      cv_.wait(guard, [&] { return ticket.granted || ticket.victim; });
      if (ticket.victim) {
        auto qit = std::find(st.queue.begin(), st.queue.end(), &ticket);
        if (qit != st.queue.end()) st.queue.erase(qit);
        drain_block(st);
        cv_.notify_all();
        fill_gaps_locked(records, i);
        return LockResult::Deadlock;
      }
    }
    if (!counter_checks_) continue;
    // Counter-consistency check: a snapshot ahead of the lock counter means
    // some earlier latcher has not locked yet, so this locker is out of
    // order and its transaction must abort. The slot is left in the skip
    // set for the in-order lockers to drain past.
    if (rec.latch_snapshot > st.lock_count) {
      st.skip_set.insert(rec.latch_snapshot);
      fill_gaps_locked(records, i + 1);
      return LockResult::CounterGap;
    }
    consume_slot(st, rec.latch_snapshot);
  }
  return LockResult::Granted;
}

std::vector<TxId> TxScheduler::try_lock_all(
    TxId tx, OpType op_type, ByteView args,
    const std::vector<std::pair<BlockId, LockMode>>& wanted) {
  OpEntry entry{op_type, Bytes(args.begin(), args.end())};
  std::lock_guard guard(mutex_);
  std::vector<TxId> blockers;
  for (const auto& [block, mode] : wanted) {
    BlockLockState& st = state(block);
    auto& held = held_[tx];
    auto hit = held.find(block);
    bool reentrant =
        hit != held.end() && (mode == LockMode::Shared || hit->second == LockMode::Exclusive);
    if (reentrant) {
      st.holders[tx].entries.push_back(entry);
      continue;
    }
    if (compatible_with_holders(st, tx, mode, entry)) {
      record_grant(st, block, tx, mode, entry);
    } else {
      for (const auto& [holder_tx, holder] : st.holders) {
        if (holder_tx != tx && holder_blocks(holder, mode, entry)) blockers.push_back(holder_tx);
      }
    }
  }
  return blockers;
}

void TxScheduler::apply_counters_relaxed(const std::vector<AccessRecord>& records) {
  if (!counter_checks_) return;
  std::lock_guard guard(mutex_);
  for (const AccessRecord& rec : records) consume_slot(state(rec.block), rec.latch_snapshot);
}

std::size_t TxScheduler::displace_waiting(const std::vector<TxId>& txs) {
  std::lock_guard guard(mutex_);
  std::size_t displaced = 0;
  for (auto& [block, st] : blocks_) {
    for (Ticket* t : st.queue) {
      if (t->victim) continue;
      if (std::find(txs.begin(), txs.end(), t->tx) != txs.end()) {
        t->victim = true;
        ++displaced;
      }
    }
  }
  if (displaced > 0) cv_.notify_all();
  return displaced;
}

void TxScheduler::release_all(TxId tx) {
  std::lock_guard guard(mutex_);
  if (auto dirty_it = dirty_.find(tx); dirty_it != dirty_.end()) {
    for (BlockId block : dirty_it->second) state(block).uncommitted.erase(tx);
    dirty_.erase(dirty_it);
  }
  if (auto held_it = held_.find(tx); held_it != held_.end()) {
    for (const auto& [block, mode] : held_it->second) {
      BlockLockState& st = state(block);
      st.holders.erase(tx);
      drain_block(st);
    }
    held_.erase(held_it);
  }
  cv_.notify_all();
}

std::size_t TxScheduler::detect_and_mark() {
  std::lock_guard guard(mutex_);
  auto edges = waits_for_edges();
  std::set<TxId> on_cycle;
  for (const auto& [start, _] : edges) {
    std::vector<std::pair<TxId, bool>> stack{{start, false}};
    std::set<TxId> path, done;
    while (!stack.empty()) {
      auto [cur, expanded] = stack.back();
      stack.pop_back();
      if (expanded) {
        path.erase(cur);
        continue;
      }
      if (done.contains(cur)) continue;
      done.insert(cur);
      path.insert(cur);
      stack.push_back({cur, true});
      if (auto it = edges.find(cur); it != edges.end()) {
        for (TxId to : it->second) {
          if (path.contains(to)) {
            for (TxId p : path) on_cycle.insert(p);
          } else if (!done.contains(to)) {
            stack.push_back({to, false});
          }
        }
      }
    }
  }
  if (on_cycle.empty()) return 0;
  // The ticket whose enqueue completed the cycle is the latest on it.
  Ticket* latest = nullptr;
  for (auto& [block, st] : blocks_) {
    for (Ticket* t : st.queue) {
      if (t->victim || !on_cycle.contains(t->tx)) continue;
      if (!latest || t->seq > latest->seq) latest = t;
    }
  }
  if (!latest) return 0;
  latest->victim = true;
  cv_.notify_all();
  return 1;
}

std::uint64_t TxScheduler::lock_count(BlockId block) const {
  std::lock_guard guard(mutex_);
  const BlockLockState* st = state_if_present(block);
  return st ? st->lock_count : 0;
}

std::size_t TxScheduler::skip_set_size(BlockId block) const {
  std::lock_guard guard(mutex_);
  const BlockLockState* st = state_if_present(block);
  return st ? st->skip_set.size() : 0;
}

bool TxScheduler::has_waiters(BlockId block) const {
  std::lock_guard guard(mutex_);
  const BlockLockState* st = state_if_present(block);
  return st && !st->queue.empty();
}

std::size_t TxScheduler::held_lock_count(TxId tx) const {
  std::lock_guard guard(mutex_);
  auto it = held_.find(tx);
  return it == held_.end() ? 0 : it->second.size();
}

}  // namespace blocktx
