#include "blocktx/op_scheduler.hpp"

#include <stdexcept>

namespace blocktx {

void ImmunitySet::add(RWAction action) {
  if (action.mode == AccessMode::Write) {
    actions_.erase(RWAction{action.block, AccessMode::Read});
    actions_.insert(action);
  } else {
    if (actions_.contains(RWAction{action.block, AccessMode::Write})) return;
    actions_.insert(action);
  }
}

bool ImmunitySet::contains(RWAction action) const { return actions_.contains(action); }

std::vector<RWAction> ImmunitySet::latch_plan() const {
  // The set is already write-deduplicated and ordered by block id.
  return {actions_.begin(), actions_.end()};
}

void OpScheduler::begin_op(OperationContext& ctx) {
  if (ctx.phase != OpPhase::EarlyLatching) throw std::logic_error("begin_op: wrong phase");
  for (const RWAction& a : ctx.immunity->latch_plan()) {
    latches_.acquire(a.block, a.mode);
    ctx.held[a.block] = a.mode;
  }
  ctx.phase = OpPhase::Execution;
}

bool OpScheduler::begin_op_step(OperationContext& ctx) {
  if (ctx.phase != OpPhase::EarlyLatching) throw std::logic_error("begin_op_step: wrong phase");
  auto plan = ctx.immunity->latch_plan();
  while (ctx.early_progress < plan.size()) {
    const RWAction& a = plan[ctx.early_progress];
    if (!latches_.acquire_nowait(a.block, a.mode)) return false;
    ctx.held[a.block] = a.mode;
    ++ctx.early_progress;
  }
  ctx.phase = OpPhase::Execution;
  return true;
}

void OpScheduler::fail_on(OperationContext& ctx, RWAction action) {
  ctx.immunity->add(action);
  ctx.failed = true;
  ctx.failed_action = action;
  release_all(ctx);
}

const Bytes* OpScheduler::visible(OperationContext& ctx, BlockId block) {
  if (auto it = ctx.ws.pages.find(block); it != ctx.ws.pages.end()) return &it->second;
  auto [it, inserted] = ctx.read_cache.try_emplace(block);
  if (inserted) it->second = store_.read(block);
  return &it->second;
}

const Bytes* OpScheduler::read_with_mode(OperationContext& ctx, BlockId block, AccessMode mode) {
  if (ctx.phase != OpPhase::Execution) throw std::logic_error("read: wrong phase");
  ctx.issued.insert(RWAction{block, mode});
  auto held = ctx.held.find(block);
  if (held == ctx.held.end()) {
    if (!latches_.try_acquire(block, mode)) {
      fail_on(ctx, RWAction{block, mode});
      return nullptr;
    }
    ctx.held[block] = mode;
  } else if (mode == AccessMode::Write && held->second == AccessMode::Read) {
    if (!latches_.try_upgrade(block)) {
      fail_on(ctx, RWAction{block, AccessMode::Write});
      return nullptr;
    }
    held->second = AccessMode::Write;
  }
  auto& access = ctx.accessed[block];
  if (mode == AccessMode::Write) access.for_update = true;
  return visible(ctx, block);
}

const Bytes* OpScheduler::read(OperationContext& ctx, BlockId block) {
  return read_with_mode(ctx, block, AccessMode::Read);
}

const Bytes* OpScheduler::read_for_update(OperationContext& ctx, BlockId block) {
  return read_with_mode(ctx, block, AccessMode::Write);
}

bool OpScheduler::write(OperationContext& ctx, BlockId block, ByteView data) {
  if (ctx.phase != OpPhase::Execution) throw std::logic_error("write: wrong phase");
  if (data.size() != store_.block_size()) throw std::invalid_argument("write: bad page size");
  ctx.issued.insert(RWAction{block, AccessMode::Write});
  auto held = ctx.held.find(block);
  if (held == ctx.held.end()) {
    if (!latches_.try_acquire(block, AccessMode::Write)) {
      fail_on(ctx, RWAction{block, AccessMode::Write});
      return false;
    }
    ctx.held[block] = AccessMode::Write;
  } else if (held->second == AccessMode::Read) {
    // Latch upgrade; on conflict only the write entry enters the immunity set.
    if (!latches_.try_upgrade(block)) {
      fail_on(ctx, RWAction{block, AccessMode::Write});
      return false;
    }
    held->second = AccessMode::Write;
  }
  // Before-image is captured exactly once, at the first write to the block.
  if (!ctx.ws.before_images.contains(block)) {
    ctx.ws.before_images[block] = store_.read(block);
  }
  ctx.ws.pages[block] = Bytes(data.begin(), data.end());
  auto& access = ctx.accessed[block];
  access.written = true;
  ctx.read_cache.erase(block);
  return true;
}

void OpScheduler::release_all(OperationContext& ctx) {
  for (const auto& [block, mode] : ctx.held) latches_.release(block, mode);
  ctx.held.clear();
  ctx.phase = OpPhase::Done;
}

std::vector<AccessRecord> OpScheduler::clearing_unlatch(OperationContext& ctx) {
  if (ctx.phase != OpPhase::Execution) throw std::logic_error("clearing: wrong phase");
  ctx.phase = OpPhase::Clearing;
  std::vector<AccessRecord> records;
  records.reserve(ctx.accessed.size());
  for (const auto& [block, mode] : ctx.held) {
    if (ctx.accessed.contains(block)) {
      std::uint64_t snapshot = latches_.count_and_release(block, mode);
      records.push_back(AccessRecord{block, ctx.lock_mode(block), snapshot});
    } else {
      latches_.release(block, mode);  // early-latched but never touched
    }
  }
  ctx.held.clear();
  ctx.phase = OpPhase::Done;
  return records;
}

}  // namespace blocktx
