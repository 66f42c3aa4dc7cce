#pragma once

#include <mutex>
#include <string>
#include <vector>

#include "blocktx/types.hpp"

namespace blocktx {

// One record of the engine's append-only schedule log. The log is the
// input of the offline serializability checks; Action events carry the
// block's latch-counter value taken at the clearing phase, which fixes
// the per-block operation order.
struct ScheduleEvent {
  enum class Kind : std::uint8_t {
    BeginTx,
    EndTx,
    AbortTx,
    Commit,
    BeginOp,
    EndOpOk,
    EndOpFail,
    Action,
    LockAcquired,
  };

  Kind kind{};
  TxId tx = 0;
  OpId op = 0;
  BlockId block = 0;
  AccessMode mode = AccessMode::Read;
  LockMode lock_mode = LockMode::Shared;
  std::uint64_t latch_snapshot = 0;
  OpType op_type = kInvalidOpType;
  Bytes args;
  Bytes result;
};

std::string format_event(const ScheduleEvent& e);
ScheduleEvent parse_event(const std::string& line);

std::string format_log(const std::vector<ScheduleEvent>& events);
std::vector<ScheduleEvent> parse_log(const std::string& text);

// Append-only, internally synchronized event sequence with a global
// total order (the append order).
class ScheduleLog {
 public:
  explicit ScheduleLog(bool enabled) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }

  void append(ScheduleEvent e) {
    if (!enabled_) return;
    std::lock_guard guard(mutex_);
    events_.push_back(std::move(e));
  }

  std::vector<ScheduleEvent> snapshot() const {
    std::lock_guard guard(mutex_);
    return events_;
  }

  std::string text() const { return format_log(snapshot()); }

 private:
  bool enabled_;
  mutable std::mutex mutex_;
  std::vector<ScheduleEvent> events_;
};

}  // namespace blocktx
