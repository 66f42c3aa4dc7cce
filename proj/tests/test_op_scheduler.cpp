#include <memory>
#include <set>

#include "blocktx/op_scheduler.hpp"
#include "doctest.h"

using namespace blocktx;

namespace {

OperationContext make_ctx(ImmunitySet& immunity, TxId tx = 1, OpId op = 1) {
  OperationContext ctx;
  ctx.tx = tx;
  ctx.op = op;
  ctx.op_type = 1;
  ctx.immunity = &immunity;
  return ctx;
}

}  // namespace

TEST_CASE("immunity set sorts by block and write subsumes read") {
  ImmunitySet s;
  s.add({5, AccessMode::Read});
  s.add({2, AccessMode::Write});
  s.add({5, AccessMode::Write});
  auto plan = s.latch_plan();
  REQUIRE(plan.size() == 2);
  CHECK(plan[0] == RWAction{2, AccessMode::Write});
  CHECK(plan[1] == RWAction{5, AccessMode::Write});

  // Read arriving after the write for the same block stays subsumed.
  s.add({2, AccessMode::Read});
  CHECK(s.latch_plan().size() == 2);
}

TEST_CASE("uncontended accesses acquire latches and see content") {
  BlockStore store(128, 8);
  LatchTable latches(8);
  OpScheduler sched(store, latches);

  ImmunitySet immunity;
  OperationContext ctx = make_ctx(immunity);
  sched.begin_op(ctx);  // empty immunity set: returns immediately
  CHECK(ctx.held.empty());

  const Bytes* b = sched.read(ctx, 3);
  REQUIRE(b != nullptr);
  CHECK(*b == Bytes(128));
  CHECK(ctx.held.at(3) == AccessMode::Read);

  // Re-reading the same block takes no second latch.
  const Bytes* again = sched.read(ctx, 3);
  CHECK(again == b);
  CHECK(ctx.held.size() == 1);

  CHECK(sched.write(ctx, 4, Bytes(128, std::byte{7})));
  CHECK(ctx.held.at(4) == AccessMode::Write);
  // The operation sees its own write before publish; the store does not.
  CHECK(*sched.read(ctx, 4) == Bytes(128, std::byte{7}));
  CHECK(store.read(4) == Bytes(128));

  store.publish(ctx.ws);
  auto records = sched.clearing_unlatch(ctx);
  CHECK(records.size() == 2);
  CHECK(store.read(4) == Bytes(128, std::byte{7}));
}

TEST_CASE("before-image captured exactly once at first write") {
  BlockStore store(128, 8);
  LatchTable latches(8);
  OpScheduler sched(store, latches);

  Workspace seed;
  seed.pages[2] = Bytes(128, std::byte{0x55});
  store.publish(seed);

  ImmunitySet immunity;
  OperationContext ctx = make_ctx(immunity);
  sched.begin_op(ctx);
  CHECK(sched.write(ctx, 2, Bytes(128, std::byte{1})));
  CHECK(sched.write(ctx, 2, Bytes(128, std::byte{2})));
  CHECK(ctx.ws.before_images.at(2) == Bytes(128, std::byte{0x55}));
  sched.release_all(ctx);
}

TEST_CASE("execution-phase conflict fails the operation and grows immunity") {
  BlockStore store(128, 8);
  LatchTable latches(8);
  OpScheduler sched(store, latches);

  ImmunitySet holder_imm;
  OperationContext holder = make_ctx(holder_imm, 1, 1);
  sched.begin_op(holder);
  REQUIRE(sched.write(holder, 5, Bytes(128, std::byte{9})));

  ImmunitySet imm;
  OperationContext other = make_ctx(imm, 2, 1);
  sched.begin_op(other);
  REQUIRE(sched.read(other, 3) != nullptr);
  CHECK(sched.read(other, 5) == nullptr);  // write-latched by the holder
  CHECK(other.failed);
  CHECK(other.failed_action == RWAction{5, AccessMode::Read});
  CHECK(imm.contains({5, AccessMode::Read}));
  CHECK(other.held.empty());  // failure released everything, block 3 included

  sched.release_all(holder);
}

TEST_CASE("latch upgrade conflict records only the write action") {
  BlockStore store(128, 8);
  LatchTable latches(8);
  OpScheduler sched(store, latches);

  ImmunitySet imm_a, imm_b;
  OperationContext a = make_ctx(imm_a, 1, 1);
  OperationContext b = make_ctx(imm_b, 2, 1);
  sched.begin_op(a);
  sched.begin_op(b);
  REQUIRE(sched.read(a, 1) != nullptr);
  REQUIRE(sched.read(b, 1) != nullptr);

  // Both upgrade attempts must fail instantly with a write immunity entry.
  CHECK_FALSE(sched.write(a, 1, Bytes(128, std::byte{1})));
  CHECK(imm_a.contains({1, AccessMode::Write}));
  CHECK_FALSE(imm_a.contains({1, AccessMode::Read}));
  CHECK(sched.write(b, 1, Bytes(128, std::byte{2})));  // sole reader now: upgrade succeeds
  sched.release_all(b);
}

TEST_CASE("phase discipline is enforced") {
  BlockStore store(128, 8);
  LatchTable latches(8);
  OpScheduler sched(store, latches);

  ImmunitySet immunity;
  OperationContext ctx = make_ctx(immunity);
  CHECK_THROWS_AS(sched.read(ctx, 0), std::logic_error);  // before begin_op
  sched.begin_op(ctx);
  CHECK_THROWS_AS(sched.begin_op(ctx), std::logic_error);
  REQUIRE(sched.read(ctx, 0) != nullptr);
  store.publish(ctx.ws);
  sched.clearing_unlatch(ctx);
  CHECK_THROWS_AS(sched.read(ctx, 0), std::logic_error);  // after clearing
}

TEST_CASE("clearing snapshots then increments the latch counter per block") {
  BlockStore store(128, 16);
  LatchTable latches(16);
  OpScheduler sched(store, latches);

  ImmunitySet immunity;
  OperationContext ctx = make_ctx(immunity);
  sched.begin_op(ctx);
  REQUIRE(sched.read(ctx, 3) != nullptr);
  REQUIRE(sched.write(ctx, 7, Bytes(128, std::byte{1})));
  store.publish(ctx.ws);
  auto records = sched.clearing_unlatch(ctx);
  REQUIRE(records.size() == 2);
  for (const AccessRecord& r : records) {
    CHECK(r.latch_snapshot == 0);  // pre-increment value
    CHECK(sched.latch_count(r.block) == 1);
  }
  CHECK(records[0].mode == LockMode::Shared);
  CHECK(records[1].mode == LockMode::Exclusive);
}

// ---------------------------------------------------------------------------
// Exhaustive interleaving search over two scripted operations.
//
// Every schedule of two operations is explored by choosing, at each step,
// which operation advances by one transition (an early-latching step, one
// r/w action, or the clearing phase). Failed attempts retry with the grown
// immunity set, exactly as the engine would. Each complete schedule is
// checked for progressiveness (no action fails twice, failures bounded by
// the distinct action count) and for serializability of the final state.
// ---------------------------------------------------------------------------

namespace {

struct SimAction {
  RWAction action;
  std::byte tag;  // written content for write actions
};

struct SimOp {
  std::vector<SimAction> script;
  ImmunitySet immunity;
  std::unique_ptr<OperationContext> ctx;
  std::size_t next_action = 0;
  enum class Stage { Early, Exec, Clearing, Done } stage = Stage::Early;
  bool waiting = false;
  std::vector<RWAction> failures;
  std::set<RWAction> issued;
  TxId id;
};

struct Sim {
  BlockStore store{64, 4};
  LatchTable latches{4};
  OpScheduler sched{store, latches};
  SimOp ops[2];

  Sim(const std::vector<SimAction>& x, const std::vector<SimAction>& y) {
    ops[0].script = x;
    ops[1].script = y;
    for (int i = 0; i < 2; ++i) {
      ops[i].id = static_cast<TxId>(i + 1);
      reset_attempt(ops[i]);
    }
  }

  void reset_attempt(SimOp& op) {
    op.ctx = std::make_unique<OperationContext>();
    op.ctx->tx = op.id;
    op.ctx->op = 1;
    op.ctx->op_type = 1;
    op.ctx->immunity = &op.immunity;
    op.next_action = 0;
    op.stage = SimOp::Stage::Early;
  }

  void clear_waiting() {
    ops[0].waiting = false;
    ops[1].waiting = false;
  }

  // One transition of op i. Returns false if the op made no progress
  // (blocked in early latching).
  void step(int i) {
    SimOp& op = ops[i];
    switch (op.stage) {
      case SimOp::Stage::Early:
        if (sched.begin_op_step(*op.ctx)) {
          op.stage = SimOp::Stage::Exec;
        } else {
          op.waiting = true;  // holds its partial prefix, waits for a release
        }
        break;
      case SimOp::Stage::Exec: {
        const SimAction& a = op.script[op.next_action];
        bool ok;
        if (a.action.mode == AccessMode::Read) {
          ok = sched.read(*op.ctx, a.action.block) != nullptr;
        } else {
          ok = sched.write(*op.ctx, a.action.block, Bytes(store.block_size(), a.tag));
        }
        op.issued.insert(op.ctx->issued.begin(), op.ctx->issued.end());
        if (!ok) {
          op.failures.push_back(op.ctx->failed_action);
          reset_attempt(op);
          clear_waiting();  // the failure released this op's latches
        } else if (++op.next_action == op.script.size()) {
          op.stage = SimOp::Stage::Clearing;
        }
        break;
      }
      case SimOp::Stage::Clearing:
        store.publish(op.ctx->ws);
        sched.clearing_unlatch(*op.ctx);
        op.stage = SimOp::Stage::Done;
        clear_waiting();
        break;
      case SimOp::Stage::Done:
        break;
    }
  }

  std::vector<int> choices() const {
    std::vector<int> out;
    for (int i = 0; i < 2; ++i) {
      if (ops[i].stage != SimOp::Stage::Done && !ops[i].waiting) out.push_back(i);
    }
    return out;
  }

  bool done() const {
    return ops[0].stage == SimOp::Stage::Done && ops[1].stage == SimOp::Stage::Done;
  }

  std::vector<Bytes> state() const {
    std::vector<Bytes> s;
    for (BlockId b = 0; b < store.capacity(); ++b) s.push_back(store.read(b));
    return s;
  }
};

std::vector<Bytes> serial_state(const std::vector<SimAction>& first,
                                const std::vector<SimAction>& second) {
  Sim sim(first, second);
  for (int i = 0; i < 2; ++i) {
    while (sim.ops[i].stage != SimOp::Stage::Done) sim.step(i);
  }
  return sim.state();
}

struct SearchStats {
  std::size_t paths = 0;
  std::size_t max_failures = 0;
  bool retry_overlap_seen = false;  // both ops retried with nonempty immunity
};

void explore(const std::vector<SimAction>& x, const std::vector<SimAction>& y,
             std::vector<int>& prefix, const std::vector<Bytes>& serial_xy,
             const std::vector<Bytes>& serial_yx, SearchStats& stats) {
  Sim sim(x, y);
  for (int c : prefix) sim.step(c);
  auto choices = sim.choices();
  if (choices.empty()) {
    // No runnable op: the only legal terminal state is both-done. Anything
    // else would be a latch-level deadlock.
    REQUIRE(sim.done());
    for (const SimOp& op : sim.ops) {
      std::set<RWAction> unique(op.failures.begin(), op.failures.end());
      REQUIRE(unique.size() == op.failures.size());       // no action fails twice
      REQUIRE(op.failures.size() <= op.issued.size());    // bounded by action count
      stats.max_failures = std::max(stats.max_failures, op.failures.size());
    }
    if (!sim.ops[0].immunity.empty() && !sim.ops[1].immunity.empty())
      stats.retry_overlap_seen = true;
    auto final_state = sim.state();
    bool serializable = final_state == serial_xy || final_state == serial_yx;
    REQUIRE(serializable);
    stats.paths += 1;
    REQUIRE(stats.paths < 500000);
    return;
  }
  for (int c : choices) {
    prefix.push_back(c);
    explore(x, y, prefix, serial_xy, serial_yx, stats);
    prefix.pop_back();
  }
}

SearchStats search(const std::vector<SimAction>& x, const std::vector<SimAction>& y) {
  auto serial_xy = serial_state(x, y);
  auto serial_yx = serial_state(y, x);
  SearchStats stats;
  std::vector<int> prefix;
  explore(x, y, prefix, serial_xy, serial_yx, stats);
  return stats;
}

constexpr auto R = AccessMode::Read;
constexpr auto W = AccessMode::Write;

}  // namespace

TEST_CASE("exhaustive interleavings: read-upgrade pattern on one block") {
  // Both operations read block 0 then upgrade to write it: the classic
  // index-insertion shape that deadlocks plain two-phase latching.
  std::vector<SimAction> x{{{0, R}, {}}, {{0, W}, std::byte{0xA1}}};
  std::vector<SimAction> y{{{0, R}, {}}, {{0, W}, std::byte{0xB1}}};
  SearchStats stats = search(x, y);
  CHECK(stats.paths > 10);
  CHECK(stats.max_failures <= 2);
  CHECK(stats.retry_overlap_seen);  // both ops end up early-latching the block
}

TEST_CASE("exhaustive interleavings: reverse-order update routes") {
  // Mirrored routes over two blocks, the corner shape generic schedulers
  // cannot handle without deadlock or starvation.
  std::vector<SimAction> x{{{0, R}, {}}, {{1, W}, std::byte{0xA2}}};
  std::vector<SimAction> y{{{1, R}, {}}, {{0, W}, std::byte{0xB2}}};
  SearchStats stats = search(x, y);
  CHECK(stats.paths > 10);
  CHECK(stats.max_failures <= 2);
}

TEST_CASE("exhaustive interleavings: three-action operations stay within bound") {
  std::vector<SimAction> x{{{0, R}, {}}, {{1, R}, {}}, {{1, W}, std::byte{0xA3}}};
  std::vector<SimAction> y{{{1, R}, {}}, {{1, W}, std::byte{0xB3}}, {{0, W}, std::byte{0xB4}}};
  SearchStats stats = search(x, y);
  CHECK(stats.paths > 100);
  // Each op issues at most 4 distinct actions; no invocation may fail more.
  CHECK(stats.max_failures <= 4);
}
