#include "blocktx/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "blocktx/btree.hpp"
#include "blocktx/oracle.hpp"

namespace blocktx::bench {

namespace {

using Clock = std::chrono::steady_clock;

// ---- raw workloads' operation programs ------------------------------------

// corner op args: route u8, seed u64, reads u16, region_lo u64,
// region_len u64, block_a u64, block_b u64
constexpr std::size_t kCornerArgsSize = 1 + 8 + 2 + 8 * 4;

Bytes corner_args(std::uint8_t route, std::uint64_t seed, std::uint16_t reads,
                  std::uint64_t region_lo, std::uint64_t region_len, std::uint64_t block_a,
                  std::uint64_t block_b) {
  Bytes out(kCornerArgsSize);
  out[0] = static_cast<std::byte>(route);
  put_u64(out, 1, seed);
  put_u16(out, 9, reads);
  put_u64(out, 11, region_lo);
  put_u64(out, 19, region_len);
  put_u64(out, 27, block_a);
  put_u64(out, 35, block_b);
  return out;
}

// Two mirrored execution routes: one reads A first and updates B last, the
// other reads B first and updates A last, with a long run of random reads
// in between. Every generic scheduler deadlocks or aborts on this shape;
// the progressive scheduler must complete it with bounded retries.
Bytes corner_program(OpHandle& h, ByteView args) {
  if (args.size() != kCornerArgsSize) throw std::invalid_argument("corner op: bad args");
  std::uint8_t route = std::to_integer<std::uint8_t>(args[0]);
  std::uint64_t seed = get_u64(args, 1);
  std::uint16_t reads = get_u16(args, 9);
  std::uint64_t region_lo = get_u64(args, 11);
  std::uint64_t region_len = get_u64(args, 19);
  std::uint64_t block_a = get_u64(args, 27);
  std::uint64_t block_b = get_u64(args, 35);

  BlockId first = route == 0 ? block_a : block_b;
  BlockId last = route == 0 ? block_b : block_a;
  h.read(first);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> pick(region_lo, region_lo + region_len - 1);
  for (std::uint16_t i = 0; i < reads; ++i) h.read(pick(rng));
  Bytes page = h.read(last);
  put_u64(page, 0, get_u64(page, 0) + 1);
  put_u64(page, 8, seed);
  h.write(last, page);
  Bytes out(8);
  put_u64(out, 0, get_u64(page, 0));
  return out;
}

// update-blocks args: count u16, seed u64
constexpr std::size_t kUpdateArgsSize = 10;

Bytes update_args(std::uint16_t count, std::uint64_t seed) {
  Bytes out(kUpdateArgsSize);
  put_u16(out, 0, count);
  put_u64(out, 2, seed);
  return out;
}

// Record updates over `count` distinct random blocks. A single-record
// operation is a plain read-modify-write. A multi-record operation is a
// predicate update: it reads every chosen record and writes back only the
// matching ones, so most of its accesses stay reads and its long
// latch-to-lock window exposes short operations to order jumps.
Bytes update_program(OpHandle& h, ByteView args) {
  if (args.size() != kUpdateArgsSize) throw std::invalid_argument("update op: bad args");
  std::uint16_t count = get_u16(args, 0);
  std::uint64_t seed = get_u64(args, 2);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> pick(1, h.capacity() - 1);
  std::set<BlockId> chosen;
  while (chosen.size() < count) chosen.insert(pick(rng));
  std::vector<BlockId> blocks(chosen.begin(), chosen.end());
  std::shuffle(blocks.begin(), blocks.end(), rng);
  std::uint64_t updated = 0;
  for (BlockId b : blocks) {
    if (count == 1) {
      Bytes page = h.read_for_update(b);
      put_u64(page, 0, get_u64(page, 0) + 1);
      put_u64(page, 8, seed);
      h.write(b, page);
      ++updated;
      continue;
    }
    Bytes page = h.read(b);
    if (get_u64(page, 0) % 4 == 0) {
      put_u64(page, 0, get_u64(page, 0) + 1);
      put_u64(page, 8, seed);
      h.write(b, page);
      ++updated;
    }
  }
  Bytes out(8);
  put_u64(out, 0, updated);
  return out;
}

// ---- bench driver ----------------------------------------------------------

struct WorkerTally {
  std::uint64_t started = 0, committed = 0, aborted = 0;
  std::uint64_t ops = 0, retries = 0, max_retries = 0;
  bool pages_exhausted = false;
};

struct SharedState {
  std::atomic<int> phase{0};  // 0 warmup, 1 measuring, 2 stop
  std::atomic<std::uint64_t> seq_key{0};
  std::atomic<std::uint64_t> ops_done{0};
  std::uint64_t total_ops_target = 0;
};

unsigned default_ops_per_txn(Workload w) {
  switch (w) {
    case Workload::ShortTxn: return 2;
    case Workload::LongTxn: return 8;
    default: return 1;
  }
}

void worker_loop(Engine& engine, const BenchSpec& spec, const btree::Ops* tree, OpType corner_op,
                 OpType update_op, unsigned worker_idx, SharedState& shared, WorkerTally& tally) {
  std::mt19937_64 rng(spec.seed * 1000003 + worker_idx);
  unsigned ops_per_txn =
      spec.ops_per_txn > 0 ? spec.ops_per_txn : default_ops_per_txn(spec.workload);
  const bool count_based = spec.total_ops > 0;

  while (true) {
    int phase = shared.phase.load(std::memory_order_relaxed);
    if (phase == 2) break;
    if (count_based &&
        shared.ops_done.load(std::memory_order_relaxed) >= shared.total_ops_target) {
      shared.phase.store(2, std::memory_order_relaxed);
      break;
    }
    bool record = count_based || phase == 1;

    TxId tx = engine.begin_tx();
    bool tx_aborted = false;
    std::uint64_t tx_ops = 0, tx_retries = 0, tx_max_retries = 0;
    try {
      for (unsigned i = 0; i < ops_per_txn && !tx_aborted; ++i) {
        OpResult r;
        switch (spec.workload) {
          case Workload::BtreeRandom: {
            std::uint64_t key = rng() % spec.key_space;
            r = engine.execute(tx, tree->insert, btree::insert_args(key, rng()));
            break;
          }
          case Workload::BtreeSequential:
          case Workload::ShortTxn:
          case Workload::LongTxn: {
            std::uint64_t key =
                shared.seq_key.fetch_add(1, std::memory_order_relaxed) % spec.key_space;
            r = engine.execute(tx, tree->insert, btree::insert_args(key, rng()));
            break;
          }
          case Workload::CornerCase: {
            std::uint8_t route = rng() & 1;
            r = engine.execute(
                tx, corner_op,
                corner_args(route, rng(), static_cast<std::uint16_t>(spec.corner_reads), 1,
                            spec.corner_region, spec.corner_region + 1, spec.corner_region + 2));
            break;
          }
          case Workload::MixedOps: {
            std::uint16_t count = (rng() % 1000) < spec.mixed_long_permille ? 100 : 1;
            r = engine.execute(tx, update_op, update_args(count, rng()));
            break;
          }
          case Workload::Verify:
            throw std::logic_error("verify is driven by run_verify");
        }
        shared.ops_done.fetch_add(1, std::memory_order_relaxed);
        tx_ops += 1;
        tx_retries += r.retries;
        tx_max_retries = std::max<std::uint64_t>(tx_max_retries, r.retries);
        if (r.status == OpResult::Status::TxAborted) tx_aborted = true;
      }
    } catch (const std::runtime_error&) {
      // Out of pages: finish this transaction and stop the run.
      tally.pages_exhausted = true;
      engine.abort_tx(tx);
      shared.phase.store(2, std::memory_order_relaxed);
      break;
    }
    TxOutcome outcome = engine.end_tx(tx);
    if (record) {
      tally.started += 1;
      tally.ops += tx_ops;
      tally.retries += tx_retries;
      tally.max_retries = std::max(tally.max_retries, tx_max_retries);
      if (outcome == TxOutcome::Committed && !tx_aborted) {
        tally.committed += 1;
      } else {
        tally.aborted += 1;
      }
    }
  }
}

BenchReport run_bench_inner(const BenchSpec& spec, Engine& engine, const btree::Ops* tree,
                            OpType corner_op, OpType update_op) {
  SharedState shared;
  shared.total_ops_target = spec.total_ops;
  const bool count_based = spec.total_ops > 0;

  std::vector<WorkerTally> tallies(spec.workers);
  std::vector<std::thread> threads;
  threads.reserve(spec.workers);

  EngineStats warm_stats{};
  auto started_at = Clock::now();
  auto measure_from = started_at;

  for (unsigned w = 0; w < spec.workers; ++w) {
    threads.emplace_back([&, w] {
      worker_loop(engine, spec, tree, corner_op, update_op, w, shared, tallies[w]);
    });
  }

  if (count_based) {
    shared.phase.store(1, std::memory_order_relaxed);
    while (shared.phase.load(std::memory_order_relaxed) != 2) {
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  } else {
    // One warm-up second, excluded from the metrics.
    double warmup = std::min(1.0, spec.duration_secs / 4.0);
    std::this_thread::sleep_for(std::chrono::duration<double>(warmup));
    warm_stats = engine.stats();
    measure_from = Clock::now();
    shared.phase.store(1, std::memory_order_relaxed);
    std::this_thread::sleep_for(std::chrono::duration<double>(spec.duration_secs));
    shared.phase.store(2, std::memory_order_relaxed);
  }
  for (std::thread& t : threads) t.join();
  auto ended_at = Clock::now();

  EngineStats end_stats = engine.stats();
  BenchReport report;
  report.workload = workload_name(spec.workload);
  report.workers = spec.workers;
  report.mode = spec.mode == SchedulerMode::Extended ? "extended" : "basic";
  for (const WorkerTally& t : tallies) {
    report.started += t.started;
    report.committed += t.committed;
    report.aborted += t.aborted;
    report.ops += t.ops;
    report.mean_retries += static_cast<double>(t.retries);
    report.max_retries = std::max(report.max_retries, t.max_retries);
    report.pages_exhausted |= t.pages_exhausted;
  }
  report.elapsed_secs = std::chrono::duration<double>(ended_at - measure_from).count();
  report.throughput = report.elapsed_secs > 0 ? report.committed / report.elapsed_secs : 0;
  report.abort_rate = report.started > 0
                          ? static_cast<double>(report.aborted) / static_cast<double>(report.started)
                          : 0;
  report.mean_retries = report.ops > 0 ? report.mean_retries / static_cast<double>(report.ops) : 0;
  report.deadlocks = end_stats.deadlock_victims - warm_stats.deadlock_victims;
  report.counter_gap_aborts = end_stats.counter_gap_aborts - warm_stats.counter_gap_aborts;
  report.uncommitted_aborts =
      end_stats.uncommitted_data_aborts - warm_stats.uncommitted_data_aborts;
  report.op_failures = end_stats.op_failures - warm_stats.op_failures;
  report.progressiveness_violations = end_stats.progressiveness_violations;
  report.phase_order_violations = end_stats.phase_order_violations;
  return report;
}

std::pair<std::unique_ptr<Engine>, btree::Ops> make_workload_engine(const BenchSpec& spec,
                                                                    OpType* corner_op,
                                                                    OpType* update_op) {
  EngineConfig cfg;
  cfg.block_size = spec.block_size;
  cfg.mode = spec.mode;
  cfg.rng_seed = spec.seed;
  cfg.log_full = spec.log_full;
  cfg.capacity = spec.workload == Workload::CornerCase
                     ? static_cast<std::size_t>(spec.corner_region + 3)
                     : spec.capacity;
  auto engine = std::make_unique<Engine>(cfg);
  btree::Ops tree = btree::attach(*engine);
  *corner_op = engine->register_operation("cornerOp", corner_program);
  *update_op = engine->register_operation("updateBlocks", update_program);
  bool needs_tree = spec.workload == Workload::BtreeRandom ||
                    spec.workload == Workload::BtreeSequential ||
                    spec.workload == Workload::ShortTxn || spec.workload == Workload::LongTxn;
  if (needs_tree) btree::create(*engine, tree);
  return {std::move(engine), tree};
}

}  // namespace

const char* workload_name(Workload w) {
  switch (w) {
    case Workload::BtreeRandom: return "btree-random";
    case Workload::BtreeSequential: return "btree-sequential";
    case Workload::CornerCase: return "corner-case";
    case Workload::ShortTxn: return "short-txn";
    case Workload::LongTxn: return "long-txn";
    case Workload::MixedOps: return "mixed-ops";
    case Workload::Verify: return "verify";
  }
  return "?";
}

Workload workload_from_name(const std::string& name) {
  for (Workload w : {Workload::BtreeRandom, Workload::BtreeSequential, Workload::CornerCase,
                     Workload::ShortTxn, Workload::LongTxn, Workload::MixedOps, Workload::Verify}) {
    if (name == workload_name(w)) return w;
  }
  throw std::invalid_argument("unknown workload: " + name);
}

std::string BenchReport::csv_header() {
  return "workload,workers,mode,throughput,abort_rate,mean_retries,max_retries,deadlocks,"
         "counter_gap_aborts";
}

std::string BenchReport::csv_row() const {
  std::ostringstream out;
  out << workload << ',' << workers << ',' << mode << ',' << throughput << ',' << abort_rate << ','
      << mean_retries << ',' << max_retries << ',' << deadlocks << ',' << counter_gap_aborts;
  return out.str();
}

std::string BenchReport::summary() const {
  std::ostringstream out;
  out << workload << " workers=" << workers << " mode=" << mode << ": " << committed
      << " committed / " << started << " started (" << abort_rate * 100 << "% aborted) in "
      << elapsed_secs << "s, " << throughput << " txn/s; retries mean=" << mean_retries
      << " max=" << max_retries << "; deadlock victims=" << deadlocks
      << " counter-gap aborts=" << counter_gap_aborts
      << " uncommitted-data aborts=" << uncommitted_aborts;
  if (pages_exhausted) out << " [stopped: out of pages]";
  return out.str();
}

BenchReport run_bench(const BenchSpec& spec) {
  if (spec.workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (spec.total_ops == 0 && spec.duration_secs <= 0)
    throw std::invalid_argument("duration must be positive");
  if (spec.workload == Workload::Verify) throw std::invalid_argument("use run_verify");
  OpType corner_op = kInvalidOpType, update_op = kInvalidOpType;
  auto [engine, tree] = make_workload_engine(spec, &corner_op, &update_op);
  return run_bench_inner(spec, *engine, &tree, corner_op, update_op);
}

LoggedRun run_bench_logged(const BenchSpec& spec) {
  BenchSpec logged = spec;
  logged.log_full = true;
  OpType corner_op = kInvalidOpType, update_op = kInvalidOpType;
  auto [engine, tree] = make_workload_engine(logged, &corner_op, &update_op);
  BenchReport report = run_bench_inner(logged, *engine, &tree, corner_op, update_op);
  return LoggedRun{report, engine->export_log()};
}

// ---- verify ---------------------------------------------------------------

namespace {

struct PlannedOp {
  OpType type;
  Bytes args;
};

struct RoundPlan {
  std::vector<std::vector<PlannedOp>> txns;
};

EngineConfig verify_config(const BenchSpec& spec) {
  EngineConfig cfg;
  cfg.block_size = 256;  // small blocks force contention and splits
  cfg.capacity = 4096;
  cfg.mode = spec.mode;
  cfg.log_full = true;
  return cfg;
}

RoundPlan plan_round(const BenchSpec& spec, const btree::Ops& tree, std::mt19937_64& rng) {
  bool commutative_only = spec.mode == SchedulerMode::Extended;
  // The setup transaction counts against the replay enumeration bound of
  // eight, leaving room for at most seven client transactions per round.
  unsigned max_client = std::min(spec.verify_txns, 7u);
  unsigned txns = 2 + rng() % std::max(1u, max_client - 1);
  RoundPlan plan;
  std::uint64_t next_key = rng() % 50;
  for (unsigned t = 0; t < txns; ++t) {
    unsigned ops = 1 + rng() % spec.verify_ops;
    std::vector<PlannedOp> list;
    for (unsigned i = 0; i < ops; ++i) {
      if (commutative_only) {
        // Distinct keys across the whole round keep every insert pair
        // commutative under the registry matcher.
        list.push_back({tree.insert, btree::insert_args(next_key, rng(), rng() & 1)});
        next_key += 1 + rng() % 3;
      } else {
        std::uint64_t key = rng() % 25;  // small space, collisions intended
        switch (rng() % 4) {
          case 0: list.push_back({tree.insert, btree::insert_args(key, rng())}); break;
          case 1: list.push_back({tree.erase, btree::erase_args(key)}); break;
          case 2: list.push_back({tree.lookup, btree::lookup_args(key)}); break;
          case 3: {
            std::uint64_t hi = key + rng() % 10;
            list.push_back({tree.scan, btree::scan_args(key, hi)});
            break;
          }
        }
      }
    }
    plan.txns.push_back(std::move(list));
  }
  return plan;
}

std::string canonical_state(Engine& engine, const btree::Ops& tree) {
  std::ostringstream out;
  for (const auto& [k, v] : btree::key_map(engine, tree)) out << k << ':' << v << ';';
  return out.str();
}

}  // namespace

VerifyReport run_verify(const BenchSpec& spec) {
  VerifyReport report;
  std::mt19937_64 rng(spec.seed);
  for (unsigned round = 0; round < spec.verify_rounds; ++round) {
    report.rounds += 1;
    EngineConfig cfg = verify_config(spec);
    auto engine = std::make_unique<Engine>(cfg);
    btree::Ops tree = btree::attach(*engine);
    btree::create(*engine, tree);

    RoundPlan plan = plan_round(spec, tree, rng);

    // Execute the planned transactions from a shared queue on N workers.
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (unsigned w = 0; w < spec.verify_workers; ++w) {
      workers.emplace_back([&] {
        for (;;) {
          std::size_t idx = next.fetch_add(1);
          if (idx >= plan.txns.size()) return;
          TxId tx = engine->begin_tx();
          bool aborted = false;
          for (const PlannedOp& op : plan.txns[idx]) {
            OpResult r = engine->execute(tx, op.type, op.args);
            if (r.status == OpResult::Status::TxAborted) {
              aborted = true;
              break;
            }
          }
          (void)aborted;
          engine->end_tx(tx);
        }
      });
    }
    for (std::thread& t : workers) t.join();

    // Snapshot the log before the state extraction, whose scan transaction
    // would otherwise show up as an extra committed transaction.
    std::vector<ScheduleEvent> events = engine->log_events();
    std::string actual = canonical_state(*engine, tree);
    std::string failure;
    try {
      oracle::ParsedLog parsed = oracle::parse_schedule(events);
      if (!parsed.incomplete.empty()) throw std::runtime_error("incomplete transactions in log");
      oracle::DependencyGraph graph = oracle::build_graph(parsed, engine->registry());

      btree::ValidationReport tree_check = btree::validate(engine->store());
      if (!tree_check.ok) throw std::runtime_error("tree invalid: " + tree_check.message);

      if (spec.mode == SchedulerMode::Basic) {
        oracle::CycleCheck c = oracle::check_conflict_serializable(graph);
        if (!c.acyclic) throw std::runtime_error("conflict cycle: " + oracle::describe(c));
      } else {
        oracle::CycleCheck c = oracle::check_view_serializable(graph);
        if (!c.acyclic) throw std::runtime_error("view cycle: " + oracle::describe(c));
      }

      std::vector<std::vector<TxId>> hints;
      if (auto topo = oracle::topological_order(graph, spec.mode == SchedulerMode::Extended)) {
        hints.push_back(*topo);
      }
      if (auto topo_full = oracle::topological_order(graph, false)) hints.push_back(*topo_full);
      oracle::EngineFactory factory = [&] {
        auto fresh = std::make_unique<Engine>(verify_config(spec));
        btree::attach(*fresh);
        return fresh;
      };
      oracle::StateExtractor extract = [&tree](Engine& e) { return canonical_state(e, tree); };
      oracle::ReplayResult replay =
          oracle::replay_equivalence(parsed, factory, extract, actual, hints);
      if (!replay.matched) throw std::runtime_error("no serial order matches the run");
    } catch (const std::exception& e) {
      failure = e.what();
    }
    if (failure.empty()) {
      report.passed += 1;
    } else {
      std::ostringstream msg;
      msg << "round " << round << ": " << failure;
      report.failures.push_back(msg.str());
    }
  }
  return report;
}

}  // namespace blocktx::bench
