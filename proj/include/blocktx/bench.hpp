#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blocktx/engine.hpp"

namespace blocktx::bench {

enum class Workload {
  BtreeRandom,
  BtreeSequential,
  CornerCase,
  ShortTxn,
  LongTxn,
  MixedOps,
  Verify,
};

const char* workload_name(Workload w);
Workload workload_from_name(const std::string& name);

struct BenchSpec {
  Workload workload = Workload::BtreeRandom;
  unsigned workers = 1;
  double duration_secs = 5.0;
  unsigned ops_per_txn = 0;  // 0 = workload default
  SchedulerMode mode = SchedulerMode::Basic;
  std::uint64_t seed = 1;
  std::size_t block_size = 4096;
  std::size_t capacity = 16384;
  bool log_full = false;
  // When nonzero the run terminates after this many completed operations
  // instead of after duration_secs, with no warm-up; deterministic for a
  // single worker and fixed seed.
  std::uint64_t total_ops = 0;
  std::uint64_t key_space = std::uint64_t{1} << 20;

  unsigned corner_reads = 64;
  std::uint64_t corner_region = 1024;

  // Share of 100-record operations in the mixed workload, per mille.
  // Zero gives the uniform single-record baseline.
  unsigned mixed_long_permille = 500;

  unsigned verify_rounds = 100;
  unsigned verify_txns = 8;      // max transactions per round
  unsigned verify_ops = 4;       // max operations per transaction
  unsigned verify_workers = 4;
};

struct BenchReport {
  std::string workload;
  unsigned workers = 0;
  std::string mode;
  double throughput = 0;  // committed transactions per second
  double abort_rate = 0;  // aborted / started
  double mean_retries = 0;
  std::uint64_t max_retries = 0;
  std::uint64_t deadlocks = 0;
  std::uint64_t counter_gap_aborts = 0;

  std::uint64_t started = 0, committed = 0, aborted = 0;
  std::uint64_t ops = 0, op_failures = 0;
  std::uint64_t uncommitted_aborts = 0;
  std::uint64_t progressiveness_violations = 0;
  std::uint64_t phase_order_violations = 0;
  double elapsed_secs = 0;
  bool pages_exhausted = false;

  static std::string csv_header();
  std::string csv_row() const;
  std::string summary() const;
};

BenchReport run_bench(const BenchSpec& spec);

// Returns the full schedule log alongside the report (forces full logging).
struct LoggedRun {
  BenchReport report;
  std::string log_text;
};
LoggedRun run_bench_logged(const BenchSpec& spec);

struct VerifyReport {
  unsigned rounds = 0;
  unsigned passed = 0;
  std::vector<std::string> failures;
  bool ok() const { return passed == rounds; }
};

// Runs small fully-logged rounds, checking each against the offline
// oracle: conflict serializability plus matching serial replay under the
// basic scheduler; view serializability plus replay under the extended
// scheduler (commutative-insert rounds).
VerifyReport run_verify(const BenchSpec& spec);

}  // namespace blocktx::bench
