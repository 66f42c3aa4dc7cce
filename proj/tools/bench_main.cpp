#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "blocktx/bench.hpp"

int main(int argc, char** argv) {
  CLI::App app{"blocktx workload driver: runs contention benchmarks against the block "
               "transaction engine and emits one CSV row per run"};

  std::string workload = "btree-random";
  std::string mode = "basic";
  std::string log = "off";
  blocktx::bench::BenchSpec spec;

  app.add_option("--workload", workload,
                 "btree-random | btree-sequential | corner-case | short-txn | long-txn | "
                 "mixed-ops | verify")
      ->capture_default_str();
  app.add_option("--workers", spec.workers, "concurrent worker sessions")->capture_default_str();
  app.add_option("--duration-secs", spec.duration_secs, "measured run time (plus warm-up)")
      ->capture_default_str();
  app.add_option("--ops-per-txn", spec.ops_per_txn,
                 "operations per transaction (0 = workload default)")
      ->capture_default_str();
  app.add_option("--mode", mode, "basic | extended")->capture_default_str();
  app.add_option("--seed", spec.seed, "workload RNG seed")->capture_default_str();
  app.add_option("--block-size", spec.block_size, "block size in bytes")->capture_default_str();
  app.add_option("--capacity", spec.capacity, "store capacity in blocks")->capture_default_str();
  app.add_option("--log", log, "off | full (schedule logging)")->capture_default_str();
  app.add_option("--total-ops", spec.total_ops,
                 "stop after this many operations instead of after --duration-secs")
      ->capture_default_str();
  app.add_option("--key-space", spec.key_space, "b-tree key range")->capture_default_str();
  app.add_option("--corner-reads", spec.corner_reads, "random reads per corner operation")
      ->capture_default_str();
  app.add_option("--corner-region", spec.corner_region, "blocks in the corner read region")
      ->capture_default_str();
  app.add_option("--mixed-long-permille", spec.mixed_long_permille,
                 "share of 100-record operations in mixed-ops, per mille")
      ->capture_default_str();
  app.add_option("--rounds", spec.verify_rounds, "verify rounds")->capture_default_str();
  app.add_option("--verify-txns", spec.verify_txns, "max transactions per verify round")
      ->capture_default_str();
  app.add_option("--verify-ops", spec.verify_ops, "max operations per verify transaction")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    spec.workload = blocktx::bench::workload_from_name(workload);
    if (mode == "basic") {
      spec.mode = blocktx::SchedulerMode::Basic;
    } else if (mode == "extended") {
      spec.mode = blocktx::SchedulerMode::Extended;
    } else {
      throw std::invalid_argument("unknown mode: " + mode);
    }
    if (log == "full") {
      spec.log_full = true;
    } else if (log != "off") {
      throw std::invalid_argument("unknown log setting: " + log);
    }

    if (spec.workload == blocktx::bench::Workload::Verify) {
      spec.verify_workers = spec.workers >= 1 ? spec.workers : 4;
      blocktx::bench::VerifyReport report = blocktx::bench::run_verify(spec);
      std::cerr << "verify mode=" << mode << ": " << report.passed << "/" << report.rounds
                << " rounds passed\n";
      for (const std::string& f : report.failures) std::cerr << "  " << f << '\n';
      return report.ok() ? 0 : 1;
    }

    blocktx::bench::BenchReport report = blocktx::bench::run_bench(spec);
    std::cout << blocktx::bench::BenchReport::csv_header() << '\n' << report.csv_row() << '\n';
    std::cerr << report.summary() << '\n';
    if (report.progressiveness_violations > 0 || report.phase_order_violations > 0) {
      std::cerr << "invariant violation: progressiveness=" << report.progressiveness_violations
                << " phase-order=" << report.phase_order_violations << '\n';
      return 2;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 64;
  }
}
