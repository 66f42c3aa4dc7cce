#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "blocktx/bench.hpp"
#include "blocktx/btree.hpp"
#include "blocktx/engine.hpp"
#include "blocktx/oracle.hpp"

namespace py = pybind11;

namespace {

using namespace blocktx;

SchedulerMode mode_from_string(const std::string& mode) {
  if (mode == "basic") return SchedulerMode::Basic;
  if (mode == "extended") return SchedulerMode::Extended;
  throw std::invalid_argument("mode must be 'basic' or 'extended'");
}

// Engine plus an attached B-tree: the surface the python smoke tests use.
class PyBtreeEngine {
 public:
  PyBtreeEngine(std::size_t block_size, std::size_t capacity, const std::string& mode,
                bool log_full) {
    EngineConfig cfg;
    cfg.block_size = block_size;
    cfg.capacity = capacity;
    cfg.mode = mode_from_string(mode);
    cfg.log_full = log_full;
    engine_ = std::make_unique<Engine>(cfg);
    tree_ = btree::attach(*engine_);
    btree::create(*engine_, tree_);
  }

  TxId begin() { return engine_->begin_tx(); }

  std::string end(TxId tx) {
    return engine_->end_tx(tx) == TxOutcome::Committed ? "committed" : "aborted";
  }

  void abort(TxId tx) { engine_->abort_tx(tx); }

  bool insert(TxId tx, std::uint64_t key, std::uint64_t value, bool leaf_for_update) {
    btree::CallResult r = btree::insert(*engine_, tree_, tx, key, value, leaf_for_update);
    if (r.tx_aborted) throw_aborted();
    return r.flag;
  }

  bool remove(TxId tx, std::uint64_t key) {
    btree::CallResult r = btree::erase(*engine_, tree_, tx, key);
    if (r.tx_aborted) throw_aborted();
    return r.flag;
  }

  std::optional<std::uint64_t> lookup(TxId tx, std::uint64_t key) {
    btree::CallResult r = btree::lookup(*engine_, tree_, tx, key);
    if (r.tx_aborted) throw_aborted();
    return r.value;
  }

  std::vector<std::pair<std::uint64_t, std::uint64_t>> scan(TxId tx, std::uint64_t lo,
                                                            std::uint64_t hi) {
    btree::CallResult r = btree::scan(*engine_, tree_, tx, lo, hi);
    if (r.tx_aborted) throw_aborted();
    return r.entries;
  }

  std::map<std::uint64_t, std::uint64_t> keys() { return btree::key_map(*engine_, tree_); }

  std::map<std::string, std::uint64_t> stats() const {
    EngineStats s = engine_->stats();
    return {
        {"txs_started", s.txs_started},
        {"txs_committed", s.txs_committed},
        {"txs_aborted", s.txs_aborted},
        {"deadlock_victims", s.deadlock_victims},
        {"counter_gap_aborts", s.counter_gap_aborts},
        {"uncommitted_data_aborts", s.uncommitted_data_aborts},
        {"ops_completed", s.ops_completed},
        {"op_failures", s.op_failures},
        {"op_retries", s.op_retries},
        {"max_retries", s.max_retries},
        {"progressiveness_violations", s.progressiveness_violations},
        {"phase_order_violations", s.phase_order_violations},
    };
  }

  std::string export_log() const { return engine_->export_log(); }

  bool validate() const { return btree::validate(engine_->store()).ok; }

 private:
  [[noreturn]] void throw_aborted() { throw std::runtime_error("transaction aborted"); }

  std::unique_ptr<Engine> engine_;
  btree::Ops tree_;
};

bench::BenchSpec spec_from_kwargs(const std::string& workload, unsigned workers,
                                  double duration_secs, unsigned ops_per_txn,
                                  const std::string& mode, std::uint64_t seed,
                                  std::size_t block_size, std::uint64_t total_ops,
                                  unsigned rounds) {
  bench::BenchSpec spec;
  spec.workload = bench::workload_from_name(workload);
  spec.workers = workers;
  spec.duration_secs = duration_secs;
  spec.ops_per_txn = ops_per_txn;
  spec.mode = mode_from_string(mode);
  spec.seed = seed;
  spec.block_size = block_size;
  spec.total_ops = total_ops;
  spec.verify_rounds = rounds;
  return spec;
}

py::dict report_to_dict(const bench::BenchReport& r) {
  py::dict d;
  d["workload"] = r.workload;
  d["workers"] = r.workers;
  d["mode"] = r.mode;
  d["throughput"] = r.throughput;
  d["abort_rate"] = r.abort_rate;
  d["mean_retries"] = r.mean_retries;
  d["max_retries"] = r.max_retries;
  d["deadlocks"] = r.deadlocks;
  d["counter_gap_aborts"] = r.counter_gap_aborts;
  d["started"] = r.started;
  d["committed"] = r.committed;
  d["aborted"] = r.aborted;
  d["ops"] = r.ops;
  d["progressiveness_violations"] = r.progressiveness_violations;
  d["phase_order_violations"] = r.phase_order_violations;
  d["csv"] = r.csv_row();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Transactional block-storage engine with two-level concurrency control";

  py::class_<PyBtreeEngine>(m, "BtreeEngine")
      .def(py::init<std::size_t, std::size_t, const std::string&, bool>(),
           py::arg("block_size") = 4096, py::arg("capacity") = 4096, py::arg("mode") = "extended",
           py::arg("log") = false)
      .def("begin", &PyBtreeEngine::begin, py::call_guard<py::gil_scoped_release>())
      .def("end", &PyBtreeEngine::end, py::arg("tx"), py::call_guard<py::gil_scoped_release>())
      .def("abort", &PyBtreeEngine::abort, py::arg("tx"),
           py::call_guard<py::gil_scoped_release>())
      .def("insert", &PyBtreeEngine::insert, py::arg("tx"), py::arg("key"), py::arg("value"),
           py::arg("leaf_for_update") = false, py::call_guard<py::gil_scoped_release>())
      .def("remove", &PyBtreeEngine::remove, py::arg("tx"), py::arg("key"),
           py::call_guard<py::gil_scoped_release>())
      .def("lookup", &PyBtreeEngine::lookup, py::arg("tx"), py::arg("key"),
           py::call_guard<py::gil_scoped_release>())
      .def("scan", &PyBtreeEngine::scan, py::arg("tx"), py::arg("lo"), py::arg("hi"),
           py::call_guard<py::gil_scoped_release>())
      .def("keys", &PyBtreeEngine::keys, py::call_guard<py::gil_scoped_release>())
      .def("stats", &PyBtreeEngine::stats)
      .def("export_log", &PyBtreeEngine::export_log)
      .def("validate", &PyBtreeEngine::validate, py::call_guard<py::gil_scoped_release>());

  m.def(
      "run_bench",
      [](const std::string& workload, unsigned workers, double duration_secs, unsigned ops_per_txn,
         const std::string& mode, std::uint64_t seed, std::size_t block_size,
         std::uint64_t total_ops) {
        bench::BenchSpec spec = spec_from_kwargs(workload, workers, duration_secs, ops_per_txn,
                                                 mode, seed, block_size, total_ops, 0);
        bench::BenchReport report;
        {
          py::gil_scoped_release release;
          report = bench::run_bench(spec);
        }
        return report_to_dict(report);
      },
      py::arg("workload") = "btree-random", py::arg("workers") = 1,
      py::arg("duration_secs") = 1.0, py::arg("ops_per_txn") = 0, py::arg("mode") = "basic",
      py::arg("seed") = 1, py::arg("block_size") = 4096, py::arg("total_ops") = 0);

  m.def(
      "run_verify",
      [](const std::string& mode, unsigned rounds, unsigned workers, std::uint64_t seed) {
        bench::BenchSpec spec;
        spec.workload = bench::Workload::Verify;
        spec.mode = mode_from_string(mode);
        spec.verify_rounds = rounds;
        spec.verify_workers = workers;
        spec.seed = seed;
        bench::VerifyReport report;
        {
          py::gil_scoped_release release;
          report = bench::run_verify(spec);
        }
        py::dict d;
        d["rounds"] = report.rounds;
        d["passed"] = report.passed;
        d["failures"] = report.failures;
        d["ok"] = report.ok();
        return d;
      },
      py::arg("mode") = "basic", py::arg("rounds") = 10, py::arg("workers") = 4,
      py::arg("seed") = 1);
}
