#include "blocktx/oracle.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace blocktx::oracle {

ParsedLog parse_schedule(const std::vector<ScheduleEvent>& events) {
  ParsedLog out;
  std::set<TxId> started;
  // (tx, op) -> in-flight record; actions appear only in the successful
  // attempt's clearing phase, so accumulating per op id is safe.
  std::map<std::pair<TxId, OpId>, OpRecord> pending;
  std::map<TxId, std::vector<OpRecord>> all_ops;

  for (const ScheduleEvent& e : events) {
    switch (e.kind) {
      case ScheduleEvent::Kind::BeginTx:
        if (!started.insert(e.tx).second)
          throw std::invalid_argument("log: duplicate begin_tx");
        break;
      case ScheduleEvent::Kind::Commit:
        out.committed.insert(e.tx);
        break;
      case ScheduleEvent::Kind::AbortTx:
        out.aborted.insert(e.tx);
        break;
      case ScheduleEvent::Kind::EndTx:
        break;
      case ScheduleEvent::Kind::BeginOp: {
        OpRecord rec;
        rec.op = e.op;
        rec.op_type = e.op_type;
        rec.args = e.args;
        pending[{e.tx, e.op}] = std::move(rec);
        break;
      }
      case ScheduleEvent::Kind::Action: {
        auto it = pending.find({e.tx, e.op});
        if (it == pending.end()) throw std::invalid_argument("log: action outside operation");
        ActionRecord a{e.block, e.mode, e.latch_snapshot};
        it->second.actions.push_back(a);
        out.block_actions[e.block].emplace_back(e.tx, a);
        break;
      }
      case ScheduleEvent::Kind::LockAcquired:
        break;
      case ScheduleEvent::Kind::EndOpOk: {
        auto it = pending.find({e.tx, e.op});
        if (it == pending.end()) throw std::invalid_argument("log: end_op without begin_op");
        it->second.result = e.result;
        all_ops[e.tx].push_back(std::move(it->second));
        pending.erase(it);
        break;
      }
      case ScheduleEvent::Kind::EndOpFail:
        break;  // failed attempts leave no visible accesses
    }
  }

  for (TxId tx : started) {
    if (!out.committed.contains(tx) && !out.aborted.contains(tx)) out.incomplete.insert(tx);
  }
  for (auto& [tx, ops] : all_ops) {
    if (out.committed.contains(tx)) out.ops[tx] = std::move(ops);
  }
  for (TxId tx : out.committed) out.ops.try_emplace(tx);

  // Well-formedness: per block the latch snapshots are exactly 0..n-1.
  for (const auto& [block, actions] : out.block_actions) {
    std::set<std::uint64_t> snaps;
    for (const auto& [tx, a] : actions) {
      if (!snaps.insert(a.latch_snapshot).second)
        throw std::invalid_argument("log: duplicate latch snapshot on block");
    }
    if (!snaps.empty() && (*snaps.rbegin() != snaps.size() - 1 || *snaps.begin() != 0))
      throw std::invalid_argument("log: latch snapshots not dense");
  }
  return out;
}

DependencyGraph build_graph(const ParsedLog& log, const SemanticsRegistry& registry) {
  DependencyGraph g;
  g.nodes = log.committed;

  // Per block: committed accesses ordered by latch snapshot; one edge per
  // conflicting pair of operation instances.
  struct Access {
    TxId tx;
    const OpRecord* op;
    AccessMode mode;
    std::uint64_t snap;
  };
  std::map<BlockId, std::vector<Access>> per_block;
  for (const auto& [tx, ops] : log.ops) {
    for (const OpRecord& op : ops) {
      for (const ActionRecord& a : op.actions) {
        per_block[a.block].push_back(Access{tx, &op, a.mode, a.latch_snapshot});
      }
    }
  }
  for (auto& [block, accesses] : per_block) {
    std::sort(accesses.begin(), accesses.end(),
              [](const Access& a, const Access& b) { return a.snap < b.snap; });
    for (std::size_t i = 0; i < accesses.size(); ++i) {
      for (std::size_t j = i + 1; j < accesses.size(); ++j) {
        const Access& a = accesses[i];
        const Access& b = accesses[j];
        if (a.tx == b.tx) continue;
        if (a.mode == AccessMode::Read && b.mode == AccessMode::Read) continue;
        EdgeKind kind = a.mode == AccessMode::Write
                            ? (b.mode == AccessMode::Write ? EdgeKind::WW : EdgeKind::WR)
                            : EdgeKind::RW;
        bool commutative = registry.commutative(a.op->op_type, a.op->args, b.op->op_type,
                                                b.op->args);
        g.edges.push_back(Edge{a.tx, b.tx, block, kind, commutative});
      }
    }
  }
  return g;
}

namespace {

CycleCheck find_cycle(const DependencyGraph& g, bool ignore_commutative) {
  std::map<TxId, std::vector<TxId>> adj;
  for (const Edge& e : g.edges) {
    if (ignore_commutative && e.commutative) continue;
    if (e.from != e.to) adj[e.from].push_back(e.to);
  }
  std::map<TxId, int> color;  // 0 white, 1 grey, 2 black
  std::vector<TxId> path;
  CycleCheck out;

  // Iterative DFS keeping the grey path for the witness.
  for (TxId start : g.nodes) {
    if (color[start] != 0) continue;
    std::vector<std::pair<TxId, std::size_t>> stack{{start, 0}};
    path.clear();
    color[start] = 1;
    path.push_back(start);
    while (!stack.empty()) {
      auto& [cur, next_idx] = stack.back();
      auto& targets = adj[cur];
      if (next_idx < targets.size()) {
        TxId to = targets[next_idx++];
        if (color[to] == 1) {
          auto it = std::find(path.begin(), path.end(), to);
          out.acyclic = false;
          out.cycle.assign(it, path.end());
          return out;
        }
        if (color[to] == 0) {
          color[to] = 1;
          path.push_back(to);
          stack.push_back({to, 0});
        }
      } else {
        color[cur] = 2;
        path.pop_back();
        stack.pop_back();
      }
    }
  }
  return out;
}

}  // namespace

CycleCheck check_conflict_serializable(const DependencyGraph& g) { return find_cycle(g, false); }

CycleCheck check_view_serializable(const DependencyGraph& g) { return find_cycle(g, true); }

std::optional<std::vector<TxId>> topological_order(const DependencyGraph& g,
                                                   bool ignore_commutative_edges) {
  std::map<TxId, std::set<TxId>> adj;
  std::map<TxId, std::size_t> indegree;
  for (TxId n : g.nodes) indegree[n] = 0;
  for (const Edge& e : g.edges) {
    if (ignore_commutative_edges && e.commutative) continue;
    if (e.from == e.to) continue;
    if (adj[e.from].insert(e.to).second) indegree[e.to] += 1;
  }
  std::set<TxId> ready;
  for (const auto& [n, d] : indegree) {
    if (d == 0) ready.insert(n);
  }
  std::vector<TxId> order;
  while (!ready.empty()) {
    TxId n = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(n);
    for (TxId to : adj[n]) {
      if (--indegree[to] == 0) ready.insert(to);
    }
  }
  if (order.size() != g.nodes.size()) return std::nullopt;
  return order;
}

namespace {

bool replay_order(const ParsedLog& log, const EngineFactory& factory,
                  const StateExtractor& extract, const std::string& actual_state,
                  const std::vector<TxId>& order) {
  std::unique_ptr<Engine> engine = factory();
  for (TxId tx : order) {
    engine->begin_tx(tx);
    for (const OpRecord& op : log.ops.at(tx)) {
      OpResult r;
      try {
        r = engine->execute(tx, op.op_type, op.args);
      } catch (const std::exception&) {
        return false;  // this order drives the client into an error path
      }
      if (r.status != OpResult::Status::Ok || r.value != op.result) return false;
    }
    if (engine->end_tx(tx) != TxOutcome::Committed) return false;
  }
  return extract(*engine) == actual_state;
}

}  // namespace

ReplayResult replay_equivalence(const ParsedLog& log, const EngineFactory& factory,
                                const StateExtractor& extract, const std::string& actual_state,
                                const std::vector<std::vector<TxId>>& hints) {
  std::vector<TxId> txs(log.committed.begin(), log.committed.end());
  if (txs.size() > 8) throw std::invalid_argument("replay_equivalence: too many transactions");

  ReplayResult out;
  auto is_permutation = [&](const std::vector<TxId>& order) {
    if (order.size() != txs.size()) return false;
    std::set<TxId> s(order.begin(), order.end());
    return s.size() == order.size() &&
           std::all_of(order.begin(), order.end(), [&](TxId t) { return log.committed.contains(t); });
  };

  std::set<std::vector<TxId>> tried;
  for (const std::vector<TxId>& hint : hints) {
    if (!is_permutation(hint) || tried.contains(hint)) continue;
    tried.insert(hint);
    ++out.orders_tried;
    if (replay_order(log, factory, extract, actual_state, hint)) {
      out.matched = true;
      out.order = hint;
      return out;
    }
  }

  std::sort(txs.begin(), txs.end());
  do {
    if (tried.contains(txs)) continue;
    ++out.orders_tried;
    if (replay_order(log, factory, extract, actual_state, txs)) {
      out.matched = true;
      out.order = txs;
      return out;
    }
  } while (std::next_permutation(txs.begin(), txs.end()));
  return out;
}

std::string describe(const CycleCheck& check) {
  if (check.acyclic) return "acyclic";
  std::ostringstream out;
  out << "cycle:";
  for (TxId tx : check.cycle) out << ' ' << tx;
  return out.str();
}

}  // namespace blocktx::oracle
