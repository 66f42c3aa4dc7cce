#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "blocktx/engine.hpp"
#include "blocktx/schedule_log.hpp"
#include "blocktx/semantics.hpp"
#include "blocktx/types.hpp"

namespace blocktx::oracle {

// One recorded access of a successful operation.
struct ActionRecord {
  BlockId block;
  AccessMode mode;
  std::uint64_t latch_snapshot;
};

// One successful operation of a transaction, as recorded in the log.
struct OpRecord {
  OpId op = 0;
  OpType op_type = kInvalidOpType;
  Bytes args;
  Bytes result;
  std::vector<ActionRecord> actions;
};

struct ParsedLog {
  std::set<TxId> committed;
  std::set<TxId> aborted;
  std::set<TxId> incomplete;                // neither committed nor aborted
  std::map<TxId, std::vector<OpRecord>> ops;  // per committed tx, program order
  // Every logged action keyed by block, including those of aborted
  // transactions (used for well-formedness checking).
  std::map<BlockId, std::vector<std::pair<TxId, ActionRecord>>> block_actions;
};

// Validates well-formedness (per-block latch snapshots form a dense,
// duplicate-free 0..n-1 sequence) and throws std::invalid_argument on a
// malformed log.
ParsedLog parse_schedule(const std::vector<ScheduleEvent>& events);

enum class EdgeKind : std::uint8_t { WW, WR, RW };

struct Edge {
  TxId from;
  TxId to;
  BlockId block;
  EdgeKind kind;
  bool commutative;  // both endpoint operation instances commute per registry
};

struct DependencyGraph {
  std::set<TxId> nodes;  // committed transactions
  std::vector<Edge> edges;
};

// Edges between distinct committed transactions for each conflicting pair
// of accesses (at least one write), ordered by the per-block latch counter.
DependencyGraph build_graph(const ParsedLog& log, const SemanticsRegistry& registry);

struct CycleCheck {
  bool acyclic = true;
  std::vector<TxId> cycle;  // witness when cyclic
};

// Acyclicity over all edges.
CycleCheck check_conflict_serializable(const DependencyGraph& g);
// Acyclicity after removing edges whose conflicts are all commutative.
CycleCheck check_view_serializable(const DependencyGraph& g);

// A serial order consistent with the (optionally commutativity-reduced)
// dependency graph, or nullopt if it is cyclic.
std::optional<std::vector<TxId>> topological_order(const DependencyGraph& g,
                                                   bool ignore_commutative_edges);

using EngineFactory = std::function<std::unique_ptr<Engine>()>;
// Canonical logical state of the client, e.g. the serialized key map.
using StateExtractor = std::function<std::string(Engine&)>;

struct ReplayResult {
  bool matched = false;
  std::vector<TxId> order;
  std::uint64_t orders_tried = 0;
};

// Replays serial orders of the committed transactions on fresh engines and
// returns the first order whose per-operation results and final logical
// state equal the actual run. `hint` orders are tried before the full
// factorial enumeration (at most 8 transactions).
ReplayResult replay_equivalence(const ParsedLog& log, const EngineFactory& factory,
                                const StateExtractor& extract, const std::string& actual_state,
                                const std::vector<std::vector<TxId>>& hints = {});

std::string describe(const CycleCheck& check);

}  // namespace blocktx::oracle
