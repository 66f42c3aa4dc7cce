#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "blocktx/engine.hpp"
#include "blocktx/types.hpp"

namespace blocktx::btree {

// A paged B+tree with fixed-width keys and values, implemented entirely
// through the engine's operation handle: block 0 holds the tree metadata
// and free list, every node is one block. Deletion is lazy (no merging),
// which keeps delete-of-inserted-key an exact logical inverse of insert.

struct Ops {
  OpType setup = kInvalidOpType;
  OpType insert = kInvalidOpType;
  OpType erase = kInvalidOpType;
  OpType lookup = kInvalidOpType;
  OpType scan = kInvalidOpType;
};

// Registers the tree's operation programs and declares their semantics:
// distinct-key inserts/deletes commute, lookups commute with writes of
// other keys, and erase(key) is the inverse of insert(key, value).
Ops attach(Engine& engine);

// Initializes an empty tree via a setup operation in its own transaction.
void create(Engine& engine, const Ops& ops);

// Argument and result codecs (arguments are opaque to the engine).
Bytes insert_args(std::uint64_t key, std::uint64_t value, bool leaf_for_update = false);
Bytes erase_args(std::uint64_t key, bool leaf_for_update = true);
Bytes lookup_args(std::uint64_t key);
Bytes scan_args(std::uint64_t lo, std::uint64_t hi);

bool decode_bool(ByteView result);
std::optional<std::uint64_t> decode_lookup(ByteView result);
std::vector<std::pair<std::uint64_t, std::uint64_t>> decode_scan(ByteView result);

// Single-call conveniences; each runs one operation inside the given
// transaction and decodes the result. TxAborted surfaces as nullopt-like
// OpResult status, which the caller must check via engine state.
struct CallResult {
  bool tx_aborted = false;
  bool flag = false;
  std::optional<std::uint64_t> value;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> entries;
  std::uint32_t retries = 0;
};

CallResult insert(Engine& engine, const Ops& ops, TxId tx, std::uint64_t key, std::uint64_t value,
                  bool leaf_for_update = false);
CallResult erase(Engine& engine, const Ops& ops, TxId tx, std::uint64_t key);
CallResult lookup(Engine& engine, const Ops& ops, TxId tx, std::uint64_t key);
CallResult scan(Engine& engine, const Ops& ops, TxId tx, std::uint64_t lo, std::uint64_t hi);

// Committed logical state: full scan in a fresh transaction.
std::map<std::uint64_t, std::uint64_t> key_map(Engine& engine, const Ops& ops);

// Structural check over the raw store: sorted nodes, equal leaf depth,
// fan-out bounds, consistent sibling chain, and no lost or doubly-used
// pages. Leaf underflow is legal under lazy deletion.
struct ValidationReport {
  bool ok = true;
  std::string message;
};
ValidationReport validate(const BlockStore& store);

}  // namespace blocktx::btree
