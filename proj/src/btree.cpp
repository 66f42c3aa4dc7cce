#include "blocktx/btree.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace blocktx::btree {

namespace {

// Meta page (block 0) field offsets.
constexpr std::size_t kMagicOff = 0;
constexpr std::size_t kRootOff = 8;
constexpr std::size_t kHeightOff = 16;
constexpr std::size_t kFreeHeadOff = 24;
constexpr std::size_t kNextUnusedOff = 32;
constexpr std::size_t kLimitOff = 40;
constexpr std::uint32_t kMagic = 0xB7EE0001;

// Node page layout: kind u16, nkeys u16, then a u64 header slot (right
// sibling for leaves, leftmost child for internals, next-free for free
// pages), then 16-byte entries.
constexpr std::size_t kKindOff = 0;
constexpr std::size_t kNKeysOff = 2;
constexpr std::size_t kHeadSlotOff = 8;
constexpr std::size_t kEntriesOff = 16;
constexpr std::uint16_t kFreePage = 0;
constexpr std::uint16_t kInternal = 1;
constexpr std::uint16_t kLeaf = 2;

std::size_t entry_capacity(std::size_t block_size) { return (block_size - kEntriesOff) / 16; }

std::uint64_t entry_a(ByteView page, std::size_t i) { return get_u64(page, kEntriesOff + 16 * i); }
std::uint64_t entry_b(ByteView page, std::size_t i) {
  return get_u64(page, kEntriesOff + 16 * i + 8);
}

struct MetaView {
  std::uint64_t root, height, free_head, next_unused, limit;
};

MetaView read_meta(ByteView page) {
  if (get_u32(page, kMagicOff) != kMagic) throw std::runtime_error("btree: bad meta page");
  return MetaView{get_u64(page, kRootOff), get_u64(page, kHeightOff), get_u64(page, kFreeHeadOff),
                  get_u64(page, kNextUnusedOff), get_u64(page, kLimitOff)};
}

void write_meta(std::span<std::byte> page, const MetaView& m) {
  put_u32(page, kMagicOff, kMagic);
  put_u64(page, kRootOff, m.root);
  put_u64(page, kHeightOff, m.height);
  put_u64(page, kFreeHeadOff, m.free_head);
  put_u64(page, kNextUnusedOff, m.next_unused);
  put_u64(page, kLimitOff, m.limit);
}

// In-memory node image used while editing.
struct Node {
  std::uint16_t kind = kLeaf;
  std::uint64_t head = 0;  // sibling (leaf) or leftmost child (internal)
  std::vector<std::pair<std::uint64_t, std::uint64_t>> entries;

  static Node parse(ByteView page) {
    Node n;
    n.kind = get_u16(page, kKindOff);
    n.head = get_u64(page, kHeadSlotOff);
    std::size_t count = get_u16(page, kNKeysOff);
    n.entries.reserve(count);
    for (std::size_t i = 0; i < count; ++i) n.entries.emplace_back(entry_a(page, i), entry_b(page, i));
    return n;
  }

  Bytes serialize(std::size_t block_size) const {
    Bytes page(block_size);
    put_u16(page, kKindOff, kind);
    put_u16(page, kNKeysOff, static_cast<std::uint16_t>(entries.size()));
    put_u64(page, kHeadSlotOff, head);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      put_u64(page, kEntriesOff + 16 * i, entries[i].first);
      put_u64(page, kEntriesOff + 16 * i + 8, entries[i].second);
    }
    return page;
  }
};

// Child covering `key`: entries hold (separator, child); entry i covers
// keys >= separator_i until the next separator; head covers the rest below.
std::uint64_t child_for(const Node& node, std::uint64_t key) {
  std::uint64_t child = node.head;
  for (const auto& [sep, c] : node.entries) {
    if (key < sep) break;
    child = c;
  }
  return child;
}

struct PathStep {
  BlockId block;
  Node node;
};

// Allocates a block from the free list or the untouched tail. Mutates the
// local meta copy; the caller writes the meta page back once.
BlockId allocate(OpHandle& h, MetaView& meta, bool& meta_dirty) {
  if (meta.free_head != 0) {
    BlockId id = meta.free_head;
    const Bytes& page = h.read(id);
    if (get_u16(page, kKindOff) != kFreePage) throw std::runtime_error("btree: corrupt free list");
    meta.free_head = get_u64(page, kHeadSlotOff);
    meta_dirty = true;
    return id;
  }
  if (meta.next_unused >= meta.limit) throw std::runtime_error("btree: out of pages");
  BlockId id = meta.next_unused;
  meta.next_unused += 1;
  meta_dirty = true;
  return id;
}

Bytes encode_bool(bool v) {
  Bytes out(1);
  out[0] = static_cast<std::byte>(v ? 1 : 0);
  return out;
}

// insert args: key u64, value u64, flags u8 (bit0 = latch leaf for update)
// erase args:  key u64, flags u8
constexpr std::size_t kInsertArgsSize = 17;
constexpr std::size_t kEraseArgsSize = 9;

Bytes insert_program(OpHandle& h, ByteView args) {
  if (args.size() != kInsertArgsSize) throw std::invalid_argument("btree insert: bad args");
  std::uint64_t key = get_u64(args, 0);
  std::uint64_t value = get_u64(args, 8);
  bool leaf_for_update = std::to_integer<int>(args[16]) & 1;
  std::size_t cap = entry_capacity(h.block_size());

  MetaView meta = read_meta(h.read(0));
  bool meta_dirty = false;

  // Descend, keeping the internal path for split propagation.
  std::vector<PathStep> path;
  BlockId cur = meta.root;
  for (std::uint64_t level = 1; level < meta.height; ++level) {
    Node node = Node::parse(h.read(cur));
    BlockId next = child_for(node, key);
    path.push_back(PathStep{cur, std::move(node)});
    cur = next;
  }
  Node leaf = Node::parse(leaf_for_update ? h.read_for_update(cur) : h.read(cur));

  auto pos = std::lower_bound(leaf.entries.begin(), leaf.entries.end(), key,
                              [](const auto& e, std::uint64_t k) { return e.first < k; });
  if (pos != leaf.entries.end() && pos->first == key) return encode_bool(false);
  leaf.entries.insert(pos, {key, value});

  if (leaf.entries.size() <= cap) {
    h.write(cur, leaf.serialize(h.block_size()));
    if (meta_dirty) {
      Bytes mp = h.read(0);
      write_meta(mp, meta);
      h.write(0, mp);
    }
    return encode_bool(true);
  }

  // Leaf split: right half moves to a fresh page, separator goes up.
  BlockId right_id = allocate(h, meta, meta_dirty);
  Node right;
  right.kind = kLeaf;
  std::size_t mid = leaf.entries.size() / 2;
  right.entries.assign(leaf.entries.begin() + mid, leaf.entries.end());
  leaf.entries.resize(mid);
  right.head = leaf.head;
  leaf.head = right_id;
  h.write(cur, leaf.serialize(h.block_size()));
  h.write(right_id, right.serialize(h.block_size()));

  std::uint64_t sep = right.entries.front().first;
  BlockId child = right_id;
  bool done = false;
  while (!path.empty() && !done) {
    PathStep step = std::move(path.back());
    path.pop_back();
    Node& node = step.node;
    auto ipos = std::lower_bound(node.entries.begin(), node.entries.end(), sep,
                                 [](const auto& e, std::uint64_t k) { return e.first < k; });
    node.entries.insert(ipos, {sep, child});
    if (node.entries.size() <= cap) {
      h.write(step.block, node.serialize(h.block_size()));
      done = true;
      break;
    }
    // Internal split: promote the middle separator.
    std::size_t imid = node.entries.size() / 2;
    std::uint64_t promoted = node.entries[imid].first;
    BlockId new_id = allocate(h, meta, meta_dirty);
    Node upper;
    upper.kind = kInternal;
    upper.head = node.entries[imid].second;
    upper.entries.assign(node.entries.begin() + imid + 1, node.entries.end());
    node.entries.resize(imid);
    h.write(step.block, node.serialize(h.block_size()));
    h.write(new_id, upper.serialize(h.block_size()));
    sep = promoted;
    child = new_id;
  }
  if (!done) {
    // The root itself split: grow the tree by one level.
    BlockId new_root = allocate(h, meta, meta_dirty);
    Node root;
    root.kind = kInternal;
    root.head = meta.root;
    root.entries = {{sep, child}};
    h.write(new_root, root.serialize(h.block_size()));
    meta.root = new_root;
    meta.height += 1;
    meta_dirty = true;
  }
  if (meta_dirty) {
    Bytes mp = h.read(0);
    write_meta(mp, meta);
    h.write(0, mp);
  }
  return encode_bool(true);
}

Bytes erase_program(OpHandle& h, ByteView args) {
  if (args.size() != kEraseArgsSize) throw std::invalid_argument("btree erase: bad args");
  std::uint64_t key = get_u64(args, 0);
  bool leaf_for_update = std::to_integer<int>(args[8]) & 1;

  MetaView meta = read_meta(h.read(0));
  BlockId cur = meta.root;
  for (std::uint64_t level = 1; level < meta.height; ++level) {
    Node node = Node::parse(h.read(cur));
    cur = child_for(node, key);
  }
  Node leaf = Node::parse(leaf_for_update ? h.read_for_update(cur) : h.read(cur));
  auto pos = std::lower_bound(leaf.entries.begin(), leaf.entries.end(), key,
                              [](const auto& e, std::uint64_t k) { return e.first < k; });
  if (pos == leaf.entries.end() || pos->first != key) return encode_bool(false);
  leaf.entries.erase(pos);  // lazy: underflow tolerated, no merging
  h.write(cur, leaf.serialize(h.block_size()));
  return encode_bool(true);
}

Bytes lookup_program(OpHandle& h, ByteView args) {
  if (args.size() != 8) throw std::invalid_argument("btree lookup: bad args");
  std::uint64_t key = get_u64(args, 0);
  MetaView meta = read_meta(h.read(0));
  BlockId cur = meta.root;
  for (std::uint64_t level = 1; level < meta.height; ++level) {
    Node node = Node::parse(h.read(cur));
    cur = child_for(node, key);
  }
  Node leaf = Node::parse(h.read(cur));
  auto pos = std::lower_bound(leaf.entries.begin(), leaf.entries.end(), key,
                              [](const auto& e, std::uint64_t k) { return e.first < k; });
  if (pos == leaf.entries.end() || pos->first != key) return Bytes(1);
  Bytes out(9);
  out[0] = static_cast<std::byte>(1);
  put_u64(out, 1, pos->second);
  return out;
}

Bytes scan_program(OpHandle& h, ByteView args) {
  if (args.size() != 16) throw std::invalid_argument("btree scan: bad args");
  std::uint64_t lo = get_u64(args, 0);
  std::uint64_t hi = get_u64(args, 8);
  if (lo > hi) throw std::invalid_argument("btree scan: lo > hi");
  MetaView meta = read_meta(h.read(0));
  BlockId cur = meta.root;
  for (std::uint64_t level = 1; level < meta.height; ++level) {
    Node node = Node::parse(h.read(cur));
    cur = child_for(node, lo);
  }
  std::vector<std::pair<std::uint64_t, std::uint64_t>> found;
  while (cur != 0) {
    Node leaf = Node::parse(h.read(cur));
    bool past_end = false;
    for (const auto& [k, v] : leaf.entries) {
      if (k > hi) {
        past_end = true;
        break;
      }
      if (k >= lo) found.emplace_back(k, v);
    }
    if (past_end) break;
    cur = leaf.head;
  }
  Bytes out(4 + 16 * found.size());
  put_u32(out, 0, static_cast<std::uint32_t>(found.size()));
  for (std::size_t i = 0; i < found.size(); ++i) {
    put_u64(out, 4 + 16 * i, found[i].first);
    put_u64(out, 4 + 16 * i + 8, found[i].second);
  }
  return out;
}

Bytes setup_program(OpHandle& h, ByteView args) {
  if (!args.empty()) throw std::invalid_argument("btree setup: bad args");
  Bytes meta_page(h.block_size());
  write_meta(meta_page, MetaView{1, 1, 0, 2, h.capacity()});
  h.write(0, meta_page);
  Node root;
  root.kind = kLeaf;
  h.write(1, root.serialize(h.block_size()));
  return {};
}

bool distinct_first_key(ByteView a, ByteView b) {
  if (a.size() < 8 || b.size() < 8) return false;
  return get_u64(a, 0) != get_u64(b, 0);
}

}  // namespace

Ops attach(Engine& engine) {
  Ops ops;
  ops.setup = engine.register_operation("btreeSetup", setup_program);
  ops.insert = engine.register_operation("btreeInsert", insert_program);
  ops.erase = engine.register_operation("btreeDelete", erase_program);
  ops.lookup = engine.register_operation("btreeLookup", lookup_program);
  ops.scan = engine.register_operation("btreeScan", scan_program);

  // Operations on distinct keys commute; same-key pairs must keep their
  // order (a duplicate insert's return value depends on it).
  engine.add_commutativity(ops.insert, ops.insert, distinct_first_key);
  engine.add_commutativity(ops.insert, ops.erase, distinct_first_key);
  engine.add_commutativity(ops.erase, ops.erase, distinct_first_key);
  engine.add_commutativity(ops.lookup, ops.insert, distinct_first_key);
  engine.add_commutativity(ops.lookup, ops.erase, distinct_first_key);

  // Deleting the key undoes an insert; the undo path latches the leaf for
  // update since the write is known upfront.
  engine.add_inverse(ops.insert, ops.erase, [](ByteView args) {
    Bytes out(kEraseArgsSize);
    std::copy(args.begin(), args.begin() + 8, out.begin());
    out[8] = static_cast<std::byte>(1);
    return out;
  });
  return ops;
}

void create(Engine& engine, const Ops& ops) {
  TxId tx = engine.begin_tx();
  OpResult r = engine.execute(tx, ops.setup, {});
  if (r.status != OpResult::Status::Ok) throw std::runtime_error("btree create failed");
  engine.end_tx(tx);
}

Bytes insert_args(std::uint64_t key, std::uint64_t value, bool leaf_for_update) {
  Bytes out(kInsertArgsSize);
  put_u64(out, 0, key);
  put_u64(out, 8, value);
  out[16] = static_cast<std::byte>(leaf_for_update ? 1 : 0);
  return out;
}

Bytes erase_args(std::uint64_t key, bool leaf_for_update) {
  Bytes out(kEraseArgsSize);
  put_u64(out, 0, key);
  out[8] = static_cast<std::byte>(leaf_for_update ? 1 : 0);
  return out;
}

Bytes lookup_args(std::uint64_t key) {
  Bytes out(8);
  put_u64(out, 0, key);
  return out;
}

Bytes scan_args(std::uint64_t lo, std::uint64_t hi) {
  Bytes out(16);
  put_u64(out, 0, lo);
  put_u64(out, 8, hi);
  return out;
}

bool decode_bool(ByteView result) {
  return result.size() == 1 && std::to_integer<int>(result[0]) == 1;
}

std::optional<std::uint64_t> decode_lookup(ByteView result) {
  if (result.empty() || std::to_integer<int>(result[0]) == 0) return std::nullopt;
  return get_u64(result, 1);
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> decode_scan(ByteView result) {
  std::uint32_t count = get_u32(result, 0);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    out.emplace_back(get_u64(result, 4 + 16 * i), get_u64(result, 4 + 16 * i + 8));
  }
  return out;
}

CallResult insert(Engine& engine, const Ops& ops, TxId tx, std::uint64_t key, std::uint64_t value,
                  bool leaf_for_update) {
  OpResult r = engine.execute(tx, ops.insert, insert_args(key, value, leaf_for_update));
  CallResult out;
  out.retries = r.retries;
  if (r.status != OpResult::Status::Ok) return out.tx_aborted = true, out;
  out.flag = decode_bool(r.value);
  return out;
}

CallResult erase(Engine& engine, const Ops& ops, TxId tx, std::uint64_t key) {
  OpResult r = engine.execute(tx, ops.erase, erase_args(key));
  CallResult out;
  out.retries = r.retries;
  if (r.status != OpResult::Status::Ok) return out.tx_aborted = true, out;
  out.flag = decode_bool(r.value);
  return out;
}

CallResult lookup(Engine& engine, const Ops& ops, TxId tx, std::uint64_t key) {
  OpResult r = engine.execute(tx, ops.lookup, lookup_args(key));
  CallResult out;
  out.retries = r.retries;
  if (r.status != OpResult::Status::Ok) return out.tx_aborted = true, out;
  out.value = decode_lookup(r.value);
  out.flag = out.value.has_value();
  return out;
}

CallResult scan(Engine& engine, const Ops& ops, TxId tx, std::uint64_t lo, std::uint64_t hi) {
  OpResult r = engine.execute(tx, ops.scan, scan_args(lo, hi));
  CallResult out;
  out.retries = r.retries;
  if (r.status != OpResult::Status::Ok) return out.tx_aborted = true, out;
  out.entries = decode_scan(r.value);
  return out;
}

std::map<std::uint64_t, std::uint64_t> key_map(Engine& engine, const Ops& ops) {
  TxId tx = engine.begin_tx();
  OpResult r = engine.execute(tx, ops.scan, scan_args(0, UINT64_MAX));
  if (r.status != OpResult::Status::Ok) {
    throw std::runtime_error("btree key_map: scan aborted");
  }
  engine.end_tx(tx);
  std::map<std::uint64_t, std::uint64_t> out;
  for (const auto& [k, v] : decode_scan(r.value)) out[k] = v;
  return out;
}

ValidationReport validate(const BlockStore& store) {
  auto fail = [](std::string msg) { return ValidationReport{false, std::move(msg)}; };
  Bytes meta_page = store.read(0);
  MetaView meta{};
  try {
    meta = read_meta(meta_page);
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  std::size_t cap = entry_capacity(store.block_size());
  std::set<BlockId> seen;
  std::vector<std::pair<BlockId, std::uint64_t>> leaves;  // in key order

  // Recursive walk with explicit stack: (block, depth, lower, upper) bounds.
  struct Frame {
    BlockId block;
    std::uint64_t depth;
    std::optional<std::uint64_t> lo, hi;
  };
  std::vector<Frame> stack{{meta.root, 1, std::nullopt, std::nullopt}};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    if (f.block == 0 || f.block >= meta.next_unused) return fail("node id out of range");
    if (!seen.insert(f.block).second) return fail("block reachable twice");
    Node node = Node::parse(store.read(f.block));
    for (std::size_t i = 0; i + 1 < node.entries.size(); ++i) {
      if (node.entries[i].first >= node.entries[i + 1].first) return fail("unsorted node");
    }
    for (const auto& [k, v] : node.entries) {
      if (f.lo && k < *f.lo) return fail("key below subtree bound");
      if (f.hi && k >= *f.hi) return fail("key above subtree bound");
    }
    if (node.entries.size() > cap) return fail("node overflow");
    if (node.kind == kLeaf) {
      if (f.depth != meta.height) return fail("leaf at wrong depth");
      leaves.emplace_back(f.block, node.head);
    } else if (node.kind == kInternal) {
      if (f.depth >= meta.height) return fail("internal node at leaf depth");
      if (node.entries.empty()) return fail("internal node without separators");
      if (f.block != meta.root && node.entries.size() < cap / 2) return fail("internal underflow");
      stack.push_back({node.head, f.depth + 1, f.lo, node.entries.front().first});
      for (std::size_t i = 0; i < node.entries.size(); ++i) {
        auto next_hi = i + 1 < node.entries.size()
                           ? std::optional<std::uint64_t>(node.entries[i + 1].first)
                           : f.hi;
        stack.push_back({node.entries[i].second, f.depth + 1, node.entries[i].first, next_hi});
      }
    } else {
      return fail("free page reachable from root");
    }
  }

  // The sibling chain must visit exactly the reachable leaves, left to right.
  std::set<BlockId> leaf_set;
  for (const auto& [block, sib] : leaves) leaf_set.insert(block);
  // Find leftmost leaf by descending head pointers.
  BlockId cur = meta.root;
  for (std::uint64_t level = 1; level < meta.height; ++level) {
    cur = Node::parse(store.read(cur)).head;
  }
  std::size_t chained = 0;
  std::uint64_t last_key = 0;
  bool have_last = false;
  while (cur != 0) {
    if (!leaf_set.contains(cur)) return fail("sibling chain leaves the tree");
    Node leaf = Node::parse(store.read(cur));
    for (const auto& [k, v] : leaf.entries) {
      if (have_last && k <= last_key) return fail("sibling chain out of key order");
      last_key = k;
      have_last = true;
    }
    ++chained;
    cur = leaf.head;
  }
  if (chained != leaves.size()) return fail("sibling chain misses leaves");

  // Free list: disjoint from the tree, inside the allocated range.
  BlockId free_cur = meta.free_head;
  std::size_t free_count = 0;
  while (free_cur != 0) {
    if (free_cur >= meta.next_unused) return fail("free page out of range");
    if (seen.contains(free_cur)) return fail("free page reachable from root");
    if (!seen.insert(free_cur).second) return fail("free list cycle");
    Bytes page = store.read(free_cur);
    if (get_u16(page, kKindOff) != kFreePage) return fail("free list points at live page");
    free_cur = get_u64(page, kHeadSlotOff);
    if (++free_count > meta.next_unused) return fail("free list does not terminate");
  }
  return ValidationReport{};
}

}  // namespace blocktx::btree
