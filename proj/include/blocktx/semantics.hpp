#pragma once

#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <utility>
#include <vector>

#include "blocktx/types.hpp"

namespace blocktx {

// Predicate over the argument bytes of two operation instances, in the
// order the pair was declared. An absent matcher means "always".
using ArgMatcher = std::function<bool(ByteView, ByteView)>;

// Derives the inverse operation's arguments from the original arguments.
using ArgTransform = std::function<Bytes(ByteView)>;

// Declared data semantics: which operation types commute (per instance,
// gated by matchers) and which operation type undoes which.
class SemanticsRegistry {
 public:
  // Records the symmetric pair; declaring (a, b) also answers for (b, a).
  void add_commutativity(OpType a, OpType b, ArgMatcher matcher = {});

  void add_inverse(OpType op, OpType inverse_op, ArgTransform transform);

  bool commutative(OpType a, ByteView args_a, OpType b, ByteView args_b) const;

  struct InverseRule {
    OpType inverse_op;
    ArgTransform transform;
  };
  std::optional<InverseRule> inverse_of(OpType op) const;

 private:
  struct CommutativeRule {
    bool flipped;  // declaration order relative to the canonical key
    ArgMatcher matcher;
  };

  static std::pair<OpType, OpType> key(OpType a, OpType b) {
    return a <= b ? std::pair{a, b} : std::pair{b, a};
  }

  mutable std::shared_mutex mutex_;
  std::map<std::pair<OpType, OpType>, std::vector<CommutativeRule>> commutative_;
  std::map<OpType, InverseRule> inverse_;
};

}  // namespace blocktx
