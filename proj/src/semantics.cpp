#include "blocktx/semantics.hpp"

#include <mutex>

namespace blocktx {

void SemanticsRegistry::add_commutativity(OpType a, OpType b, ArgMatcher matcher) {
  std::unique_lock guard(mutex_);
  commutative_[key(a, b)].push_back(CommutativeRule{a > b, std::move(matcher)});
}

void SemanticsRegistry::add_inverse(OpType op, OpType inverse_op, ArgTransform transform) {
  std::unique_lock guard(mutex_);
  inverse_[op] = InverseRule{inverse_op, std::move(transform)};
}

bool SemanticsRegistry::commutative(OpType a, ByteView args_a, OpType b, ByteView args_b) const {
  std::shared_lock guard(mutex_);
  auto it = commutative_.find(key(a, b));
  if (it == commutative_.end()) return false;
  bool query_flipped = a > b;
  for (const CommutativeRule& rule : it->second) {
    if (!rule.matcher) return true;
    // Present the arguments in the order the rule was declared with.
    bool same_orientation = (rule.flipped == query_flipped);
    bool ok = same_orientation ? rule.matcher(args_a, args_b) : rule.matcher(args_b, args_a);
    if (ok) return true;
  }
  return false;
}

std::optional<SemanticsRegistry::InverseRule> SemanticsRegistry::inverse_of(OpType op) const {
  std::shared_lock guard(mutex_);
  auto it = inverse_.find(op);
  if (it == inverse_.end()) return std::nullopt;
  return it->second;
}

}  // namespace blocktx
