#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sift::aaf {

struct ArgumentId {
  std::uint32_t value = 0;

  constexpr ArgumentId() = default;
  constexpr explicit ArgumentId(std::uint32_t v) : value(v) {}
  constexpr auto operator<=>(const ArgumentId&) const = default;
};

using ArgumentSet = std::vector<ArgumentId>;  // kept sorted ascending

// Abstract argumentation framework <Arg, Att>. Arguments carry an opaque
// 32-bit tag for the owner's bookkeeping. Growth is append-only, and any
// earlier size can be restored with truncate(); attack insertion order is
// logged so adjacency lists unwind exactly.
class Framework {
 public:
  struct Mark {
    std::size_t arguments = 0;
    std::size_t attacks = 0;

    bool operator==(const Mark&) const = default;
  };

  ArgumentId add_argument(std::uint32_t tag = 0);
  // Duplicate attacks are ignored. Returns true if the attack is new.
  bool add_attack(ArgumentId from, ArgumentId to);
  void add_mutual_attack(ArgumentId a, ArgumentId b) {
    add_attack(a, b);
    add_attack(b, a);
  }

  std::size_t size() const { return tags_.size(); }
  std::size_t num_attacks() const { return log_.size(); }
  bool contains(ArgumentId a) const { return a.value < tags_.size(); }
  bool attacks(ArgumentId from, ArgumentId to) const;
  bool self_attacking(ArgumentId a) const { return attacks(a, a); }

  std::uint32_t tag(ArgumentId a) const { return tags_.at(a.value); }
  std::span<const ArgumentId> attackers(ArgumentId a) const { return in_.at(a.value); }
  std::span<const ArgumentId> targets(ArgumentId a) const { return out_.at(a.value); }
  // Attack pairs in insertion order.
  std::span<const std::pair<ArgumentId, ArgumentId>> attack_list() const { return log_; }

  Mark mark() const { return {tags_.size(), log_.size()}; }
  // Drops every argument and attack added after `m`. Throws ContractError
  // if `m` is ahead of the current size.
  void truncate(Mark m);

  // Structural equality (same tags, same attack set).
  bool operator==(const Framework& other) const;

 private:
  static std::uint64_t key(ArgumentId a, ArgumentId b) {
    return (static_cast<std::uint64_t>(a.value) << 32) | b.value;
  }

  std::vector<std::uint32_t> tags_;
  std::vector<std::vector<ArgumentId>> in_;
  std::vector<std::vector<ArgumentId>> out_;
  std::vector<std::pair<ArgumentId, ArgumentId>> log_;
  std::unordered_set<std::uint64_t> pairs_;
};

// Line-oriented text form for differential testing against external
// solvers:  `arg <id> <tag>` and `att <from> <to>`.
void write_dump(std::ostream& out, const Framework& f);
Framework read_dump(std::istream& in);

}  // namespace sift::aaf
