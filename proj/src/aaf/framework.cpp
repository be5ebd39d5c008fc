#include "sift/aaf/framework.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "sift/errors.hpp"

namespace sift::aaf {

ArgumentId Framework::add_argument(std::uint32_t tag) {
  const ArgumentId id{static_cast<std::uint32_t>(tags_.size())};
  tags_.push_back(tag);
  in_.emplace_back();
  out_.emplace_back();
  return id;
}

bool Framework::add_attack(ArgumentId from, ArgumentId to) {
  if (!contains(from) || !contains(to)) throw ContractError("attack references an unknown argument");
  if (!pairs_.insert(key(from, to)).second) return false;
  out_[from.value].push_back(to);
  in_[to.value].push_back(from);
  log_.emplace_back(from, to);
  return true;
}

bool Framework::attacks(ArgumentId from, ArgumentId to) const { return pairs_.count(key(from, to)) != 0; }

void Framework::truncate(Mark m) {
  if (m.arguments > tags_.size() || m.attacks > log_.size())
    throw ContractError("cannot truncate a framework forward");
  while (log_.size() > m.attacks) {
    const auto [from, to] = log_.back();
    log_.pop_back();
    pairs_.erase(key(from, to));
    out_[from.value].pop_back();
    in_[to.value].pop_back();
  }
  tags_.resize(m.arguments);
  in_.resize(m.arguments);
  out_.resize(m.arguments);
}

bool Framework::operator==(const Framework& other) const {
  return tags_ == other.tags_ && pairs_ == other.pairs_;
}

void write_dump(std::ostream& out, const Framework& f) {
  for (std::uint32_t a = 0; a < f.size(); ++a) out << "arg " << a << ' ' << f.tag(ArgumentId{a}) << '\n';
  for (const auto& [from, to] : f.attack_list()) out << "att " << from.value << ' ' << to.value << '\n';
}

Framework read_dump(std::istream& in) {
  Framework f;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "arg") {
      std::uint32_t id = 0, tag = 0;
      if (!(ss >> id >> tag) || id != f.size())
        throw ParseError("line " + std::to_string(lineno), "arguments must be listed densely from 0");
      f.add_argument(tag);
    } else if (kind == "att") {
      std::uint32_t from = 0, to = 0;
      if (!(ss >> from >> to) || from >= f.size() || to >= f.size())
        throw ParseError("line " + std::to_string(lineno), "bad attack");
      f.add_attack(ArgumentId{from}, ArgumentId{to});
    } else {
      throw ParseError("line " + std::to_string(lineno), "unknown record '" + kind + "'");
    }
  }
  return f;
}

}  // namespace sift::aaf
