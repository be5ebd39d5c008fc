#pragma once

#include <stdexcept>
#include <string>

namespace sift {

// A caller broke a documented precondition (foreign id, index gap, double
// finalize, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Reference to a name or id outside the declared universes.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed model, dataset, or tagger document. `locus` points at the
// offending field (JSON pointer) or byte offset.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string locus, const std::string& what)
      : std::runtime_error(locus.empty() ? what : locus + ": " + what),
        locus_(std::move(locus)) {}

  const std::string& locus() const noexcept { return locus_; }

 private:
  std::string locus_;
};

// A search hit its node-expansion cap. Never silently truncated.
class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Generation could not satisfy the requested shape (length, model stats).
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sift
