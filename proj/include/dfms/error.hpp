#pragma once

#include <stdexcept>
#include <string>

namespace dfms {

/// Raised when an input violates a documented invariant. The message names
/// the violated invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A victim query batch would push the ledger past its budget. The ledger is
/// left unchanged when this is thrown.
class BudgetExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dfms
