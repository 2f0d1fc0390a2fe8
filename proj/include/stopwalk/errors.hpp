#pragma once

#include <stdexcept>
#include <string>

namespace stopwalk {

/// Caller passed arguments that violate an operation's contract.
class usage_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A word-length search gave up before finding the element.
class unreachable_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A truncation, censoring or support budget was exceeded; the result would
/// not be trustworthy.
class budget_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stopwalk
