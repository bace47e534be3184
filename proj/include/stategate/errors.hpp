#pragma once

#include <stdexcept>
#include <string>

namespace stategate {

// Raised for shape mismatches, invalid parameters and bad config keys.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Raised when a streaming session is driven out of order.
class StateMachineError : public std::logic_error {
 public:
  explicit StateMachineError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace stategate
