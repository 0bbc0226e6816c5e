#pragma once

#include <stdexcept>
#include <string>

namespace oapt {

// Error taxonomy, mapped to CLI exit codes: argument -> 2, data -> 3, numeric -> 4.
struct ArgumentError : std::runtime_error {
  explicit ArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : ArgumentError {
  explicit DimensionError(const std::string& msg) : ArgumentError(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated internal precondition between cooperating components.
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace oapt
