#pragma once

#include <stdexcept>
#include <string>

namespace dualls {

// Bad experiment or model configuration (dimension mismatch, invalid ranges).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad runtime input (goal off the grid, malformed file, shape mismatch).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated internal contract; indicates a bug in the caller.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dualls
