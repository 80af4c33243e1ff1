#pragma once

#include <stdexcept>
#include <string>

namespace u4d {

// Shape or extent disagreement between operands.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value, unknown enum, or malformed config file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Lookup of a parameter or adapter target that does not exist.
class NameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// backward() called on a graph that has already been differentiated.
class TapeConsumedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint failed magic, version, CRC or structural validation.
class CorruptCheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace u4d
