#pragma once

#include <stdexcept>
#include <string>

namespace mdrnn {

// Vector or matrix dimensions disagree with what the model configuration requires.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN or infinity where a finite number is required.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed or out-of-contract input data (logs, datasets).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint files that are corrupt, truncated, or disagree with their config.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A forward cache handed to backward() after its weights changed or for different weights.
class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mdrnn
