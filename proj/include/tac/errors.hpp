#pragma once

#include <stdexcept>
#include <string>

namespace tac {

// Shape disagreement between tensors (message names the offending extents).
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid model/harness configuration (divisibility, factor chain, ranges).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed, truncated or mismatched checkpoint/tensor file.
struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training blew up (non-finite loss); message names the step.
struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad command-line or corpus-file usage.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tac
