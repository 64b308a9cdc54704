#pragma once

#include <stdexcept>
#include <string>

namespace odemri {

// Shape or precondition violations on in-memory values.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// File-system problems: unreadable, truncated, or corrupt artifacts.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training diverged or a checkpoint is unusable.
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace odemri
