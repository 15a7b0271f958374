#pragma once

#include <stdexcept>
#include <string>

namespace maclearn {

// Invalid user-supplied configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse: a precondition of an operation was violated.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Training diverged or produced non-finite values (CLI exit code 3).
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Corrupt or mismatching artifact files (CLI exit code 4).
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace maclearn
