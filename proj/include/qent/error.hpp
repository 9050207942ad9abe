#pragma once

#include <stdexcept>
#include <string>

namespace qent {

/// Invalid parameters or inputs that violate an operation's preconditions.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent data: files, tables, numeric inputs.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged (NaN/Inf loss).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kConfig = 2;
inline constexpr int kData = 3;
inline constexpr int kTraining = 4;
}  // namespace exit_code

}  // namespace qent
