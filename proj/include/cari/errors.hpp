#pragma once

#include <stdexcept>
#include <string>

namespace cari {

// Process exit codes used by the command line tool.  Library code signals the
// same conditions by throwing the exception types below.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDataError = 3;
inline constexpr int kExitNumericError = 4;

// Invalid or inconsistent configuration (bad flag value, impossible shape
// request, unknown method name, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or unusable input data (bad CSV, missing file, empty split, ...).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric divergence at runtime (non-finite loss, singular statistics, ...).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cari
