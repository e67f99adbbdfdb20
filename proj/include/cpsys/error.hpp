#ifndef CPSYS_ERROR_HPP_
#define CPSYS_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cps {

// Invalid arguments, bad configuration, or a violated precondition.
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or inconsistent input data (files, records, samples).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A numerical procedure could not produce a result (rank deficiency,
// leverage equal to one, ...).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Process exit codes used by the command-line driver.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

}  // namespace cps

#endif  // CPSYS_ERROR_HPP_
