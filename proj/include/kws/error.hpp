#pragma once

#include <stdexcept>
#include <string>

namespace kws {

// Data, config, and shape problems. Recoverable; the CLI reports the
// message and exits with code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf escaping an op. Aborts the run; CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kws
