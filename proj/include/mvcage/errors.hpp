#pragma once

#include <stdexcept>
#include <string>

namespace mvcage {

// Error taxonomy mirrored by the CLI exit codes: config/usage problems,
// numeric or model failures, and I/O failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidArgumentError : public Error {
 public:
  explicit InvalidArgumentError(const std::string& msg) : Error(msg) {}
};

// Numeric/model failures: indefinite covariances, failed factorizations,
// degenerate posteriors, insufficient replications, and the like.
class ModelError : public Error {
 public:
  explicit ModelError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace mvcage
