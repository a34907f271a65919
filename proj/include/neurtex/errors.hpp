// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace neurtex {

enum class ErrorCategory { Config, Contract, Io, Sampling, Numerical };

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Contract: return "contract";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Sampling: return "sampling";
    case ErrorCategory::Numerical: return "numerical";
  }
  return "unknown";
}

/// Base of every error the library throws. The category is what the CLI
/// reports as its machine-parsable error kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorCategory::Config, w) {}
};
struct ContractViolation : Error {
  explicit ContractViolation(const std::string& w) : Error(ErrorCategory::Contract, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCategory::Io, w) {}
};
struct SamplingError : Error {
  explicit SamplingError(const std::string& w) : Error(ErrorCategory::Sampling, w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error(ErrorCategory::Numerical, w) {}
};

}  // namespace neurtex
